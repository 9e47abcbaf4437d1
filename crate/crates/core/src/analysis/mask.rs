//! Selection of smooth blocks where grain can be measured.
//!
//! Edge pixels are those whose larger forward difference (right or down)
//! exceeds the threshold, in 8-bit units; both samples of the pair are
//! marked. The edge map is dilated by a square of radius `dilation_radius`
//! and every block touching it is dropped.

use super::AnalysisConfig;
use crate::frame::{Frame, Plane};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockMask {
    pub block: usize,
    pub cols: usize,
    pub rows: usize,
    /// Row-major, true = keep.
    pub keep: Vec<bool>,
}

impl BlockMask {
    pub fn kept(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    /// Fraction of blocks kept.
    pub fn coverage(&self) -> f64 {
        if self.keep.is_empty() {
            return 0.0;
        }
        self.kept() as f64 / self.keep.len() as f64
    }

    pub fn is_kept(&self, bx: usize, by: usize) -> bool {
        self.keep[by * self.cols + bx]
    }
}

/// Summed-area table of the edge map, one extra leading row and column.
fn edge_integral(plane: &Plane, bit_depth: u8, threshold: f64) -> Vec<u32> {
    let (w, h) = (plane.width, plane.height);
    let scale = f64::from(1u32 << (bit_depth - 8));
    let limit = threshold * scale;
    let mut edge = vec![false; w * h];
    for y in 0..h {
        let row = plane.row(y);
        for x in 0..w {
            let v = f64::from(row[x]);
            if x + 1 < w && (f64::from(row[x + 1]) - v).abs() > limit {
                edge[y * w + x] = true;
                edge[y * w + x + 1] = true;
            }
            if y + 1 < h && (f64::from(plane.get(x, y + 1)) - v).abs() > limit {
                edge[y * w + x] = true;
                edge[(y + 1) * w + x] = true;
            }
        }
    }
    let stride = w + 1;
    let mut sat = vec![0u32; stride * (h + 1)];
    for y in 0..h {
        let mut run = 0u32;
        for x in 0..w {
            run += u32::from(edge[y * w + x]);
            sat[(y + 1) * stride + x + 1] = sat[y * stride + x + 1] + run;
        }
    }
    sat
}

pub fn mask_plane(plane: &Plane, bit_depth: u8, cfg: &AnalysisConfig) -> BlockMask {
    let (w, h) = (plane.width, plane.height);
    let b = cfg.block_size;
    let cols = w.div_ceil(b);
    let rows = h.div_ceil(b);
    let sat = edge_integral(plane, bit_depth, cfg.edge_threshold);
    let stride = w + 1;
    let r = cfg.dilation_radius;
    let mut keep = Vec::with_capacity(cols * rows);
    for by in 0..rows {
        for bx in 0..cols {
            // the block grown by the dilation radius, clipped
            let x0 = (bx * b).saturating_sub(r);
            let y0 = (by * b).saturating_sub(r);
            let x1 = ((bx + 1) * b + r).min(w);
            let y1 = ((by + 1) * b + r).min(h);
            let count = sat[y1 * stride + x1] + sat[y0 * stride + x0]
                - sat[y0 * stride + x1]
                - sat[y1 * stride + x0];
            keep.push(count == 0);
        }
    }
    BlockMask {
        block: b,
        cols,
        rows,
        keep,
    }
}

/// One mask per plane, chroma on its own grid.
pub fn mask_flat_regions(frame: &Frame, cfg: &AnalysisConfig) -> [BlockMask; 3] {
    let bd = frame.format.bit_depth;
    [0, 1, 2].map(|i| mask_plane(&frame.planes[i], bd, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::VideoFormat;

    fn luma(w: usize, h: usize, f: impl Fn(usize, usize) -> u16) -> Plane {
        let mut p = Plane::new(w, h);
        for y in 0..h {
            for x in 0..w {
                p.set(x, y, f(x, y));
            }
        }
        p
    }

    #[test]
    fn constant_frame_keeps_everything() {
        let format = VideoFormat::new(64, 48, 8).unwrap();
        let masks = mask_flat_regions(&Frame::filled(format, [77, 128, 128]), &AnalysisConfig::default());
        assert!(masks.iter().all(|m| m.coverage() == 1.0));
    }

    #[test]
    fn split_drops_boundary_blocks_only() {
        let cfg = AnalysisConfig::default();
        let p = luma(64, 32, |x, _| if x < 32 { 0 } else { 255 });
        let m = mask_plane(&p, 8, &cfg);
        for by in 0..m.rows {
            for bx in 0..m.cols {
                assert_eq!(m.is_kept(bx, by), bx != 3 && bx != 4, "block ({bx},{by})");
            }
        }
        assert_eq!(m.kept(), 6 * 4);
    }

    #[test]
    fn dilation_reaches_neighbours() {
        let cfg = AnalysisConfig {
            dilation_radius: 9,
            ..AnalysisConfig::default()
        };
        let p = luma(64, 8, |x, _| if x < 32 { 0 } else { 255 });
        let m = mask_plane(&p, 8, &cfg);
        let kept: Vec<bool> = (0..8).map(|bx| m.is_kept(bx, 0)).collect();
        assert_eq!(kept, [true, true, false, false, false, false, true, true]);
    }

    #[test]
    fn pixel_checkerboard_drops_all() {
        let p = luma(40, 24, |x, y| if (x + y) % 2 == 0 { 0 } else { 255 });
        assert_eq!(mask_plane(&p, 8, &AnalysisConfig::default()).kept(), 0);
    }

    #[test]
    fn threshold_is_in_eight_bit_units() {
        let cfg = AnalysisConfig::default();
        let step = (cfg.edge_threshold as u16 + 1) * 4;
        let p = luma(32, 8, |x, _| if x < 16 { 100 } else { 100 + step });
        assert_eq!(mask_plane(&p, 10, &cfg).kept(), 2);
        let small = (cfg.edge_threshold as u16 - 1) * 4;
        let p = luma(32, 8, |x, _| if x < 16 { 100 } else { 100 + small });
        assert_eq!(mask_plane(&p, 10, &cfg).kept(), 4);
    }
}
