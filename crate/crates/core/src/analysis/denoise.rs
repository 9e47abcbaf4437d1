//! Temporal denoising ahead of residual extraction.
//!
//! The analysis only needs a grain-free reference, not a production MCTF.
//! The default strategy matches each block of the centre frame in every
//! neighbour (full search, SAD), then averages the matches weighted by how
//! well they fit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::frame::{Frame, Plane};
use crate::registry::Registry;

pub const DEFAULT_DENOISER: &str = "block-matching";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiseConfig {
    /// Registered denoiser name.
    pub method: String,
    /// Neighbours on each side of the centre frame.
    pub temporal_radius: usize,
    /// Block size for matching and blending, in luma samples.
    pub match_block: usize,
    /// Full-search range in luma samples (halved for chroma).
    pub search_range: usize,
    /// Samples around each block included in its matching cost.
    pub match_margin: usize,
    /// Weight of a perfectly matched neighbour relative to the centre.
    pub blend_strength: f64,
    /// A displaced match is taken only when the zero-motion cost exceeds
    /// this multiple of the frame's typical best-match cost.
    pub static_factor: f64,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            method: DEFAULT_DENOISER.to_string(),
            temporal_radius: 2,
            match_block: 8,
            search_range: 8,
            match_margin: 4,
            blend_strength: 1.0,
            static_factor: 2.0,
        }
    }
}

impl DenoiseConfig {
    pub fn check(&self) -> Result<(), AnalysisError> {
        let bad = |msg: String| Err(AnalysisError::Config(msg));
        if self.temporal_radius < 1 {
            return bad("temporal_radius must be at least 1".into());
        }
        if self.match_block < 2 {
            return bad(format!("match_block {} is below 2", self.match_block));
        }
        if !(self.blend_strength > 0.0 && self.blend_strength <= 1.0) {
            return bad(format!("blend_strength {} outside (0, 1]", self.blend_strength));
        }
        if !(self.static_factor >= 1.0) {
            return bad(format!("static_factor {} is below 1", self.static_factor));
        }
        Ok(())
    }
}

/// A value per block of a plane.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockGrid {
    pub block: usize,
    pub cols: usize,
    pub rows: usize,
    pub data: Vec<f64>,
}

impl BlockGrid {
    pub fn filled(width: usize, height: usize, block: usize, value: f64) -> Self {
        let cols = width.div_ceil(block);
        let rows = height.div_ceil(block);
        Self {
            block,
            cols,
            rows,
            data: vec![value; cols * rows],
        }
    }

    /// Value of the block holding sample `(x, y)`.
    pub fn at_sample(&self, x: usize, y: usize) -> f64 {
        let c = (x / self.block).min(self.cols - 1);
        let r = (y / self.block).min(self.rows - 1);
        self.data[r * self.cols + c]
    }
}

#[derive(Clone, Debug)]
pub struct DenoisedPlane {
    pub plane: Plane,
    /// Expected share of frame-to-frame independent noise variance that
    /// survives in `centre - denoised`, per block: `(1 - w_c)^2 + sum w_i^2`
    /// for normalised weights.
    pub retention: BlockGrid,
}

#[derive(Clone, Debug)]
pub struct DenoisedFrame {
    pub frame: Frame,
    pub retention: [BlockGrid; 3],
    /// The window was too short to denoise; the frame is passed through and
    /// every retention is zero.
    pub passed_through: bool,
}

pub trait TemporalDenoiser: Send + Sync {
    fn name(&self) -> &'static str;

    /// Denoises `window[center]` using the other planes of `window`.
    /// `block` and `search_range` are already scaled to this plane.
    fn denoise_plane(
        &self,
        window: &[&Plane],
        center: usize,
        block: usize,
        search_range: usize,
        cfg: &DenoiseConfig,
    ) -> DenoisedPlane;
}

/// Full-search block matching with quality-weighted averaging.
pub struct BlockMatching;

/// Co-located average of the whole window, no motion search.
pub struct TemporalMean;

#[derive(Clone, Copy)]
struct Match {
    dx: isize,
    dy: isize,
    cost: u64,
}

/// Sum of absolute differences over the `w x h` rectangles at `(ax, ay)` in
/// `a` and `(bx, by)` in `b`, abandoned once it passes `limit`.
#[inline]
#[allow(clippy::too_many_arguments)]
fn sad(a: &Plane, ax: usize, ay: usize, b: &Plane, bx: usize, by: usize, w: usize, h: usize, limit: u64) -> u64 {
    let mut total = 0u64;
    for r in 0..h {
        let ra = &a.row(ay + r)[ax..ax + w];
        let rb = &b.row(by + r)[bx..bx + w];
        total += ra
            .iter()
            .zip(rb)
            .map(|(&p, &q)| u32::from(p.abs_diff(q)))
            .sum::<u32>() as u64;
        if total > limit {
            break;
        }
    }
    total
}

struct BlockGeom {
    x0: usize,
    y0: usize,
    bw: usize,
    bh: usize,
    /// Matching window (block plus margin, clipped to the plane).
    mx: usize,
    my: usize,
    mw: usize,
    mh: usize,
}

fn block_geometry(plane: &Plane, block: usize, margin: usize, bx: usize, by: usize) -> BlockGeom {
    let x0 = bx * block;
    let y0 = by * block;
    let bw = block.min(plane.width - x0);
    let bh = block.min(plane.height - y0);
    let mx = x0.saturating_sub(margin);
    let my = y0.saturating_sub(margin);
    let mw = (x0 + bw + margin).min(plane.width) - mx;
    let mh = (y0 + bh + margin).min(plane.height) - my;
    BlockGeom {
        x0,
        y0,
        bw,
        bh,
        mx,
        my,
        mw,
        mh,
    }
}

/// Zero-motion cost and best full-search match of one block against one
/// neighbour.
fn search(center: &Plane, other: &Plane, g: &BlockGeom, range: usize) -> (u64, Match) {
    let zero = sad(center, g.mx, g.my, other, g.mx, g.my, g.mw, g.mh, u64::MAX);
    let mut best = Match {
        dx: 0,
        dy: 0,
        cost: zero,
    };
    let r = range as isize;
    for dy in -r..=r {
        let y = g.my as isize + dy;
        if y < 0 || y as usize + g.mh > other.height {
            continue;
        }
        for dx in -r..=r {
            let x = g.mx as isize + dx;
            if (dx == 0 && dy == 0) || x < 0 || x as usize + g.mw > other.width {
                continue;
            }
            let cost = sad(center, g.mx, g.my, other, x as usize, y as usize, g.mw, g.mh, best.cost);
            // prefer the smaller displacement on ties
            let closer = dx.abs() + dy.abs() < best.dx.abs() + best.dy.abs();
            if cost < best.cost || (cost == best.cost && closer) {
                best = Match { dx, dy, cost };
            }
        }
    }
    (zero, best)
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mid = values.len() / 2;
    let (_, m, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// Blends the block at `g` from the centre and the matched neighbours.
/// Returns the retention factor.
fn blend_block(
    window: &[&Plane],
    center: usize,
    g: &BlockGeom,
    matches: &[(Match, f64)],
    out: &mut [u16],
    out_width: usize,
    max: u16,
) -> f64 {
    let total: f64 = 1.0 + matches.iter().map(|(_, w)| w).sum::<f64>();
    for r in 0..g.bh {
        let y = g.y0 + r;
        for c in 0..g.bw {
            let x = g.x0 + c;
            let mut acc = f64::from(window[center].get(x, y));
            for (i, (m, w)) in matches.iter().enumerate() {
                if *w == 0.0 {
                    continue;
                }
                let plane = window[if i < center { i } else { i + 1 }];
                let sx = (x as isize + m.dx) as usize;
                let sy = (y as isize + m.dy) as usize;
                acc += w * f64::from(plane.get(sx, sy));
            }
            let v = (acc / total).round().clamp(0.0, f64::from(max));
            out[(y - g.y0) * out_width + c] = v as u16;
        }
    }
    let wc = 1.0 / total;
    (1.0 - wc).powi(2) + matches.iter().map(|(_, w)| (w / total).powi(2)).sum::<f64>()
}

/// Shared driver: per-block matches for every neighbour, then a parallel
/// blend over block rows.
fn denoise_with<F>(
    window: &[&Plane],
    center: usize,
    block: usize,
    cfg: &DenoiseConfig,
    margin: usize,
    find: F,
) -> DenoisedPlane
where
    F: Fn(&Plane, &BlockGeom, usize) -> (Match, f64) + Sync,
{
    let c = window[center];
    let cols = c.width.div_ceil(block);
    let rows = c.height.div_ceil(block);
    let max = window
        .iter()
        .flat_map(|p| p.data.iter().copied())
        .max()
        .unwrap_or(0)
        .max(1);
    let neighbours: Vec<usize> = (0..window.len()).filter(|&i| i != center).collect();
    // per neighbour, per block: chosen match and raw weight
    let per_neighbour: Vec<Vec<(Match, f64)>> = neighbours
        .iter()
        .map(|&n| {
            (0..rows * cols)
                .into_par_iter()
                .map(|i| {
                    let g = block_geometry(c, block, margin, i % cols, i / cols);
                    find(window[n], &g, n)
                })
                .collect()
        })
        .collect();
    let mut plane = Plane::new(c.width, c.height);
    let mut retention = BlockGrid::filled(c.width, c.height, block, 0.0);
    let w = c.width;
    let row_ret: Vec<Vec<f64>> = plane
        .data
        .par_chunks_mut(block * w)
        .enumerate()
        .map(|(by, band)| {
            (0..cols)
                .map(|bx| {
                    let g = block_geometry(c, block, margin, bx, by);
                    let matches: Vec<(Match, f64)> = per_neighbour
                        .iter()
                        .map(|v| {
                            let (m, q) = v[by * cols + bx];
                            (m, q * cfg.blend_strength)
                        })
                        .collect();
                    let mut tmp = vec![0u16; g.bw * g.bh];
                    let ret = blend_block(window, center, &g, &matches, &mut tmp, g.bw, max);
                    for r in 0..g.bh {
                        band[r * w + g.x0..][..g.bw].copy_from_slice(&tmp[r * g.bw..][..g.bw]);
                    }
                    ret
                })
                .collect()
        })
        .collect();
    for (by, r) in row_ret.into_iter().enumerate() {
        retention.data[by * cols..(by + 1) * cols].copy_from_slice(&r);
    }
    DenoisedPlane { plane, retention }
}

impl TemporalDenoiser for BlockMatching {
    fn name(&self) -> &'static str {
        "block-matching"
    }

    fn denoise_plane(
        &self,
        window: &[&Plane],
        center: usize,
        block: usize,
        search_range: usize,
        cfg: &DenoiseConfig,
    ) -> DenoisedPlane {
        let c = window[center];
        let cols = c.width.div_ceil(block);
        let rows = c.height.div_ceil(block);
        let margin = cfg.match_margin;
        // first pass: raw search results per neighbour
        let searched: Vec<Vec<(u64, Match)>> = (0..window.len())
            .map(|n| {
                if n == center {
                    return Vec::new();
                }
                (0..rows * cols)
                    .into_par_iter()
                    .map(|i| {
                        let g = block_geometry(c, block, margin, i % cols, i / cols);
                        search(c, window[n], &g, search_range)
                    })
                    .collect()
            })
            .collect();
        // typical best-match cost per sample: the noise floor of each pair
        let floors: Vec<f64> = searched
            .iter()
            .map(|v| {
                let mut per_sample: Vec<f64> = v
                    .iter()
                    .enumerate()
                    .map(|(i, (_, m))| {
                        let g = block_geometry(c, block, margin, i % cols, i / cols);
                        m.cost as f64 / (g.mw * g.mh) as f64
                    })
                    .collect();
                median(&mut per_sample)
            })
            .collect();
        let reference = floors
            .iter()
            .enumerate()
            .filter(|(n, _)| *n != center)
            .map(|(_, &f)| f)
            .fold(f64::INFINITY, f64::min);
        denoise_with(window, center, block, cfg, margin, |_, g, n| {
            let i = (g.y0 / block) * cols + g.x0 / block;
            let (zero, best) = searched[n][i];
            let area = (g.mw * g.mh) as f64;
            // a block that already matches within the noise floor stays put,
            // so that noise is never mistaken for motion
            let chosen = if zero as f64 / area <= cfg.static_factor * floors[n] {
                Match {
                    dx: 0,
                    dy: 0,
                    cost: zero,
                }
            } else {
                best
            };
            let cost = chosen.cost as f64 / area;
            let limit = cfg.static_factor * reference;
            let q = if cost <= limit {
                1.0
            } else {
                (limit / cost).powi(2)
            };
            (chosen, q)
        })
    }
}

impl TemporalDenoiser for TemporalMean {
    fn name(&self) -> &'static str {
        "temporal-mean"
    }

    fn denoise_plane(
        &self,
        window: &[&Plane],
        center: usize,
        block: usize,
        _search_range: usize,
        cfg: &DenoiseConfig,
    ) -> DenoisedPlane {
        denoise_with(window, center, block, cfg, 0, |_, _, _| {
            (
                Match {
                    dx: 0,
                    dy: 0,
                    cost: 0,
                },
                1.0,
            )
        })
    }
}

pub fn denoisers() -> Registry<dyn TemporalDenoiser> {
    let mut reg: Registry<dyn TemporalDenoiser> = Registry::new("temporal denoiser");
    reg.register(
        "block-matching",
        "full-search SAD block matching, quality-weighted temporal average",
        || Box::new(BlockMatching),
    );
    reg.register(
        "temporal-mean",
        "co-located average over the window, no motion compensation",
        || Box::new(TemporalMean),
    );
    reg
}

/// Denoises `window[center]` plane by plane with the configured strategy.
/// Windows shorter than three frames are passed through with zero
/// retention and a flag.
pub fn temporal_denoise(
    window: &[Frame],
    center: usize,
    cfg: &DenoiseConfig,
) -> Result<DenoisedFrame, AnalysisError> {
    cfg.check()?;
    let denoiser = denoisers().create(&cfg.method)?;
    let target = window
        .get(center)
        .ok_or_else(|| AnalysisError::Config("denoise window centre out of range".into()))?;
    for f in window {
        if f.format.width != target.format.width
            || f.format.height != target.format.height
            || f.format.bit_depth != target.format.bit_depth
        {
            return Err(AnalysisError::FormatMismatch);
        }
    }
    let dims = |i: usize| target.format.plane_dims(i);
    if window.len() < 3 {
        log::warn!("denoise window holds {} frame(s); passing through", window.len());
        let retention = [0, 1, 2].map(|i| {
            let (w, h) = dims(i);
            BlockGrid::filled(w, h, if i == 0 { cfg.match_block } else { cfg.match_block.div_ceil(2) }, 0.0)
        });
        return Ok(DenoisedFrame {
            frame: target.clone(),
            retention,
            passed_through: true,
        });
    }
    let planes = [0, 1, 2].map(|i| {
        let refs: Vec<&Plane> = window.iter().map(|f| &f.planes[i]).collect();
        let (block, range) = if i == 0 {
            (cfg.match_block, cfg.search_range)
        } else {
            (cfg.match_block.div_ceil(2), cfg.search_range.div_ceil(2))
        };
        denoiser.denoise_plane(&refs, center, block, range, cfg)
    });
    let [y, u, v] = planes;
    Ok(DenoisedFrame {
        frame: Frame {
            format: target.format,
            planes: [y.plane, u.plane, v.plane],
        },
        retention: [y.retention, u.retention, v.retention],
        passed_through: false,
    })
}
