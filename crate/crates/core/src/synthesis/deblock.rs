//! Smoothing of synthetic grain across the 8x8 placement seams, applied to
//! the grain plane before it is added to the picture.

use crate::registry::Registry;

pub const DEFAULT_DEBLOCKER: &str = "vertical";

pub trait GrainDeblocker: Send + Sync {
    fn name(&self) -> &'static str;

    /// Filters `grain` (row-major, `width x height`) in place.
    fn apply(&self, grain: &mut [i16], width: usize, height: usize);

    /// True if the filter only mixes samples within a row, so each row can
    /// be filtered on its own (`height = 1`).
    fn row_local(&self) -> bool {
        false
    }

    /// Filters one row of grain from `src` into `dst`. Only meaningful when
    /// [`row_local`](Self::row_local) holds.
    fn filter_row(&self, src: &[i16], dst: &mut [i16]) {
        dst.copy_from_slice(src);
        self.apply(dst, dst.len(), 1);
    }

    /// True if the filter never changes anything.
    fn is_identity(&self) -> bool {
        false
    }
}

/// Leaves the grain untouched.
pub struct NoDeblock;

/// `[1 2 1] / 4` across every vertical seam, on the two columns touching it.
pub struct VerticalSeams;

/// Vertical seams first, then the same taps across horizontal seams.
pub struct AllSeams;

#[inline]
fn smooth(a: i16, b: i16, c: i16) -> i16 {
    ((i32::from(a) + 2 * i32::from(b) + i32::from(c) + 2) >> 2) as i16
}

fn filter_vertical_seams(grain: &mut [i16], width: usize) {
    for row in grain.chunks_exact_mut(width) {
        let mut chunks = row.chunks_exact_mut(8);
        let Some(mut prev) = chunks.next() else {
            continue;
        };
        for cur in &mut chunks {
            let (a, b, c, d) = (prev[6], prev[7], cur[0], cur[1]);
            prev[7] = smooth(a, b, c);
            cur[0] = smooth(b, c, d);
            prev = cur;
        }
        let tail = chunks.into_remainder();
        if let Some(&c) = tail.first() {
            // a one-sample tail repeats itself as the outer tap
            let d = tail.get(1).copied().unwrap_or(c);
            let (a, b) = (prev[6], prev[7]);
            prev[7] = smooth(a, b, c);
            tail[0] = smooth(b, c, d);
        }
    }
}

/// [`filter_vertical_seams`] for a single row, reading `src` and writing
/// `dst`.
fn vertical_seams_row(src: &[i16], dst: &mut [i16]) {
    dst.copy_from_slice(src);
    let w = src.len();
    if w <= 8 {
        return;
    }
    // seams with two samples on each side
    let inner = (w - 2) / 8;
    for (k, taps) in src[6..].windows(4).step_by(8).take(inner).enumerate() {
        let (a, b, c, d) = (taps[0], taps[1], taps[2], taps[3]);
        let x = 8 * (k + 1);
        let pair: &mut [i16; 2] = (&mut dst[x - 1..x + 1]).try_into().unwrap();
        pair[0] = smooth(a, b, c);
        pair[1] = smooth(b, c, d);
    }
    // a last seam with a single sample after it
    let x = 8 * (inner + 1);
    if x < w {
        dst[x - 1] = smooth(src[x - 2], src[x - 1], src[x]);
        dst[x] = smooth(src[x - 1], src[x], src[x]);
    }
}

fn filter_horizontal_seams(grain: &mut [i16], width: usize, height: usize) {
    let mut y = 8;
    while y < height {
        let below = (y + 1).min(height - 1);
        for x in 0..width {
            let a = grain[(y - 2) * width + x];
            let b = grain[(y - 1) * width + x];
            let c = grain[y * width + x];
            let d = grain[below * width + x];
            grain[(y - 1) * width + x] = smooth(a, b, c);
            grain[y * width + x] = smooth(b, c, d);
        }
        y += 8;
    }
}

impl GrainDeblocker for NoDeblock {
    fn name(&self) -> &'static str {
        "none"
    }

    fn row_local(&self) -> bool {
        true
    }

    fn apply(&self, _grain: &mut [i16], _width: usize, _height: usize) {}

    fn filter_row(&self, src: &[i16], dst: &mut [i16]) {
        dst.copy_from_slice(src);
    }

    fn is_identity(&self) -> bool {
        true
    }
}

impl GrainDeblocker for VerticalSeams {
    fn name(&self) -> &'static str {
        "vertical"
    }

    fn row_local(&self) -> bool {
        true
    }

    fn apply(&self, grain: &mut [i16], width: usize, _height: usize) {
        filter_vertical_seams(grain, width);
    }

    fn filter_row(&self, src: &[i16], dst: &mut [i16]) {
        vertical_seams_row(src, dst);
    }
}

impl GrainDeblocker for AllSeams {
    fn name(&self) -> &'static str {
        "both"
    }

    fn apply(&self, grain: &mut [i16], width: usize, height: usize) {
        filter_vertical_seams(grain, width);
        filter_horizontal_seams(grain, width, height);
    }
}

pub fn deblockers() -> Registry<dyn GrainDeblocker> {
    let mut reg: Registry<dyn GrainDeblocker> = Registry::new("deblocking filter");
    reg.register("none", "no seam smoothing", || Box::new(NoDeblock));
    reg.register(
        "vertical",
        "[1 2 1]/4 on the two columns at each vertical 8x8 seam",
        || Box::new(VerticalSeams),
    );
    reg.register(
        "both",
        "[1 2 1]/4 across vertical then horizontal 8x8 seams",
        || Box::new(AllSeams),
    );
    reg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_plane_unchanged() {
        for name in deblockers().names() {
            let mut g = vec![-7i16; 24 * 16];
            deblockers().create(name).unwrap().apply(&mut g, 24, 16);
            assert!(g.iter().all(|&v| v == -7), "{name}");
        }
    }

    #[test]
    fn step_across_seam_shrinks() {
        let (w, h) = (16, 2);
        let mut g: Vec<i16> = (0..w * h).map(|i| if i % w < 8 { 0 } else { 40 }).collect();
        VerticalSeams.apply(&mut g, w, h);
        let step = g[8] - g[7];
        assert!(step.abs() < 40);
        assert_eq!((g[7], g[8]), (10, 30));
        // interior samples untouched
        assert_eq!(g[6], 0);
        assert_eq!(g[9], 40);
    }

    #[test]
    fn row_filter_matches_plane_filter() {
        let mut seed = 1u32;
        for w in 1..80 {
            let src: Vec<i16> = (0..w)
                .map(|_| {
                    seed = seed.wrapping_mul(1_103_515_245).wrapping_add(12_345);
                    (seed >> 16) as i16 % 600
                })
                .collect();
            let mut expect = src.clone();
            filter_vertical_seams(&mut expect, w);
            let mut got = vec![0; w];
            VerticalSeams.filter_row(&src, &mut got);
            assert_eq!(got, expect, "width {w}");
        }
    }

    #[test]
    fn none_is_identity() {
        let mut g: Vec<i16> = (0..64).map(|i| (i * 13 % 17) as i16 - 8).collect();
        let orig = g.clone();
        NoDeblock.apply(&mut g, 16, 4);
        assert_eq!(g, orig);
    }

    #[test]
    fn horizontal_seams_only_in_both() {
        let (w, h) = (8, 16);
        let mut g: Vec<i16> = (0..w * h).map(|i| if i / w < 8 { 0 } else { 40 }).collect();
        let orig = g.clone();
        VerticalSeams.apply(&mut g, w, h);
        assert_eq!(g, orig);
        AllSeams.apply(&mut g, w, h);
        assert_eq!(g[7 * w], 10);
        assert_eq!(g[8 * w], 30);
    }
}
