//! Polynomial smoothing of the grain strength curve and its Lloyd-Max
//! quantization into intensity intervals.

use nalgebra::{DMatrix, DVector};

use super::measure::{VariancePoints, INTENSITY_BINS};

const LLOYD_MAX_ITERATIONS: usize = 100;
const LLOYD_MAX_CONVERGENCE: f64 = 0.5;

/// Polynomial in `t = intensity / 255`, lowest order first.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    pub coefficients: Vec<f64>,
}

impl Polynomial {
    pub fn constant(c: f64) -> Self {
        Self {
            coefficients: vec![c],
        }
    }

    pub fn eval(&self, intensity: f64) -> f64 {
        let t = intensity / 255.0;
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }
}

/// Weighted least-squares fit of `sqrt(variance)` against intensity.
/// Returns `None` when there are fewer than `order + 1` points.
pub fn fit_sigma_curve(points: &VariancePoints, order: usize) -> Option<Polynomial> {
    let n = points.points.len();
    if n < order + 1 {
        return None;
    }
    let mut a = DMatrix::<f64>::zeros(n, order + 1);
    let mut b = DVector::<f64>::zeros(n);
    for (i, p) in points.points.iter().enumerate() {
        let w = p.weight.sqrt();
        let t = p.mean_intensity / 255.0;
        let mut x = 1.0;
        for j in 0..=order {
            a[(i, j)] = w * x;
            x *= t;
        }
        b[i] = w * p.grain_variance.max(0.0).sqrt();
    }
    let coef = a.svd(true, true).solve(&b, 1e-12).ok()?;
    Some(Polynomial {
        coefficients: coef.iter().copied().collect(),
    })
}

/// Intensity span covered by the occupied bins, inclusive.
pub fn occupied_range(points: &VariancePoints) -> Option<(u8, u8)> {
    let width = 256 / INTENSITY_BINS;
    let bin = |i: f64| ((i as usize) / width).min(INTENSITY_BINS - 1);
    let first = points.points.first()?;
    let last = points.points.last()?;
    let lo = bin(first.mean_intensity) * width;
    let hi = bin(last.mean_intensity) * width + width - 1;
    Some((lo as u8, hi as u8))
}

/// Scalar quantizer: `levels` ascending, samples mapped to the nearest level.
#[derive(Clone, Debug, PartialEq)]
pub struct Quantizer {
    pub levels: Vec<f64>,
}

impl Quantizer {
    /// Nearest level, ties to the lower one.
    pub fn index(&self, x: f64) -> usize {
        let mut best = 0;
        for (i, &l) in self.levels.iter().enumerate().skip(1) {
            if (x - l).abs() < (x - self.levels[best]).abs() {
                best = i;
            }
        }
        best
    }

    pub fn mse(&self, samples: &[f64]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        samples
            .iter()
            .map(|&x| (x - self.levels[self.index(x)]).powi(2))
            .sum::<f64>()
            / samples.len() as f64
    }
}

/// Lloyd-Max quantizer of `samples` with at most `k` levels: uniform
/// initialisation over the sample range, alternating nearest-level
/// assignment and centroid update until no level moves by more than half
/// a unit. Levels whose cell empties are dropped.
pub fn lloyd_max(samples: &[f64], k: usize) -> Quantizer {
    assert!(k >= 1);
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if samples.is_empty() || hi - lo <= 0.0 || k == 1 {
        let mean = if samples.is_empty() {
            0.0
        } else {
            samples.iter().sum::<f64>() / samples.len() as f64
        };
        return Quantizer { levels: vec![mean] };
    }
    let step = (hi - lo) / k as f64;
    let mut q = Quantizer {
        levels: (0..k).map(|i| lo + step * (i as f64 + 0.5)).collect(),
    };
    for _ in 0..LLOYD_MAX_ITERATIONS {
        let mut sum = vec![0.0; q.levels.len()];
        let mut count = vec![0usize; q.levels.len()];
        for &x in samples {
            let i = q.index(x);
            sum[i] += x;
            count[i] += 1;
        }
        let next: Vec<f64> = sum
            .iter()
            .zip(&count)
            .filter(|(_, &c)| c > 0)
            .map(|(s, &c)| s / c as f64)
            .collect();
        let moved = next.len() != q.levels.len()
            || next
                .iter()
                .zip(&q.levels)
                .any(|(a, b)| (a - b).abs() >= LLOYD_MAX_CONVERGENCE);
        q.levels = next;
        if !moved {
            break;
        }
    }
    q
}

/// A run of consecutive intensities sharing one quantizer level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub lower: u8,
    pub upper: u8,
    pub level: f64,
}

/// Contiguous runs of `curve` (sampled at `start, start + 1, ...`) mapped
/// through `q`.
pub fn runs(curve: &[f64], start: u8, q: &Quantizer) -> Vec<Step> {
    let mut out: Vec<Step> = Vec::new();
    for (i, &x) in curve.iter().enumerate() {
        let intensity = start + i as u8;
        let level = q.levels[q.index(x)];
        match out.last_mut() {
            Some(s) if s.level == level => s.upper = intensity,
            _ => out.push(Step {
                lower: intensity,
                upper: intensity,
                level,
            }),
        }
    }
    out
}

/// Picks the smallest level count whose RMS error stays within
/// `max(tolerance * mean, 0.5)` and whose runs fit in `max_intervals`;
/// failing that, the lowest-error admissible count.
pub fn quantize_curve(curve: &[f64], start: u8, max_intervals: usize, tolerance: f64) -> Vec<Step> {
    if curve.is_empty() {
        return Vec::new();
    }
    let mean = curve.iter().sum::<f64>() / curve.len() as f64;
    let limit = (tolerance * mean.abs()).max(LLOYD_MAX_CONVERGENCE);
    let mut best: Option<(f64, Vec<Step>)> = None;
    for k in 1..=max_intervals {
        let q = lloyd_max(curve, k);
        let steps = runs(curve, start, &q);
        if steps.len() > max_intervals {
            continue;
        }
        let rms = q.mse(curve).sqrt();
        if rms <= limit {
            return steps;
        }
        if best.as_ref().is_none_or(|(e, _)| rms < *e) {
            best = Some((rms, steps));
        }
    }
    best.map(|(_, s)| s).unwrap_or_else(|| runs(curve, start, &lloyd_max(curve, 1)))
}
