//! Residual extraction and per-block grain measurement.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::denoise::BlockGrid;
use super::mask::BlockMask;
use super::{AnalysisConfig, AnalysisError};
use crate::dct::FloatDct;
use crate::frame::{Frame, Plane};

/// Number of uniform intensity bins over `[0, 255]`.
pub const INTENSITY_BINS: usize = 32;
/// Blocks whose denoiser retention falls below this carry no usable grain.
const MIN_RETENTION: f64 = 0.05;

/// Signed `original - denoised` samples of one plane, native bit depth.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResidualPlane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<i32>,
}

impl ResidualPlane {
    pub fn get(&self, x: usize, y: usize) -> i32 {
        self.data[y * self.width + x]
    }
}

pub fn extract_residual(original: &Frame, denoised: &Frame) -> Result<[ResidualPlane; 3], AnalysisError> {
    if original.format != denoised.format {
        return Err(AnalysisError::FormatMismatch);
    }
    original.check_shape()?;
    denoised.check_shape()?;
    Ok([0, 1, 2].map(|i| {
        let (o, d) = (&original.planes[i], &denoised.planes[i]);
        ResidualPlane {
            width: o.width,
            height: o.height,
            data: o
                .data
                .iter()
                .zip(&d.data)
                .map(|(&a, &b)| i32::from(a) - i32::from(b))
                .collect(),
        }
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariancePoint {
    /// Mean denoised intensity, 8-bit domain.
    pub mean_intensity: f64,
    /// Grain variance, 8-bit sample units squared.
    pub grain_variance: f64,
    /// Number of blocks behind the point.
    pub weight: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VariancePoints {
    /// Sorted by strictly increasing intensity.
    pub points: Vec<VariancePoint>,
}

impl VariancePoints {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.points.iter().map(|p| p.weight).sum()
    }

    /// Weighted mean of the per-point standard deviations.
    pub fn mean_sigma(&self) -> f64 {
        let w = self.total_weight();
        if w == 0.0 {
            return 0.0;
        }
        self.points
            .iter()
            .map(|p| p.weight * p.grain_variance.sqrt())
            .sum::<f64>()
            / w
    }

    /// Multiplies every variance by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|p| VariancePoint {
                    grain_variance: p.grain_variance * factor,
                    ..*p
                })
                .collect(),
        }
    }
}

/// Mean AC energy distribution of the measured blocks, each block
/// normalised to unit AC energy. Index `v * size + u`, `u` horizontal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub size: usize,
    pub energy: Vec<f64>,
    pub blocks: u64,
}

impl Spectrum {
    pub fn new(size: usize) -> Self {
        Self {
            size,
            energy: vec![0.0; size * size],
            blocks: 0,
        }
    }

    /// Adds one block of coefficients (DC ignored). Blocks without AC energy
    /// are skipped.
    pub fn add_block(&mut self, coef: &[f64]) {
        let ac: f64 = coef.iter().skip(1).map(|c| c * c).sum();
        if ac <= 0.0 {
            return;
        }
        for (e, c) in self.energy.iter_mut().zip(coef).skip(1) {
            *e += c * c / ac;
        }
        self.blocks += 1;
    }

    pub fn merge(&mut self, other: &Spectrum) {
        for (a, b) in self.energy.iter_mut().zip(&other.energy) {
            *a += b;
        }
        self.blocks += other.blocks;
    }

    /// Energy centroids of the horizontal and vertical marginals, each
    /// normalised to `[0, 1]` by the highest frequency index.
    pub fn centroids(&self) -> Option<(f64, f64)> {
        let n = self.size;
        let total: f64 = self.energy.iter().sum();
        if total <= 0.0 {
            return None;
        }
        let (mut h, mut v) = (0.0, 0.0);
        for y in 0..n {
            for x in 0..n {
                let e = self.energy[y * n + x];
                h += x as f64 * e;
                v += y as f64 * e;
            }
        }
        let top = (n - 1) as f64;
        Some((h / total / top, v / total / top))
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct BinAcc {
    blocks: u64,
    intensity: f64,
    variance: f64,
}

/// Per-plane accumulation of block measurements.
#[derive(Clone, Debug)]
pub struct PlaneMeasurement {
    bins: [BinAcc; INTENSITY_BINS],
    pub spectrum: Spectrum,
    pub blocks_measured: u64,
}

impl PlaneMeasurement {
    pub fn new(block: usize) -> Self {
        Self {
            bins: [BinAcc::default(); INTENSITY_BINS],
            spectrum: Spectrum::new(block),
            blocks_measured: 0,
        }
    }

    fn merge(&mut self, other: &PlaneMeasurement) {
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            a.blocks += b.blocks;
            a.intensity += b.intensity;
            a.variance += b.variance;
        }
        self.spectrum.merge(&other.spectrum);
        self.blocks_measured += other.blocks_measured;
    }

    /// Bin averages, dropping bins with fewer than `min_blocks` blocks.
    pub fn points(&self, min_blocks: u64) -> VariancePoints {
        VariancePoints {
            points: self
                .bins
                .iter()
                .filter(|b| b.blocks > 0 && b.blocks >= min_blocks)
                .map(|b| VariancePoint {
                    mean_intensity: b.intensity / b.blocks as f64,
                    grain_variance: b.variance / b.blocks as f64,
                    weight: b.blocks as f64,
                })
                .collect(),
        }
    }
}

/// Transforms every kept block of `residual` and accumulates its AC variance
/// (`sum of squared AC coefficients / (n^2 - 1)`, the unbiased spatial
/// variance for an orthonormal DCT) under the mean intensity of the
/// denoised block. Variances are divided by the denoiser's retention so
/// that they estimate the grain itself. All values are in the 8-bit domain.
pub fn measure_variance(
    residual: &ResidualPlane,
    mask: &BlockMask,
    denoised: &Plane,
    retention: &BlockGrid,
    bit_depth: u8,
    cfg: &AnalysisConfig,
) -> PlaneMeasurement {
    let n = cfg.block_size;
    let dct = FloatDct::new(n);
    let scale = f64::from(1u32 << (bit_depth - 8));
    let full_cols = residual.width / n;
    let full_rows = residual.height / n;
    let rows: Vec<PlaneMeasurement> = (0..full_rows)
        .into_par_iter()
        .map(|by| {
            let mut acc = PlaneMeasurement::new(n);
            let mut block = vec![0.0; n * n];
            let mut coef = vec![0.0; n * n];
            for bx in 0..full_cols {
                if !mask.is_kept(bx, by) {
                    continue;
                }
                let (x0, y0) = (bx * n, by * n);
                let ret = retention.at_sample(x0 + n / 2, y0 + n / 2);
                if ret < MIN_RETENTION {
                    continue;
                }
                let mut intensity = 0.0;
                for r in 0..n {
                    for c in 0..n {
                        block[r * n + c] = f64::from(residual.get(x0 + c, y0 + r)) / scale;
                        intensity += f64::from(denoised.get(x0 + c, y0 + r));
                    }
                }
                let intensity = (intensity / (n * n) as f64 / scale).clamp(0.0, 255.0);
                dct.forward_2d(&block, &mut coef);
                let variance =
                    coef.iter().skip(1).map(|c| c * c).sum::<f64>() / (n * n - 1) as f64 / ret;
                let bin = ((intensity as usize) * INTENSITY_BINS / 256).min(INTENSITY_BINS - 1);
                let b = &mut acc.bins[bin];
                b.blocks += 1;
                b.intensity += intensity;
                b.variance += variance;
                acc.spectrum.add_block(&coef);
                acc.blocks_measured += 1;
            }
            acc
        })
        .collect();
    let mut total = PlaneMeasurement::new(n);
    for r in &rows {
        total.merge(r);
    }
    total
}
