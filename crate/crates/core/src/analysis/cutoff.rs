//! Cutoff frequency estimation and the grain calibration table it relies on.
//!
//! The calibration synthesizes a flat frame of grain for every cutoff pair
//! through the real synthesis path and measures it exactly as analysis
//! would: AC energy centroids of the 8x8 blocks and the ratio of the
//! measured AC variance to the nominal grain variance
//! `(sf * sigma_db / 2^(log2 + 6))^2`. Small windows of a low-pass pattern
//! lose most of their energy to the block mean, so this ratio is well below
//! one for coarse grain.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use super::denoise::BlockGrid;
use super::mask::BlockMask;
use super::measure::{extract_residual, measure_variance};
use super::{AnalysisConfig, AnalysisError};
use crate::frame::{Frame, VideoFormat};
use crate::registry::Registry;
use crate::sei::{FgcParams, Interval, IntervalModel, MAX_CUTOFF, MIN_CUTOFF};
use crate::synthesis::database::{GrainPatternDb, CUTOFF_STEPS};
use crate::synthesis::{SynthesisConfig, Synthesizer};

pub const DEFAULT_CUTOFF_ESTIMATOR: &str = "calibrated";

const CALIBRATION_SIZE: usize = 384;
const CALIBRATION_SF: i32 = 255;
const CALIBRATION_LOG2: u8 = 4;
const CALIBRATION_LEVEL: u16 = 128;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub h_cutoff: i32,
    pub v_cutoff: i32,
    /// Normalised horizontal and vertical AC energy centroids.
    pub centroid: (f64, f64),
    /// Measured 8x8 AC variance over nominal grain variance.
    pub ac_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub sigma_db: f64,
    /// Ordered by `(h_cutoff, v_cutoff)`, `v` fastest.
    pub entries: Vec<CalibrationEntry>,
}

impl Calibration {
    /// Measures every cutoff pair on a flat 8-bit frame. `synth` decides the
    /// deblocking that the decoder is expected to apply.
    pub fn measure(db: Arc<GrainPatternDb>, synth: &SynthesisConfig) -> Result<Self, AnalysisError> {
        let sigma_db = db.sigma_db();
        let synthesizer = Synthesizer::new(
            db,
            SynthesisConfig {
                threads: 1,
                ..synth.clone()
            },
        )?;
        let format = VideoFormat::new(CALIBRATION_SIZE, CALIBRATION_SIZE, 8)?;
        let flat = Frame::filled(format, [CALIBRATION_LEVEL; 3]);
        let cfg = AnalysisConfig::default();
        let blocks = CALIBRATION_SIZE / cfg.block_size;
        let mask = BlockMask {
            block: cfg.block_size,
            cols: blocks,
            rows: blocks,
            keep: vec![true; blocks * blocks],
        };
        let retention = BlockGrid::filled(CALIBRATION_SIZE, CALIBRATION_SIZE, cfg.block_size, 1.0);
        let nominal = f64::from(CALIBRATION_SF) * sigma_db / f64::from(1u32 << (CALIBRATION_LOG2 + 6));
        let mut entries = Vec::with_capacity(CUTOFF_STEPS * CUTOFF_STEPS);
        for h in MIN_CUTOFF..=MAX_CUTOFF {
            for v in MIN_CUTOFF..=MAX_CUTOFF {
                let params = FgcParams {
                    log2_scale_factor: CALIBRATION_LOG2,
                    components: [
                        Some(IntervalModel::new(3, vec![Interval::new(0, 255, CALIBRATION_SF, (h, v))])),
                        None,
                        None,
                    ],
                    ..FgcParams::default()
                };
                let index = ((h - MIN_CUTOFF) as usize * CUTOFF_STEPS + (v - MIN_CUTOFF) as usize) as u64;
                let (grained, _) = synthesizer.blend_frame(&flat, &params, index)?;
                let [residual, _, _] = extract_residual(&grained, &flat)?;
                let m = measure_variance(&residual, &mask, &flat.planes[0], &retention, 8, &cfg);
                let points = m.points(1);
                let variance = points
                    .points
                    .iter()
                    .map(|p| p.grain_variance * p.weight)
                    .sum::<f64>()
                    / points.total_weight();
                entries.push(CalibrationEntry {
                    h_cutoff: h,
                    v_cutoff: v,
                    centroid: m.spectrum.centroids().unwrap_or((0.0, 0.0)),
                    ac_fraction: variance / (nominal * nominal),
                });
            }
        }
        Ok(Self { sigma_db, entries })
    }

    /// Shared, lazily measured calibration for a database seed and
    /// deblocking setup.
    pub fn cached(synth: &SynthesisConfig) -> Result<Arc<Self>, AnalysisError> {
        type Key = (u64, bool, String);
        static CACHE: OnceLock<Mutex<HashMap<Key, Arc<Calibration>>>> = OnceLock::new();
        let key = (synth.database_seed, synth.deblock_enabled, synth.deblock_filter.clone());
        let cache = CACHE.get_or_init(Default::default);
        if let Some(c) = cache.lock().expect("calibration cache poisoned").get(&key) {
            return Ok(c.clone());
        }
        let db = Arc::new(GrainPatternDb::build(synth.database_seed));
        let c = Arc::new(Self::measure(db, synth)?);
        cache
            .lock()
            .expect("calibration cache poisoned")
            .insert(key, c.clone());
        Ok(c)
    }

    pub fn entry(&self, h_cutoff: i32, v_cutoff: i32) -> &CalibrationEntry {
        let i = (h_cutoff - MIN_CUTOFF) as usize * CUTOFF_STEPS + (v_cutoff - MIN_CUTOFF) as usize;
        &self.entries[i]
    }
}

pub trait CutoffEstimator: Send + Sync {
    fn name(&self) -> &'static str;

    /// Maps measured normalised AC energy centroids to signalled cutoffs.
    fn estimate(&self, centroid: (f64, f64), calibration: &Calibration) -> (i32, i32);
}

/// `clamp(round(2 + 12 * f), 2, 14)` per axis.
pub struct LinearCutoff;

/// Nearest calibrated centroid pair.
pub struct CalibratedCutoff;

fn linear_axis(f: f64) -> i32 {
    let span = f64::from(MAX_CUTOFF - MIN_CUTOFF);
    ((f64::from(MIN_CUTOFF) + span * f).round() as i32).clamp(MIN_CUTOFF, MAX_CUTOFF)
}

impl CutoffEstimator for LinearCutoff {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn estimate(&self, centroid: (f64, f64), _calibration: &Calibration) -> (i32, i32) {
        (linear_axis(centroid.0), linear_axis(centroid.1))
    }
}

impl CutoffEstimator for CalibratedCutoff {
    fn name(&self) -> &'static str {
        "calibrated"
    }

    fn estimate(&self, centroid: (f64, f64), calibration: &Calibration) -> (i32, i32) {
        let dist = |e: &CalibrationEntry| (e.centroid.0 - centroid.0).powi(2) + (e.centroid.1 - centroid.1).powi(2);
        calibration
            .entries
            .iter()
            .min_by(|a, b| dist(a).total_cmp(&dist(b)))
            .map(|e| (e.h_cutoff, e.v_cutoff))
            .unwrap_or((8, 8))
    }
}

pub fn cutoff_estimators() -> Registry<dyn CutoffEstimator> {
    let mut reg: Registry<dyn CutoffEstimator> = Registry::new("cutoff estimator");
    reg.register(
        "calibrated",
        "nearest energy centroid among grain synthesized for every cutoff pair",
        || Box::new(CalibratedCutoff),
    );
    reg.register("linear", "2 + 12 x normalised energy centroid, per axis", || {
        Box::new(LinearCutoff)
    });
    reg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn calibration() -> Arc<Calibration> {
        Calibration::cached(&SynthesisConfig::default()).unwrap()
    }

    #[test]
    fn linear_mapping_endpoints() {
        let c = Calibration {
            sigma_db: 64.0,
            entries: Vec::new(),
        };
        assert_eq!(LinearCutoff.estimate((0.0, 1.0), &c), (2, 14));
        assert_eq!(LinearCutoff.estimate((0.5, 0.25), &c), (8, 5));
        assert_eq!(LinearCutoff.estimate((-1.0, 3.0), &c), (2, 14));
    }

    #[test]
    fn centroids_grow_with_cutoff() {
        let c = calibration();
        for v in MIN_CUTOFF..=MAX_CUTOFF {
            for h in MIN_CUTOFF..MAX_CUTOFF {
                assert!(c.entry(h + 1, v).centroid.0 > c.entry(h, v).centroid.0, "h {h} v {v}");
            }
        }
        for h in MIN_CUTOFF..=MAX_CUTOFF {
            for v in MIN_CUTOFF..MAX_CUTOFF {
                assert!(c.entry(h, v + 1).centroid.1 > c.entry(h, v).centroid.1, "h {h} v {v}");
            }
        }
    }

    #[test]
    fn ac_fraction_grows_with_cutoff() {
        let c = calibration();
        assert!(c.entry(2, 2).ac_fraction < c.entry(8, 8).ac_fraction);
        assert!(c.entry(8, 8).ac_fraction < c.entry(14, 14).ac_fraction);
        for e in &c.entries {
            assert!(e.ac_fraction > 0.0 && e.ac_fraction < 1.2, "{e:?}");
        }
    }

    #[test]
    fn calibrated_estimator_inverts_its_table() {
        let c = calibration();
        for e in &c.entries {
            assert_eq!(CalibratedCutoff.estimate(e.centroid, &c), (e.h_cutoff, e.v_cutoff));
        }
    }

    #[test]
    fn registry_names() {
        let reg = cutoff_estimators();
        assert_eq!(reg.names(), vec!["calibrated", "linear"]);
        assert!(reg.create("quadratic").is_err());
    }
}
