//! Film grain analysis: temporal denoising, flat-region masking, DCT-domain
//! grain measurement per intensity bin, and quantization of the fitted grain
//! strength curve into FGC intervals.
//!
//! Scaling factors are the inverse of the synthesis gain: a grain standard
//! deviation `sigma` (8-bit units) maps to
//! `sf = round(sigma * 2^(log2_scale_factor + 6) / sigma_db)`, with
//! `log2_scale_factor` the largest value in `[2, 7]` that keeps every
//! factor within 255.

pub mod cutoff;
pub mod denoise;
pub mod fit;
pub mod mask;
pub mod measure;

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cutoff::{cutoff_estimators, Calibration, CutoffEstimator, DEFAULT_CUTOFF_ESTIMATOR};
pub use denoise::{denoisers, temporal_denoise, DenoiseConfig, DenoisedFrame, TemporalDenoiser};
pub use fit::{fit_sigma_curve, lloyd_max, quantize_curve, Polynomial, Step};
pub use mask::{mask_flat_regions, BlockMask};
pub use measure::{extract_residual, measure_variance, ResidualPlane, VariancePoint, VariancePoints};

use crate::frame::{Frame, FrameIoError};
use crate::registry::UnknownStrategy;
use crate::sei::{
    validate, FgcParams, Interval, IntervalModel, INFERRED_CUTOFF, MAX_INTERVALS, MAX_LOG2_SCALE_FACTOR,
    MAX_MODEL_VALUES, MAX_SCALING_FACTOR, MIN_LOG2_SCALE_FACTOR,
};
use crate::synthesis::deblock::DEFAULT_DEBLOCKER;
use crate::synthesis::{SynthesisConfig, SynthesisError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid analysis configuration: {0}")]
    Config(String),
    #[error("frames in the analysis window differ in format")]
    FormatMismatch,
    #[error(transparent)]
    Frame(#[from] FrameIoError),
    #[error(transparent)]
    Strategy(#[from] UnknownStrategy),
    #[error("calibration failed: {0}")]
    Synthesis(#[from] SynthesisError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Measurement block size in samples.
    pub block_size: usize,
    /// Neighbour difference, 8-bit units, above which a sample is an edge.
    pub edge_threshold: f64,
    pub dilation_radius: usize,
    pub poly_order: usize,
    pub max_intervals: usize,
    /// Frames between full analyses; the frames in between reuse the
    /// last parameters.
    pub analysis_stride_frames: usize,
    /// Intensity bins with fewer blocks are ignored.
    pub min_bin_blocks: u64,
    /// Admissible RMS quantization error, relative to the mean level.
    pub quant_tolerance: f64,
    /// Chroma grain below this standard deviation (8-bit units) is not
    /// signalled.
    pub chroma_min_sigma: f64,
    pub cutoff_estimator: String,
    /// Compensates the energy that 8x8 measurement blocks lose to their
    /// mean, using the calibration table.
    pub dc_loss_correction: bool,
    /// Database seed and grain deblocking the decoder is assumed to use.
    pub database_seed: u64,
    pub deblock_filter: String,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            block_size: 8,
            edge_threshold: 20.0,
            dilation_radius: 2,
            poly_order: 3,
            max_intervals: MAX_INTERVALS,
            analysis_stride_frames: 32,
            min_bin_blocks: 10,
            quant_tolerance: 0.05,
            chroma_min_sigma: 1.0,
            cutoff_estimator: DEFAULT_CUTOFF_ESTIMATOR.to_string(),
            dc_loss_correction: true,
            database_seed: 0,
            deblock_filter: DEFAULT_DEBLOCKER.to_string(),
        }
    }
}

impl AnalysisConfig {
    pub fn check(&self) -> Result<(), AnalysisError> {
        let bad = |msg: String| Err(AnalysisError::Config(msg));
        if !(2..=64).contains(&self.block_size) {
            return bad(format!("block_size {} outside [2, 64]", self.block_size));
        }
        if !(1..=MAX_INTERVALS).contains(&self.max_intervals) {
            return bad(format!("max_intervals {} outside [1, {MAX_INTERVALS}]", self.max_intervals));
        }
        if !(1..=5).contains(&self.poly_order) {
            return bad(format!("poly_order {} outside [1, 5]", self.poly_order));
        }
        if self.analysis_stride_frames == 0 {
            return bad("analysis_stride_frames must be at least 1".into());
        }
        if !(self.edge_threshold >= 0.0) {
            return bad(format!("edge_threshold {} is negative", self.edge_threshold));
        }
        if !(self.quant_tolerance >= 0.0) {
            return bad(format!("quant_tolerance {} is negative", self.quant_tolerance));
        }
        Ok(())
    }

    fn synthesis(&self) -> SynthesisConfig {
        SynthesisConfig {
            database_seed: self.database_seed,
            deblock_enabled: self.deblock_filter != "none",
            deblock_filter: self.deblock_filter.clone(),
            ..SynthesisConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentDiagnostics {
    pub points: VariancePoints,
    /// Fitted grain standard deviation as a polynomial in `intensity / 255`,
    /// lowest order first. Empty when the fit fell back to a constant.
    pub poly_coefficients: Vec<f64>,
    pub mask_coverage: f64,
    pub blocks_measured: u64,
    pub centroid: Option<(f64, f64)>,
    pub cutoffs: (i32, i32),
    /// Measured over nominal variance for the chosen cutoffs.
    pub ac_fraction: f64,
    pub present: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochDiagnostics {
    pub frame_index: usize,
    pub denoise_passed_through: bool,
    pub log2_scale_factor: u8,
    pub components: Vec<ComponentDiagnostics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOutput {
    /// One parameter set per input frame.
    pub params: Vec<FgcParams>,
    pub epochs: Vec<EpochDiagnostics>,
}

/// Grain strength curve of one component before it is quantized.
struct ComponentCurve {
    /// Corrected grain standard deviation at `start, start + 1, ...`.
    sigma: Vec<f64>,
    start: u8,
    cutoffs: (i32, i32),
}

pub struct Analyzer {
    denoise: DenoiseConfig,
    cfg: AnalysisConfig,
    calibration: Arc<Calibration>,
    estimator: Box<dyn CutoffEstimator>,
}

impl Analyzer {
    pub fn new(denoise: DenoiseConfig, cfg: AnalysisConfig) -> Result<Self, AnalysisError> {
        denoise.check()?;
        cfg.check()?;
        denoisers().create(&denoise.method)?;
        let estimator = cutoff_estimators().create(&cfg.cutoff_estimator)?;
        let calibration = Calibration::cached(&cfg.synthesis())?;
        Ok(Self {
            denoise,
            cfg,
            calibration,
            estimator,
        })
    }

    pub fn config(&self) -> &AnalysisConfig {
        &self.cfg
    }

    pub fn calibration(&self) -> &Calibration {
        &self.calibration
    }

    /// Full analysis of `window[center]`.
    pub fn analyze_window(
        &self,
        window: &[Frame],
        center: usize,
        frame_index: usize,
    ) -> Result<(FgcParams, EpochDiagnostics), AnalysisError> {
        let denoised = temporal_denoise(window, center, &self.denoise)?;
        let original = &window[center];
        let bit_depth = original.format.bit_depth;
        let masks = mask_flat_regions(&denoised.frame, &self.cfg);
        let residuals = extract_residual(original, &denoised.frame)?;
        let mut curves: Vec<Option<ComponentCurve>> = Vec::with_capacity(3);
        let mut diagnostics = Vec::with_capacity(3);
        for c in 0..3 {
            let m = measure_variance(
                &residuals[c],
                &masks[c],
                &denoised.frame.planes[c],
                &denoised.retention[c],
                bit_depth,
                &self.cfg,
            );
            let points = m.points(self.cfg.min_bin_blocks);
            let centroid = m.spectrum.centroids();
            let cutoffs = centroid
                .map(|f| self.estimator.estimate(f, &self.calibration))
                .unwrap_or((INFERRED_CUTOFF, INFERRED_CUTOFF));
            let ac_fraction = if self.cfg.dc_loss_correction {
                self.calibration.entry(cutoffs.0, cutoffs.1).ac_fraction
            } else {
                1.0
            };
            let (curve, poly) = self.component_curve(c, &points, cutoffs, ac_fraction);
            diagnostics.push(ComponentDiagnostics {
                points,
                poly_coefficients: poly.map(|p| p.coefficients).unwrap_or_default(),
                mask_coverage: masks[c].coverage(),
                blocks_measured: m.blocks_measured,
                centroid,
                cutoffs,
                ac_fraction,
                present: false,
            });
            curves.push(curve);
        }
        let params = self.quantize(&curves);
        for (c, d) in diagnostics.iter_mut().enumerate() {
            d.present = params.comp_model_present(c);
        }
        debug_assert!(validate(&params).is_empty());
        Ok((
            params.clone(),
            EpochDiagnostics {
                frame_index,
                denoise_passed_through: denoised.passed_through,
                log2_scale_factor: params.log2_scale_factor,
                components: diagnostics,
            },
        ))
    }

    fn component_curve(
        &self,
        component: usize,
        points: &VariancePoints,
        cutoffs: (i32, i32),
        ac_fraction: f64,
    ) -> (Option<ComponentCurve>, Option<Polynomial>) {
        let Some((lo, hi)) = fit::occupied_range(points) else {
            return (None, None);
        };
        if component > 0 && points.mean_sigma() < self.cfg.chroma_min_sigma {
            return (None, None);
        }
        let poly = fit_sigma_curve(points, self.cfg.poly_order);
        let correction = 1.0 / ac_fraction.max(1e-6).sqrt();
        let sigma = (lo..=hi)
            .map(|i| {
                let s = match &poly {
                    Some(p) => p.eval(f64::from(i)),
                    None => points.mean_sigma(),
                };
                s.max(0.0) * correction
            })
            .collect();
        (
            Some(ComponentCurve {
                sigma,
                start: lo,
                cutoffs,
            }),
            poly,
        )
    }

    fn quantize(&self, curves: &[Option<ComponentCurve>]) -> FgcParams {
        let sigma_db = self.calibration.sigma_db;
        let peak = curves
            .iter()
            .flatten()
            .flat_map(|c| c.sigma.iter().copied())
            .fold(0.0, f64::max);
        let to_sf = |sigma: f64, l: u8| sigma * f64::from(1u32 << (l + 6)) / sigma_db;
        let log2 = (MIN_LOG2_SCALE_FACTOR..=MAX_LOG2_SCALE_FACTOR)
            .rev()
            .find(|&l| to_sf(peak, l).round() <= f64::from(MAX_SCALING_FACTOR))
            .unwrap_or(MIN_LOG2_SCALE_FACTOR);
        let mut params = FgcParams {
            log2_scale_factor: log2,
            ..FgcParams::default()
        };
        for (slot, curve) in params.components.iter_mut().zip(curves) {
            let Some(curve) = curve else { continue };
            let sf: Vec<f64> = curve.sigma.iter().map(|&s| to_sf(s, log2)).collect();
            let steps = quantize_curve(&sf, curve.start, self.cfg.max_intervals, self.cfg.quant_tolerance);
            let mut intervals: Vec<Interval> = Vec::new();
            for s in steps {
                let value = (s.level.round() as i32).clamp(0, MAX_SCALING_FACTOR);
                match intervals.last_mut() {
                    Some(last) if last.scaling_factor == value && last.upper_bound + 1 == s.lower => {
                        last.upper_bound = s.upper;
                    }
                    _ => intervals.push(Interval::new(s.lower, s.upper, value, curve.cutoffs)),
                }
            }
            intervals.retain(|i| i.scaling_factor > 0);
            if !intervals.is_empty() {
                *slot = Some(IntervalModel::new(MAX_MODEL_VALUES, intervals));
            }
        }
        if !params.any_component_present() {
            return FgcParams::no_grain();
        }
        params
    }

    /// Runs the analysis every `analysis_stride_frames` frames over a frame
    /// stream and returns one parameter set per frame. Only the denoising
    /// window is kept in memory.
    pub fn analyze_sequence<I>(&self, frames: I) -> Result<AnalysisOutput, AnalysisError>
    where
        I: IntoIterator<Item = Result<Frame, FrameIoError>>,
    {
        let r = self.denoise.temporal_radius;
        let stride = self.cfg.analysis_stride_frames;
        let mut window: VecDeque<Frame> = VecDeque::with_capacity(2 * r + 1);
        // index of window[0]
        let mut base = 0usize;
        let mut count = 0usize;
        let mut epochs: Vec<(FgcParams, EpochDiagnostics)> = Vec::new();
        let mut analyze = |window: &VecDeque<Frame>, base: usize, target: usize| {
            let frames: Vec<Frame> = window.iter().cloned().collect();
            log::info!("analyzing frame {target}");
            self.analyze_window(&frames, target - base, target)
                .map(|e| epochs.push(e))
        };
        for frame in frames {
            let frame = frame?;
            if let Some(first) = window.front() {
                if first.format != frame.format {
                    return Err(AnalysisError::FormatMismatch);
                }
            }
            window.push_back(frame);
            count += 1;
            if window.len() > 2 * r + 1 {
                window.pop_front();
                base += 1;
            }
            // the frame whose lookahead just completed
            if let Some(target) = (count - 1).checked_sub(r) {
                if target % stride == 0 {
                    analyze(&window, base, target)?;
                }
            }
        }
        // targets whose lookahead was cut short by the end of the stream
        for target in count.saturating_sub(r)..count {
            if target % stride == 0 {
                while base < target.saturating_sub(r) {
                    window.pop_front();
                    base += 1;
                }
                analyze(&window, base, target)?;
            }
        }
        let mut params = Vec::with_capacity(count);
        let mut next = 0;
        for i in 0..count {
            while next < epochs.len() && epochs[next].1.frame_index <= i {
                next += 1;
            }
            params.push(epochs[next - 1].0.clone());
        }
        Ok(AnalysisOutput {
            params,
            epochs: epochs.into_iter().map(|(_, d)| d).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::VideoFormat;
    use crate::rng::GrainRng;
    use crate::synthesis::{GrainPatternDb, Synthesizer};

    fn analyzer(cfg: AnalysisConfig) -> Analyzer {
        Analyzer::new(DenoiseConfig::default(), cfg).unwrap()
    }

    fn clean(n: usize) -> Vec<Result<Frame, FrameIoError>> {
        let format = VideoFormat::new(64, 48, 8).unwrap();
        (0..n).map(|_| Ok(Frame::filled(format, [90, 128, 128]))).collect()
    }

    #[test]
    fn config_limits() {
        for cfg in [
            AnalysisConfig {
                max_intervals: 0,
                ..Default::default()
            },
            AnalysisConfig {
                max_intervals: 11,
                ..Default::default()
            },
            AnalysisConfig {
                poly_order: 6,
                ..Default::default()
            },
            AnalysisConfig {
                analysis_stride_frames: 0,
                ..Default::default()
            },
        ] {
            assert!(cfg.check().is_err(), "{cfg:?}");
        }
        assert!(AnalysisConfig::default().check().is_ok());
    }

    #[test]
    fn unknown_estimator_rejected() {
        let cfg = AnalysisConfig {
            cutoff_estimator: "magic".into(),
            ..Default::default()
        };
        assert!(matches!(
            Analyzer::new(DenoiseConfig::default(), cfg),
            Err(AnalysisError::Strategy(_))
        ));
    }

    #[test]
    fn clean_video_has_no_grain() {
        let out = analyzer(AnalysisConfig::default()).analyze_sequence(clean(6)).unwrap();
        assert_eq!(out.params.len(), 6);
        assert!(out.params.iter().all(|p| !p.any_component_present()));
    }

    #[test]
    fn epochs_and_records_counted() {
        let out = analyzer(AnalysisConfig::default()).analyze_sequence(clean(100)).unwrap();
        assert_eq!(out.params.len(), 100);
        let idx: Vec<usize> = out.epochs.iter().map(|e| e.frame_index).collect();
        assert_eq!(idx, vec![0, 32, 64, 96]);
    }

    #[test]
    fn short_streams() {
        let a = analyzer(AnalysisConfig {
            analysis_stride_frames: 2,
            ..Default::default()
        });
        for n in 1..6 {
            let out = a.analyze_sequence(clean(n)).unwrap();
            assert_eq!(out.params.len(), n);
            assert_eq!(out.epochs.len(), n.div_ceil(2));
        }
        let one = a.analyze_sequence(clean(1)).unwrap();
        assert!(one.epochs[0].denoise_passed_through);
        assert!(a.analyze_sequence(clean(0)).unwrap().params.is_empty());
    }

    #[test]
    fn window_is_centred_on_target() {
        // frame 3 differs; analysing at stride 1 must put it in the centre
        // exactly once as a target
        let format = VideoFormat::new(64, 48, 8).unwrap();
        let frames: Vec<_> = (0..7)
            .map(|i| Ok(Frame::filled(format, [10 * i as u16, 128, 128])))
            .collect();
        let a = analyzer(AnalysisConfig {
            analysis_stride_frames: 1,
            ..Default::default()
        });
        let out = a.analyze_sequence(frames).unwrap();
        let idx: Vec<usize> = out.epochs.iter().map(|e| e.frame_index).collect();
        assert_eq!(idx, (0..7).collect::<Vec<_>>());
    }

    fn constant_points(sigma: f64) -> VariancePoints {
        VariancePoints {
            points: (4..20)
                .map(|b| VariancePoint {
                    mean_intensity: b as f64 * 8.0 + 4.0,
                    grain_variance: sigma * sigma,
                    weight: 100.0,
                })
                .collect(),
        }
    }

    #[test]
    fn constant_variance_is_one_interval() {
        let a = analyzer(AnalysisConfig::default());
        let (curve, _) = a.component_curve(0, &constant_points(4.0), (8, 8), 1.0);
        let p = a.quantize(&[curve, None, None]);
        let model = p.components[0].as_ref().unwrap();
        assert_eq!(model.intervals.len(), 1);
        assert_eq!((model.intervals[0].lower_bound, model.intervals[0].upper_bound), (32, 159));
        assert!(validate(&p).is_empty());
    }

    #[test]
    fn scaling_factor_inverts_gain() {
        let a = analyzer(AnalysisConfig::default());
        let sigma_db = a.calibration().sigma_db;
        let (curve, _) = a.component_curve(0, &constant_points(5.0), (8, 8), 1.0);
        let p = a.quantize(&[curve, None, None]);
        let sf = p.components[0].as_ref().unwrap().intervals[0].scaling_factor;
        let l = p.log2_scale_factor;
        let expected = (5.0 * f64::from(1u32 << (l + 6)) / sigma_db).round() as i32;
        assert_eq!(sf, expected);
        assert!(sf <= 255);
        if l < MAX_LOG2_SCALE_FACTOR {
            assert!(5.0 * f64::from(1u32 << (l + 7)) / sigma_db > 255.0);
        }
    }

    #[test]
    fn two_plateaus_split_near_middle() {
        let points = VariancePoints {
            points: (0..32)
                .map(|b| {
                    let i = b as f64 * 8.0 + 4.0;
                    VariancePoint {
                        mean_intensity: i,
                        grain_variance: if i < 128.0 { 4.0 } else { 36.0 },
                        weight: 40.0,
                    }
                })
                .collect(),
        };
        let a = analyzer(AnalysisConfig {
            max_intervals: 2,
            ..Default::default()
        });
        let (curve, _) = a.component_curve(0, &points, (8, 8), 1.0);
        let p = a.quantize(&[curve, None, None]);
        let iv = &p.components[0].as_ref().unwrap().intervals;
        assert_eq!(iv.len(), 2);
        // oracle: brute-force best 2-level split of the raw plateau data
        let sigma: Vec<f64> = (0..256).map(|i| if i < 128 { 2.0 } else { 6.0 }).collect();
        let sse = |s: &[f64]| {
            let m = s.iter().sum::<f64>() / s.len() as f64;
            s.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        };
        let oracle = (1..256)
            .min_by(|&a, &b| (sse(&sigma[..a]) + sse(&sigma[a..])).total_cmp(&(sse(&sigma[..b]) + sse(&sigma[b..]))))
            .unwrap();
        let boundary = i32::from(iv[1].lower_bound);
        assert!((boundary - oracle as i32).abs() <= 8, "{boundary} vs {oracle}");
        assert!(iv[0].scaling_factor < iv[1].scaling_factor);
    }

    #[test]
    fn faint_chroma_dropped() {
        let a = analyzer(AnalysisConfig::default());
        let (curve, _) = a.component_curve(1, &constant_points(0.5), (8, 8), 1.0);
        assert!(curve.is_none());
        let (curve, _) = a.component_curve(0, &constant_points(0.5), (8, 8), 1.0);
        assert!(curve.is_some());
    }

    #[test]
    fn sparse_points_fall_back_to_mean() {
        let a = analyzer(AnalysisConfig::default());
        let mut pts = constant_points(3.0);
        pts.points.truncate(2);
        let (curve, poly) = a.component_curve(0, &pts, (8, 8), 1.0);
        assert!(poly.is_none());
        assert!(curve.unwrap().sigma.iter().all(|&s| (s - 3.0).abs() < 1e-12));
    }

    #[test]
    fn grained_flat_video_recovered() {
        let db = Arc::new(GrainPatternDb::build(0));
        let synth = Synthesizer::new(db, SynthesisConfig::default()).unwrap();
        let format = VideoFormat::new(256, 128, 8).unwrap();
        let mut rng = GrainRng::new(3);
        let params = FgcParams {
            log2_scale_factor: 3,
            components: [
                Some(IntervalModel::new(3, vec![Interval::new(0, 255, 40, (8, 8))])),
                None,
                None,
            ],
            ..FgcParams::default()
        };
        let frames: Vec<_> = (0..5)
            .map(|i| {
                let base = Frame::filled(format, [100 + (rng.below(3) as u16), 128, 128]);
                Ok(synth.blend_frame(&base, &params, i).unwrap().0)
            })
            .collect();
        let a = analyzer(AnalysisConfig::default());
        let out = a.analyze_sequence(frames).unwrap();
        let p = &out.params[0];
        assert!(validate(p).is_empty());
        let iv = &p.components[0].as_ref().expect("luma grain").intervals;
        let sf = f64::from(iv[0].scaling_factor) * 2f64.powi(3 - i32::from(p.log2_scale_factor));
        assert!((sf - 40.0).abs() <= 10.0, "{p}");
        assert!((iv[0].h_cutoff - 8).abs() <= 2 && (iv[0].v_cutoff - 8).abs() <= 2, "{p}");
        assert!(!p.comp_model_present(1) && !p.comp_model_present(2));
    }
}
