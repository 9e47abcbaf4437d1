//! PSNR between frame pairs and a single-frame grain strength probe.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::analysis::mask::mask_plane;
use crate::analysis::AnalysisConfig;
use crate::frame::{Frame, FrameIoError, Plane};
use crate::sei::COMPONENT_NAMES;

/// MAD to standard deviation for a Gaussian.
const MAD_TO_SIGMA: f64 = 1.482_602_218_505_602;
/// Gain of the 5-point Laplacian on white noise: `sqrt(4^2 + 4)`.
const LAPLACIAN_GAIN: f64 = 4.472_135_954_999_579;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("frame formats differ: {0} vs {1}")]
    FormatMismatch(String, String),
    #[error("sequences differ in length: {0} vs {1} frames")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Frame(#[from] FrameIoError),
}

/// A PSNR value; identical inputs give `inf`, written as the string `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Decibels(pub f64);

impl Decibels {
    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

impl fmt::Display for Decibels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{:.4}", self.0)
        }
    }
}

impl Serialize for Decibels {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str("inf")
        }
    }
}

impl<'de> Deserialize<'de> for Decibels {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Decibels(v)),
            Raw::Text(t) if t == "inf" => Ok(Decibels(f64::INFINITY)),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("bad PSNR value `{t}`"))),
        }
    }
}

fn same_format(a: &Frame, b: &Frame) -> Result<(), MetricsError> {
    if a.format != b.format {
        return Err(MetricsError::FormatMismatch(format!("{:?}", a.format), format!("{:?}", b.format)));
    }
    a.check_shape()?;
    b.check_shape()?;
    Ok(())
}

fn plane_mse(a: &Plane, b: &Plane) -> f64 {
    let sum: u64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = u64::from(x.abs_diff(y));
            d * d
        })
        .sum();
    sum as f64 / a.data.len().max(1) as f64
}

/// Mean squared error per component.
pub fn mse(reference: &Frame, test: &Frame) -> Result<[f64; 3], MetricsError> {
    same_format(reference, test)?;
    Ok([0, 1, 2].map(|i| plane_mse(&reference.planes[i], &test.planes[i])))
}

pub fn psnr_from_mse(mse: f64, bit_depth: u8) -> Decibels {
    if mse == 0.0 {
        return Decibels(f64::INFINITY);
    }
    let max = f64::from((1u32 << bit_depth) - 1);
    Decibels(10.0 * (max * max / mse).log10())
}

/// `10 log10(MAX^2 / MSE)` per component, `MAX = 2^bit_depth - 1`.
pub fn psnr(reference: &Frame, test: &Frame) -> Result<[Decibels; 3], MetricsError> {
    let bd = reference.format.bit_depth;
    Ok(mse(reference, test)?.map(|m| psnr_from_mse(m, bd)))
}

/// Robust grain standard deviation of one plane, 8-bit units: median
/// absolute deviation of the 5-point Laplacian over blocks that look flat
/// after a 3x3 box blur. `None` when no block is flat.
pub fn grain_sigma_plane(plane: &Plane, bit_depth: u8, cfg: &AnalysisConfig) -> Option<f64> {
    let (w, h) = (plane.width, plane.height);
    if w < 3 || h < 3 {
        return None;
    }
    let mut smooth = Plane::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut s = 0u32;
            let mut n = 0u32;
            for yy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for xx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    s += u32::from(plane.get(xx, yy));
                    n += 1;
                }
            }
            smooth.set(x, y, ((s + n / 2) / n) as u16);
        }
    }
    let mask = mask_plane(&smooth, bit_depth, cfg);
    let b = mask.block;
    let mut lap = Vec::new();
    for by in 0..mask.rows {
        for bx in 0..mask.cols {
            if !mask.is_kept(bx, by) {
                continue;
            }
            for y in (by * b).max(1)..((by + 1) * b).min(h - 1) {
                for x in (bx * b).max(1)..((bx + 1) * b).min(w - 1) {
                    let c = 4 * i32::from(plane.get(x, y));
                    let n = i32::from(plane.get(x - 1, y))
                        + i32::from(plane.get(x + 1, y))
                        + i32::from(plane.get(x, y - 1))
                        + i32::from(plane.get(x, y + 1));
                    lap.push(f64::from(c - n));
                }
            }
        }
    }
    if lap.is_empty() {
        return None;
    }
    let med = median(&mut lap);
    let mut dev: Vec<f64> = lap.iter().map(|v| (v - med).abs()).collect();
    let mad = median(&mut dev);
    let scale = f64::from(1u32 << (bit_depth - 8));
    Some(mad * MAD_TO_SIGMA / LAPLACIAN_GAIN / scale)
}

fn median(v: &mut [f64]) -> f64 {
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

pub fn grain_sigma(frame: &Frame, cfg: &AnalysisConfig) -> [Option<f64>; 3] {
    let bd = frame.format.bit_depth;
    [0, 1, 2].map(|i| grain_sigma_plane(&frame.planes[i], bd, cfg))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame_index: usize,
    /// Y, Cb, Cr.
    pub psnr: [Decibels; 3],
    /// Grain probe on the test frame.
    pub grain_sigma: [Option<f64>; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub frames: Vec<FrameMetrics>,
    /// PSNR of the mean squared error over all frames.
    pub psnr: [Decibels; 3],
    /// Mean of the per-frame estimates that exist.
    pub grain_sigma: [Option<f64>; 3],
}

impl MetricReport {
    /// Compares two frame sequences of equal length.
    pub fn compare<A, B>(reference: A, test: B, cfg: &AnalysisConfig) -> Result<Self, MetricsError>
    where
        A: IntoIterator<Item = Result<Frame, FrameIoError>>,
        B: IntoIterator<Item = Result<Frame, FrameIoError>>,
    {
        let mut reference = reference.into_iter();
        let mut test = test.into_iter();
        let mut frames = Vec::new();
        let mut mse_sum = [0.0; 3];
        let mut bit_depth = 8;
        loop {
            let (r, t) = match (reference.next(), test.next()) {
                (None, None) => break,
                (Some(r), Some(t)) => (r?, t?),
                (r, _) => {
                    let n = frames.len();
                    let (a, b) = if r.is_some() {
                        (n + 1 + reference.count(), n)
                    } else {
                        (n, n + 1 + test.count())
                    };
                    return Err(MetricsError::LengthMismatch(a, b));
                }
            };
            let m = mse(&r, &t)?;
            bit_depth = r.format.bit_depth;
            for (s, v) in mse_sum.iter_mut().zip(m) {
                *s += v;
            }
            frames.push(FrameMetrics {
                frame_index: frames.len(),
                psnr: m.map(|v| psnr_from_mse(v, bit_depth)),
                grain_sigma: grain_sigma(&t, cfg),
            });
        }
        let n = frames.len().max(1) as f64;
        let grain_sigma = [0, 1, 2].map(|c| {
            let v: Vec<f64> = frames.iter().filter_map(|f| f.grain_sigma[c]).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        });
        Ok(Self {
            psnr: mse_sum.map(|s| psnr_from_mse(s / n, bit_depth)),
            grain_sigma,
            frames,
        })
    }

    /// One header line, one line per frame, then an `all` line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame");
        for name in COMPONENT_NAMES {
            let _ = write!(out, ",psnr_{}", name.to_lowercase());
        }
        for name in COMPONENT_NAMES {
            let _ = write!(out, ",grain_sigma_{}", name.to_lowercase());
        }
        out.push('\n');
        let mut line = |label: String, psnr: &[Decibels; 3], sigma: &[Option<f64>; 3]| {
            out.push_str(&label);
            for p in psnr {
                let _ = write!(out, ",{p}");
            }
            for s in sigma {
                match s {
                    Some(v) => {
                        let _ = write!(out, ",{v:.4}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        };
        for f in &self.frames {
            line(f.frame_index.to_string(), &f.psnr, &f.grain_sigma);
        }
        line("all".into(), &self.psnr, &self.grain_sigma);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::VideoFormat;
    use crate::rng::GrainRng;

    fn noisy(sigma: f64, seed: u64) -> Frame {
        let format = VideoFormat::new(256, 256, 8).unwrap();
        let mut f = Frame::filled(format, [128, 128, 128]);
        let mut rng = GrainRng::new(seed);
        for v in &mut f.planes[0].data {
            *v = (128.0 + sigma * rng.gaussian()).round().clamp(0.0, 255.0) as u16;
        }
        f
    }

    #[test]
    fn identical_frames_are_infinite() {
        let f = noisy(3.0, 1);
        assert!(psnr(&f, &f).unwrap().iter().all(|p| p.is_infinite()));
    }

    #[test]
    fn off_by_one_is_48_13() {
        let format = VideoFormat::new(16, 16, 8).unwrap();
        let a = Frame::filled(format, [100, 100, 100]);
        let b = Frame::filled(format, [101, 101, 101]);
        for p in psnr(&a, &b).unwrap() {
            assert!((p.0 - 20.0 * 255f64.log10()).abs() < 1e-12);
            assert!((p.0 - 48.13).abs() < 0.005);
        }
    }

    #[test]
    fn ten_bit_peak() {
        let format = VideoFormat::new(16, 16, 10).unwrap();
        let a = Frame::filled(format, [100, 100, 100]);
        let b = Frame::filled(format, [101, 101, 101]);
        assert!((psnr(&a, &b).unwrap()[0].0 - 20.0 * 1023f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn single_sample_change_detected() {
        let a = noisy(2.0, 4);
        let mut b = a.clone();
        b.planes[2].data[17] ^= 1;
        let p = psnr(&a, &b).unwrap();
        assert!(p[0].is_infinite() && p[1].is_infinite() && !p[2].is_infinite());
    }

    #[test]
    fn format_mismatch() {
        let a = Frame::filled(VideoFormat::new(16, 16, 8).unwrap(), [0; 3]);
        let b = Frame::filled(VideoFormat::new(16, 18, 8).unwrap(), [0; 3]);
        assert!(matches!(psnr(&a, &b), Err(MetricsError::FormatMismatch(..))));
    }

    #[test]
    fn constant_frame_sigma_zero() {
        let f = Frame::filled(VideoFormat::new(64, 64, 8).unwrap(), [50, 128, 128]);
        assert_eq!(grain_sigma(&f, &AnalysisConfig::default()), [Some(0.0); 3]);
    }

    #[test]
    fn gaussian_sigma_five() {
        let s = grain_sigma_plane(&noisy(5.0, 9).planes[0], 8, &AnalysisConfig::default()).unwrap();
        assert!((4.0..=6.0).contains(&s), "{s}");
    }

    #[test]
    fn sigma_monotone() {
        let cfg = AnalysisConfig::default();
        let s: Vec<f64> = [2.0, 5.0, 10.0]
            .iter()
            .map(|&v| grain_sigma_plane(&noisy(v, 11).planes[0], 8, &cfg).unwrap())
            .collect();
        assert!(s[0] < s[1] && s[1] < s[2], "{s:?}");
    }

    #[test]
    fn no_flat_blocks_is_absent() {
        let format = VideoFormat::new(32, 32, 8).unwrap();
        let mut f = Frame::filled(format, [0, 128, 128]);
        for y in 0..32 {
            for x in 0..32 {
                f.planes[0].set(x, y, if (x / 2 + y / 2) % 2 == 0 { 0 } else { 255 });
            }
        }
        assert_eq!(grain_sigma_plane(&f.planes[0], 8, &AnalysisConfig::default()), None);
    }

    #[test]
    fn report_aggregates_and_serializes() {
        let a = noisy(0.0, 1);
        let b = noisy(4.0, 2);
        let report = MetricReport::compare([Ok(a.clone()), Ok(a.clone())], [Ok(a.clone()), Ok(b)], &AnalysisConfig::default()).unwrap();
        assert_eq!(report.frames.len(), 2);
        assert!(report.frames[0].psnr[0].is_infinite());
        assert!(!report.psnr[0].is_infinite());
        assert!(report.psnr[1].is_infinite());
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"inf\""));
        let back: MetricReport = serde_json::from_str(&json).unwrap();
        assert!(back.frames[0].psnr[0].is_infinite());
        assert!((back.psnr[0].0 - report.psnr[0].0).abs() < 1e-9);
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("frame,psnr_y,psnr_cb,psnr_cr,grain_sigma_y"));
        assert!(csv.lines().nth(1).unwrap().starts_with("0,inf,inf,inf,"));
        let short = MetricReport::compare([Ok(a.clone())], [Ok(a.clone()), Ok(a)], &AnalysisConfig::default());
        assert!(matches!(short, Err(MetricsError::LengthMismatch(1, 2))));
    }
}
