mod common;

use std::sync::Arc;

use grainkit::dct::FloatDct;
use grainkit::frame::VideoFormat;
use grainkit::rng::{derive_seed, GrainRng};
use grainkit::sei::FgcParams;
use grainkit::synthesis::{
    cutoff_index, draw_offsets, scale_sample, GrainPatternDb, SynthesisConfig, Synthesizer,
};
use grainkit::Frame;
use proptest::prelude::*;
use std::sync::OnceLock;

fn db() -> Arc<GrainPatternDb> {
    static DB: OnceLock<Arc<GrainPatternDb>> = OnceLock::new();
    DB.get_or_init(|| Arc::new(GrainPatternDb::build(0))).clone()
}

fn synth(threads: usize) -> Synthesizer {
    Synthesizer::new(
        db(),
        SynthesisConfig {
            threads,
            ..SynthesisConfig::default()
        },
    )
    .unwrap()
}

#[test]
fn cutoff_table_by_hand() {
    // ((c - 2 + 3) << 2) - 1 for c = 2..=14
    let expect = [11, 15, 19, 23, 27, 31, 35, 39, 43, 47, 51, 55, 59];
    for (c, &e) in (2..=14).zip(&expect) {
        assert_eq!(cutoff_index(c).unwrap(), e);
        assert!(e <= 63);
    }
    assert!(cutoff_index(1).is_err());
    assert!(cutoff_index(15).is_err());
}

/// Rounding the patterns to integers adds about 1/12 of noise energy per
/// sample, spread evenly over the coefficients; nothing else may leak past
/// the cutoffs.
#[test]
fn patterns_are_low_pass_up_to_rounding() {
    let db = db();
    let dct = FloatDct::new(64);
    let mut coef = vec![0.0; 64 * 64];
    for h in 2..=14 {
        for v in 2..=14 {
            let p: Vec<f64> = db.pattern(h, v).iter().map(|&x| f64::from(x)).collect();
            dct.forward_2d(&p, &mut coef);
            let (hc, vc) = (cutoff_index(h).unwrap(), cutoff_index(v).unwrap());
            let (mut energy, mut n) = (0.0, 0);
            for y in 0..64 {
                for x in 0..64 {
                    if x > hc || y > vc {
                        energy += coef[y * 64 + x].powi(2);
                        n += 1;
                    }
                }
            }
            if n > 0 {
                assert!(energy / n as f64 <= 1.5 / 12.0, "({h}, {v}): {}", energy / n as f64);
            }
        }
    }
}

#[test]
fn gain_law_on_flat_frame() {
    let format = VideoFormat::new(512, 512, 8).unwrap();
    let flat = Frame::filled(format, [128, 128, 128]);
    let s = synth(1);
    for l in [2u8, 4] {
        for sf in [16, 32, 64, 128] {
            let params = common::luma_params(sf, (8, 8), l);
            let (out, _) = s.blend_frame(&flat, &params, 0).unwrap();
            let sigma = common::std_dev(out.planes[0].data.iter().map(|&v| f64::from(v)));
            let expect = f64::from(sf) * db().sigma_db() / f64::from(1u32 << (l + 6));
            assert!((sigma / expect - 1.0).abs() < 0.1, "l {l} sf {sf}: {sigma} vs {expect}");
        }
    }
}

#[test]
fn mean_follows_pattern_bias() {
    let format = VideoFormat::new(512, 512, 8).unwrap();
    let flat = Frame::filled(format, [128, 128, 128]);
    let (sf, l) = (64, 3);
    let (out, _) = synth(1)
        .blend_frame(&flat, &common::luma_params(sf, (8, 8), l), 0)
        .unwrap();
    let mean = out.planes[0].data.iter().map(|&v| f64::from(v)).sum::<f64>()
        / out.planes[0].data.len() as f64;
    let pattern = db();
    let pattern = pattern.pattern(8, 8);
    let bias = pattern
        .iter()
        .map(|&p| f64::from(scale_sample(p, sf, l)))
        .sum::<f64>()
        / pattern.len() as f64;
    assert!((mean - 128.0 - bias).abs() <= 0.5, "mean {mean}, bias {bias}");
}

#[test]
fn window_offsets_are_uniform() {
    // one draw per block seed, as in synthesis
    let draws = 1_000_000u64;
    let mut ox = [0u64; 57];
    let mut oy = [0u64; 57];
    let mut joint = vec![0u64; 57 * 57];
    for i in 0..draws {
        let mut rng = GrainRng::new(derive_seed(7, &[i / 8160, i % 3, (i / 240) % 34, i % 240]));
        let (x, y) = draw_offsets(&mut rng);
        ox[x] += 1;
        oy[y] += 1;
        joint[y * 57 + x] += 1;
    }
    let chi2 = |counts: &[u64]| {
        let e = draws as f64 / counts.len() as f64;
        counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum::<f64>()
    };
    // 99.9% quantiles of chi-square with 56 and 3248 degrees of freedom
    assert!(chi2(&ox) < 94.46, "ox {}", chi2(&ox));
    assert!(chi2(&oy) < 94.46, "oy {}", chi2(&oy));
    assert!(chi2(&joint) < 3502.8, "joint {}", chi2(&joint));
}

#[test]
fn thread_count_does_not_change_output() {
    let format = VideoFormat::new(352, 288, 10).unwrap();
    let base = common::striped_frame(format, &[64, 300, 512, 800, 1000]);
    let params = FgcParams {
        components: [
            common::luma_params(90, (6, 11), 3).components[0].clone(),
            common::luma_params(40, (14, 2), 3).components[0].clone(),
            None,
        ],
        ..common::luma_params(0, (8, 8), 3)
    };
    let reference = synth(1).blend_frame(&base, &params, 5).unwrap();
    for threads in [2, 3, 8] {
        assert_eq!(synth(threads).blend_frame(&base, &params, 5).unwrap(), reference);
    }
}

fn fuzz_frame(bit_depth: u8, seed: u64) -> Frame {
    let format = VideoFormat::new(72, 40, bit_depth).unwrap();
    let max = u32::from(format.max_value());
    let mut rng = GrainRng::new(seed);
    let mut f = Frame::black(format);
    for p in &mut f.planes {
        for v in &mut p.data {
            // extremes often, anything otherwise
            *v = match rng.below(4) {
                0 => 0,
                1 => max as u16,
                _ => rng.below(max + 1) as u16,
            };
        }
    }
    f
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn absent_components_untouched_and_range_kept(
        params in common::fgc_params(),
        ten_bit in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let input = fuzz_frame(if ten_bit { 10 } else { 8 }, seed);
        let (out, report) = synth(1).blend_frame(&input, &params, seed % 1000).unwrap();
        let max = input.format.max_value();
        for c in 0..3 {
            if params.components[c].is_none() {
                prop_assert_eq!(&out.planes[c], &input.planes[c]);
                prop_assert_eq!(report.components[c].blocks_grained, 0);
            }
            prop_assert!(out.planes[c].data.iter().all(|&v| v <= max));
        }
    }
}

#[test]
fn database_cache_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grain.fgdb");
    let built = GrainPatternDb::load_or_build(&path, 3).unwrap();
    let len = std::fs::metadata(&path).unwrap().len();
    assert_eq!(len, 24 + 169 * 64 * 64 * 2);
    assert_eq!(GrainPatternDb::load_or_build(&path, 3).unwrap(), built);
    // another seed replaces the file, a damaged file is rebuilt
    assert_eq!(GrainPatternDb::load_or_build(&path, 4).unwrap().seed(), 4);
    std::fs::write(&path, b"FGDB\x01\0\0\0").unwrap();
    assert_eq!(GrainPatternDb::load_or_build(&path, 3).unwrap(), built);
}
