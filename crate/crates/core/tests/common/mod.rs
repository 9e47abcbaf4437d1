//! Shared generators for the integration tests.
#![allow(dead_code)]

use grainkit::frame::VideoFormat;
use grainkit::sei::{
    FgcParams, Interval, IntervalModel, INFERRED_CUTOFF, MAX_CUTOFF, MAX_INTERVALS,
    MAX_LOG2_SCALE_FACTOR, MAX_SCALING_FACTOR, MIN_CUTOFF, MIN_LOG2_SCALE_FACTOR,
};
use grainkit::Frame;
use proptest::prelude::*;
use proptest::sample::subsequence;

/// Sorted, disjoint intervals with cutoffs that `num_model_values` can carry.
pub fn interval_model() -> impl Strategy<Value = IntervalModel> {
    (1u8..=3, 1usize..=MAX_INTERVALS).prop_flat_map(|(nmv, n)| {
        let bounds = subsequence((0u16..=255).collect::<Vec<_>>(), 2 * n);
        let values = prop::collection::vec(
            (
                0..=MAX_SCALING_FACTOR,
                MIN_CUTOFF..=MAX_CUTOFF,
                MIN_CUTOFF..=MAX_CUTOFF,
                any::<bool>(),
            ),
            n,
        );
        (Just(nmv), bounds, values).prop_map(|(nmv, bounds, values)| {
            let intervals = bounds
                .chunks(2)
                .zip(values)
                .map(|(b, (sf, h, v, point))| {
                    let (h, v) = match nmv {
                        1 => (INFERRED_CUTOFF, INFERRED_CUTOFF),
                        2 => (h, h),
                        _ => (h, v),
                    };
                    let upper = if point { b[0] } else { b[1] };
                    Interval::new(b[0] as u8, upper as u8, sf, (h, v))
                })
                .collect();
            IntervalModel::new(nmv, intervals)
        })
    })
}

pub fn fgc_params() -> impl Strategy<Value = FgcParams> {
    (
        MIN_LOG2_SCALE_FACTOR..=MAX_LOG2_SCALE_FACTOR,
        prop::array::uniform3(prop::option::of(interval_model())),
    )
        .prop_map(|(log2_scale_factor, components)| FgcParams {
            log2_scale_factor,
            components,
            ..FgcParams::default()
        })
}

/// One interval over the whole intensity range on luma only.
pub fn luma_params(sf: i32, cutoffs: (i32, i32), log2_scale_factor: u8) -> FgcParams {
    FgcParams {
        log2_scale_factor,
        components: [
            Some(IntervalModel::new(3, vec![Interval::new(0, 255, sf, cutoffs)])),
            None,
            None,
        ],
        ..FgcParams::default()
    }
}

/// Vertical stripes of equal width at the given luma levels, neutral chroma.
pub fn striped_frame(format: VideoFormat, levels: &[u16]) -> Frame {
    let mut f = Frame::filled(format, [0, 128 << (format.bit_depth - 8), 128 << (format.bit_depth - 8)]);
    let w = f.planes[0].width;
    let stripe = w.div_ceil(levels.len());
    for row in f.planes[0].data.chunks_exact_mut(w) {
        for (x, v) in row.iter_mut().enumerate() {
            *v = levels[x / stripe];
        }
    }
    f
}

/// Population standard deviation.
pub fn std_dev(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    (values.map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}
