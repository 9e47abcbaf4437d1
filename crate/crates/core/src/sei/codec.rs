//! FGC SEI payload layout (fixed-width fields follow the H.274 grammar):
//!
//! ```text
//! film_grain_characteristics_cancel_flag          u(1)  always 0
//! film_grain_model_id                             u(2)
//! separate_colour_description_present_flag        u(1)
//! blending_mode_id                                u(2)
//! log2_scale_factor                               u(4)
//! comp_model_present_flag[c]              c=0..2  u(1)
//! for each c with comp_model_present_flag[c]:
//!     num_intensity_intervals_minus1[c]           u(8)
//!     num_model_values_minus1[c]                  u(3)
//!     for i in 0..=num_intensity_intervals_minus1[c]:
//!         intensity_interval_lower_bound[c][i]    u(8)
//!         intensity_interval_upper_bound[c][i]    u(8)
//!         for j in 0..=num_model_values_minus1[c]:
//!             comp_model_value[c][i][j]           se(v)
//! film_grain_characteristics_persistence_flag     u(1)
//! stop bit 1, zero bits to byte alignment
//! ```

use super::bits::{BitReader, BitWriter};
use super::{
    validate, FgcParams, Interval, IntervalModel, SeiError, INFERRED_CUTOFF, MAX_CUTOFF,
    MAX_INTERVALS, MAX_LOG2_SCALE_FACTOR, MAX_MODEL_VALUES, MAX_SCALING_FACTOR, MIN_CUTOFF,
    MIN_LOG2_SCALE_FACTOR,
};

pub fn encode_sei(params: &FgcParams) -> Result<Vec<u8>, SeiError> {
    let violations = validate(params);
    if !violations.is_empty() {
        return Err(SeiError::Invalid(violations));
    }
    let mut w = BitWriter::new();
    w.put_bit(false);
    w.put_bits(params.film_grain_model_id.into(), 2);
    w.put_bit(params.separate_colour_description_present_flag);
    w.put_bits(params.blending_mode_id.into(), 2);
    w.put_bits(params.log2_scale_factor.into(), 4);
    for model in &params.components {
        w.put_bit(model.is_some());
    }
    for model in params.components.iter().flatten() {
        w.put_bits(model.intervals.len() as u32 - 1, 8);
        w.put_bits(u32::from(model.num_model_values) - 1, 3);
        for iv in &model.intervals {
            w.put_bits(iv.lower_bound.into(), 8);
            w.put_bits(iv.upper_bound.into(), 8);
            let values = [iv.scaling_factor, iv.h_cutoff, iv.v_cutoff];
            for &v in &values[..usize::from(model.num_model_values)] {
                w.put_se(v);
            }
        }
    }
    w.put_bit(params.persistence_flag);
    w.put_trailing_bits();
    Ok(w.into_bytes())
}

struct Fields<'a> {
    r: BitReader<'a>,
}

impl Fields<'_> {
    /// Reads u(n) and checks it against `[lo, hi]`.
    fn bounded(&mut self, field: &str, n: u32, lo: u32, hi: u32) -> Result<u32, SeiError> {
        let bit_offset = self.r.offset();
        let value = self.r.get_bits(n)?;
        if value < lo || value > hi {
            return Err(SeiError::OutOfRange {
                field: field.to_string(),
                value: value.into(),
                rule: format!("∉ [{lo},{hi}]"),
                bit_offset,
            });
        }
        Ok(value)
    }

    fn signed(&mut self, field: String, lo: i32, hi: i32) -> Result<i32, SeiError> {
        let bit_offset = self.r.offset();
        let value = self.r.get_se()?;
        if value < lo || value > hi {
            return Err(SeiError::OutOfRange {
                field,
                value: value.into(),
                rule: format!("∉ [{lo},{hi}]"),
                bit_offset,
            });
        }
        Ok(value)
    }
}

pub fn decode_sei(bytes: &[u8]) -> Result<FgcParams, SeiError> {
    let mut f = Fields {
        r: BitReader::new(bytes),
    };
    f.bounded("film_grain_characteristics_cancel_flag", 1, 0, 0)?;
    let film_grain_model_id = f.bounded("film_grain_model_id", 2, 0, 0)? as u8;
    // colour description syntax is not supported, so the flag is pinned to 0
    f.bounded("separate_colour_description_present_flag", 1, 0, 0)?;
    let blending_mode_id = f.bounded("blending_mode_id", 2, 0, 0)? as u8;
    let log2_scale_factor = f.bounded(
        "log2_scale_factor",
        4,
        MIN_LOG2_SCALE_FACTOR.into(),
        MAX_LOG2_SCALE_FACTOR.into(),
    )? as u8;
    let mut present = [false; 3];
    for p in &mut present {
        *p = f.r.get_bit()?;
    }
    let mut components: [Option<IntervalModel>; 3] = [None, None, None];
    for c in 0..3 {
        if present[c] {
            components[c] = Some(decode_model(&mut f, c)?);
        }
    }
    f.bounded("film_grain_characteristics_persistence_flag", 1, 0, 0)?;

    let stop = f.r.offset();
    if !f.r.get_bit()? || f.r.offset() % 8 != 0 && f.r.get_bits(8 - f.r.offset() as u32 % 8)? != 0
    {
        return Err(SeiError::TrailingBits { bit_offset: stop });
    }
    if f.r.remaining() != 0 {
        return Err(SeiError::TrailingBits {
            bit_offset: f.r.offset(),
        });
    }

    Ok(FgcParams {
        film_grain_model_id,
        separate_colour_description_present_flag: false,
        blending_mode_id,
        log2_scale_factor,
        components,
        persistence_flag: false,
    })
}

fn decode_model(f: &mut Fields<'_>, c: usize) -> Result<IntervalModel, SeiError> {
    let count = f.bounded(
        &format!("num_intensity_intervals_minus1[{c}]"),
        8,
        0,
        MAX_INTERVALS as u32 - 1,
    )? as usize
        + 1;
    let num_model_values = f.bounded(
        &format!("num_model_values_minus1[{c}]"),
        3,
        0,
        u32::from(MAX_MODEL_VALUES) - 1,
    )? as u8
        + 1;
    let mut intervals: Vec<Interval> = Vec::with_capacity(count);
    for i in 0..count {
        let lower_offset = f.r.offset();
        let lower_bound = f.r.get_bits(8)? as u8;
        let upper_offset = f.r.offset();
        let upper_bound = f.r.get_bits(8)? as u8;
        if lower_bound > upper_bound {
            return Err(SeiError::OutOfRange {
                field: format!("intensity_interval_lower_bound[{c}][{i}]"),
                value: lower_bound.into(),
                rule: format!("> upper bound {upper_bound}"),
                bit_offset: upper_offset,
            });
        }
        if intervals
            .last()
            .is_some_and(|prev| prev.upper_bound >= lower_bound)
        {
            return Err(SeiError::Overlap {
                field: format!("intensity_interval_lower_bound[{c}][{i}]"),
                bit_offset: lower_offset,
            });
        }
        let scaling_factor =
            f.signed(format!("comp_model_value[{c}][{i}][0]"), 0, MAX_SCALING_FACTOR)?;
        let (h_cutoff, v_cutoff) = match num_model_values {
            1 => (INFERRED_CUTOFF, INFERRED_CUTOFF),
            2 => {
                let h = f.signed(format!("comp_model_value[{c}][{i}][1]"), MIN_CUTOFF, MAX_CUTOFF)?;
                (h, h)
            }
            _ => {
                let h = f.signed(format!("comp_model_value[{c}][{i}][1]"), MIN_CUTOFF, MAX_CUTOFF)?;
                let v = f.signed(format!("comp_model_value[{c}][{i}][2]"), MIN_CUTOFF, MAX_CUTOFF)?;
                (h, v)
            }
        };
        intervals.push(Interval {
            lower_bound,
            upper_bound,
            scaling_factor,
            h_cutoff,
            v_cutoff,
        });
    }
    Ok(IntervalModel {
        num_model_values,
        intervals,
    })
}
