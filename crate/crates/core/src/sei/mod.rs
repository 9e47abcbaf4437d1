//! Film Grain Characteristics SEI parameters restricted to the SMPTE RDD5
//! profile (frequency-filtering model, additive blending, per-frame
//! persistence), their validation, payload coding and the `.fgs` sidecar.

pub mod bits;
mod codec;
mod sidecar;

pub use codec::{decode_sei, encode_sei};
pub use sidecar::{
    read_sidecar, write_sidecar, SidecarError, SidecarReader, SidecarRecord, SidecarWriter,
};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const COMPONENT_NAMES: [&str; 3] = ["Y", "Cb", "Cr"];

pub const MIN_LOG2_SCALE_FACTOR: u8 = 2;
pub const MAX_LOG2_SCALE_FACTOR: u8 = 7;
pub const MIN_CUTOFF: i32 = 2;
pub const MAX_CUTOFF: i32 = 14;
/// Cutoff assumed for both axes when none is signalled.
pub const INFERRED_CUTOFF: i32 = 8;
pub const MAX_INTERVALS: usize = 10;
pub const MAX_MODEL_VALUES: u8 = 3;
/// Scaling factors live in the 8-bit intensity domain: `[0, 2^8 - 1]`.
pub const MAX_SCALING_FACTOR: i32 = 255;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SeiError {
    #[error("payload truncated at bit {bit_offset}")]
    Truncated { bit_offset: usize },
    #[error("malformed exp-Golomb code at bit {bit_offset}")]
    BadExpGolomb { bit_offset: usize },
    #[error("{field} = {value} at bit {bit_offset}: {rule}")]
    OutOfRange {
        field: String,
        value: i64,
        rule: String,
        bit_offset: usize,
    },
    #[error("{field}: intervals overlap or are unsorted at bit {bit_offset}")]
    Overlap { field: String, bit_offset: usize },
    #[error("bad trailing bits at bit {bit_offset}")]
    TrailingBits { bit_offset: usize },
    #[error("parameters not encodable: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub lower_bound: u8,
    pub upper_bound: u8,
    /// `comp_model_value[c][i][0]`
    pub scaling_factor: i32,
    /// `comp_model_value[c][i][1]`, after decoder-side inference.
    pub h_cutoff: i32,
    /// `comp_model_value[c][i][2]`, after decoder-side inference.
    pub v_cutoff: i32,
}

impl Interval {
    pub fn new(lower_bound: u8, upper_bound: u8, scaling_factor: i32, cutoffs: (i32, i32)) -> Self {
        Self {
            lower_bound,
            upper_bound,
            scaling_factor,
            h_cutoff: cutoffs.0,
            v_cutoff: cutoffs.1,
        }
    }

    pub fn contains(&self, intensity: u8) -> bool {
        self.lower_bound <= intensity && intensity <= self.upper_bound
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalModel {
    /// Number of `comp_model_value` entries signalled per interval (1..=3).
    pub num_model_values: u8,
    pub intervals: Vec<Interval>,
}

impl IntervalModel {
    pub fn new(num_model_values: u8, intervals: Vec<Interval>) -> Self {
        Self {
            num_model_values,
            intervals,
        }
    }

    /// The interval whose closed range holds `intensity`, if any. Intervals
    /// are sorted and disjoint, so a binary search is exact.
    pub fn select(&self, intensity: u8) -> Option<&Interval> {
        self.select_index(intensity).map(|i| &self.intervals[i])
    }

    /// Index form of [`select`](Self::select).
    pub fn select_index(&self, intensity: u8) -> Option<usize> {
        let idx = self
            .intervals
            .partition_point(|iv| iv.upper_bound < intensity);
        self.intervals
            .get(idx)
            .filter(|iv| iv.contains(intensity))
            .map(|_| idx)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FgcParams {
    /// 0 = frequency filtering. Held as the raw wire code so that invalid
    /// values can be represented and reported.
    pub film_grain_model_id: u8,
    pub separate_colour_description_present_flag: bool,
    /// 0 = additive.
    pub blending_mode_id: u8,
    pub log2_scale_factor: u8,
    /// `Some` iff `comp_model_present_flag[c]`.
    pub components: [Option<IntervalModel>; 3],
    pub persistence_flag: bool,
}

impl Default for FgcParams {
    fn default() -> Self {
        Self {
            film_grain_model_id: 0,
            separate_colour_description_present_flag: false,
            blending_mode_id: 0,
            log2_scale_factor: 5,
            components: [None, None, None],
            persistence_flag: false,
        }
    }
}

impl FgcParams {
    /// Parameters that synthesize nothing.
    pub fn no_grain() -> Self {
        Self::default()
    }

    pub fn comp_model_present(&self, c: usize) -> bool {
        self.components[c].is_some()
    }

    pub fn any_component_present(&self) -> bool {
        self.components.iter().any(Option::is_some)
    }

    /// Right shift applied after scaling: `log2_scale_factor + 6`.
    pub fn grain_shift(&self) -> u32 {
        u32::from(self.log2_scale_factor) + 6
    }
}

/// One failed constraint: where, what value, and what was allowed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub value: i64,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}: {}", self.field, self.value, self.rule)
    }
}

fn range_rule(lo: i64, hi: i64) -> String {
    format!("∉ [{lo},{hi}]")
}

struct Checker(Vec<Violation>);

impl Checker {
    fn require(&mut self, ok: bool, field: impl Into<String>, value: i64, rule: impl Into<String>) {
        if !ok {
            self.0.push(Violation {
                field: field.into(),
                value,
                rule: rule.into(),
            });
        }
    }

    fn range(&mut self, field: impl Into<String>, value: i64, lo: i64, hi: i64) {
        self.require((lo..=hi).contains(&value), field, value, range_rule(lo, hi));
    }
}

/// Lists every constraint `params` breaks; empty iff encodable.
pub fn validate(params: &FgcParams) -> Vec<Violation> {
    let mut check = Checker(Vec::new());
    check.range("film_grain_model_id", params.film_grain_model_id.into(), 0, 0);
    check.range(
        "separate_colour_description_present_flag",
        params.separate_colour_description_present_flag.into(),
        0,
        0,
    );
    check.range("blending_mode_id", params.blending_mode_id.into(), 0, 0);
    check.range(
        "log2_scale_factor",
        params.log2_scale_factor.into(),
        MIN_LOG2_SCALE_FACTOR.into(),
        MAX_LOG2_SCALE_FACTOR.into(),
    );
    for (c, model) in params.components.iter().enumerate() {
        if let Some(model) = model {
            validate_model(&mut check, c, model);
        }
    }
    check.range(
        "film_grain_characteristics_persistence_flag",
        params.persistence_flag.into(),
        0,
        0,
    );
    check.0
}

fn validate_model(check: &mut Checker, c: usize, model: &IntervalModel) {
    check.range(
        format!("num_intensity_intervals[{c}]"),
        model.intervals.len() as i64,
        1,
        MAX_INTERVALS as i64,
    );
    check.range(
        format!("num_model_values[{c}]"),
        model.num_model_values.into(),
        1,
        MAX_MODEL_VALUES.into(),
    );
    for (i, iv) in model.intervals.iter().enumerate() {
        check.require(
            iv.lower_bound <= iv.upper_bound,
            format!("intensity_interval_lower_bound[{c}][{i}]"),
            iv.lower_bound.into(),
            format!("> upper bound {}", iv.upper_bound),
        );
        check.range(
            format!("comp_model_value[{c}][{i}][0]"),
            iv.scaling_factor.into(),
            0,
            MAX_SCALING_FACTOR.into(),
        );
        check.range(
            format!("comp_model_value[{c}][{i}][1]"),
            iv.h_cutoff.into(),
            MIN_CUTOFF.into(),
            MAX_CUTOFF.into(),
        );
        check.range(
            format!("comp_model_value[{c}][{i}][2]"),
            iv.v_cutoff.into(),
            MIN_CUTOFF.into(),
            MAX_CUTOFF.into(),
        );
        // Cutoffs that the chosen num_model_values cannot carry would be lost
        // on the wire.
        match model.num_model_values {
            1 => {
                check.require(
                    iv.h_cutoff == INFERRED_CUTOFF,
                    format!("comp_model_value[{c}][{i}][1]"),
                    iv.h_cutoff.into(),
                    "must be the inferred cutoff 8 when num_model_values = 1",
                );
                check.require(
                    iv.v_cutoff == INFERRED_CUTOFF,
                    format!("comp_model_value[{c}][{i}][2]"),
                    iv.v_cutoff.into(),
                    "must be the inferred cutoff 8 when num_model_values = 1",
                );
            }
            2 => check.require(
                iv.v_cutoff == iv.h_cutoff,
                format!("comp_model_value[{c}][{i}][2]"),
                iv.v_cutoff.into(),
                format!("must equal h_cutoff {} when num_model_values = 2", iv.h_cutoff),
            ),
            _ => {}
        }
        if let Some(next) = model.intervals.get(i + 1) {
            check.require(
                iv.upper_bound < next.lower_bound,
                format!("intensity_interval_upper_bound[{c}][{i}]"),
                iv.upper_bound.into(),
                format!(
                    "intervals must not overlap: needs < intensity_interval_lower_bound[{c}][{}] = {}",
                    i + 1,
                    next.lower_bound
                ),
            );
        }
    }
}

impl fmt::Display for FgcParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "film_grain_model_id: {}", self.film_grain_model_id)?;
        writeln!(
            f,
            "separate_colour_description_present_flag: {}",
            u8::from(self.separate_colour_description_present_flag)
        )?;
        writeln!(f, "blending_mode_id: {}", self.blending_mode_id)?;
        writeln!(f, "log2_scale_factor: {}", self.log2_scale_factor)?;
        for (c, model) in self.components.iter().enumerate() {
            let name = COMPONENT_NAMES[c];
            match model {
                None => writeln!(f, "comp_model_present_flag[{c}] ({name}): 0")?,
                Some(m) => {
                    writeln!(f, "comp_model_present_flag[{c}] ({name}): 1")?;
                    writeln!(f, "  num_intensity_intervals: {}", m.intervals.len())?;
                    writeln!(f, "  num_model_values: {}", m.num_model_values)?;
                    for (i, iv) in m.intervals.iter().enumerate() {
                        writeln!(
                            f,
                            "  interval {i}: [{}, {}] sf={} cutoffs=({}, {})",
                            iv.lower_bound,
                            iv.upper_bound,
                            iv.scaling_factor,
                            iv.h_cutoff,
                            iv.v_cutoff
                        )?;
                    }
                }
            }
        }
        write!(
            f,
            "film_grain_characteristics_persistence_flag: {}",
            u8::from(self.persistence_flag)
        )
    }
}
