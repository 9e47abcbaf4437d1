//! Film grain toolkit: grain parameter estimation from raw video, Film Grain
//! Characteristics (FGC) SEI payload coding, and frequency-filtering grain
//! synthesis with additive blending.
//!
//! The three halves share [`sei::FgcParams`]: analysis produces it, the SEI
//! codec serializes it into per-frame sidecar records, synthesis consumes it.

pub mod analysis;
pub mod bench;
pub mod dct;
pub mod frame;
pub mod metrics;
pub mod registry;
pub mod rng;
pub mod sei;
pub mod synthesis;

pub use frame::{Frame, Plane, VideoFormat};
pub use sei::{FgcParams, Interval, IntervalModel};
