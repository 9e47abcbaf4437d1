//! Decoder-side throughput: Y4M pass-through against the same stream with
//! grain synthesis, per worker thread count.

use std::collections::HashMap;
use std::io::{self, Cursor};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{FrameIoError, Y4mReader, Y4mWriter};
use crate::sei::{decode_sei, SidecarRecord};
use crate::synthesis::{GrainPatternDb, SynthesisConfig, SynthesisError, Synthesizer};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Frame(#[from] FrameIoError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error("bench needs at least one thread count and one repeat")]
    Empty,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineInfo {
    pub os: String,
    pub arch: String,
    pub available_parallelism: usize,
}

impl MachineInfo {
    pub fn current() -> Self {
        Self {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            available_parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub threads: usize,
    pub passthrough_fps: f64,
    pub synthesis_fps: f64,
    pub passthrough_ms_per_frame: f64,
    pub synthesis_ms_per_frame: f64,
    /// Extra time per frame with grain, percent of pass-through.
    pub overhead_percent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub machine: MachineInfo,
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    pub frames: usize,
    /// Each timing is the best of this many runs.
    pub repeats: usize,
    pub rows: Vec<BenchRow>,
}

/// Reads the whole stream and writes it to a null sink, optionally blending
/// grain in between. Returns the frame count.
fn run(y4m: &[u8], synth: Option<(&Synthesizer, &HashMap<u32, &[u8]>)>) -> Result<usize, BenchError> {
    let reader = Y4mReader::new(Cursor::new(y4m))?;
    let mut writer = Y4mWriter::new(io::sink(), reader.format())?;
    let mut frames = 0;
    for (i, frame) in reader.enumerate() {
        let mut frame = frame?;
        if let Some((s, records)) = synth {
            if let Some(params) = records.get(&(i as u32)).and_then(|p| decode_sei(p).ok()) {
                s.blend_in_place(&mut frame, &params, i as u64)?;
            }
        }
        writer.write_frame(&frame)?;
        frames += 1;
    }
    writer.finish().map_err(FrameIoError::from)?;
    Ok(frames)
}

fn timed(f: impl FnOnce() -> Result<usize, BenchError>) -> Result<(Duration, usize), BenchError> {
    let t = Instant::now();
    let frames = f()?;
    Ok((t.elapsed(), frames))
}

/// Times pass-through and synthesis of an in-memory Y4M stream for every
/// thread count. Runs alternate so that both modes see the same machine
/// state.
pub fn bench(
    y4m: &[u8],
    records: &[SidecarRecord],
    db: Arc<GrainPatternDb>,
    cfg: &SynthesisConfig,
    threads: &[usize],
    repeats: usize,
) -> Result<BenchReport, BenchError> {
    if threads.is_empty() || repeats == 0 {
        return Err(BenchError::Empty);
    }
    let format = Y4mReader::new(Cursor::new(y4m))?.format();
    let mut by_frame: HashMap<u32, &[u8]> = HashMap::new();
    for r in records {
        by_frame.entry(r.frame_index).or_insert(&r.payload);
    }
    let mut rows = Vec::with_capacity(threads.len());
    let mut frames = 0;
    for &t in threads {
        let synth = Synthesizer::new(
            db.clone(),
            SynthesisConfig {
                threads: t,
                ..cfg.clone()
            },
        )?;
        let mut pass = Duration::MAX;
        let mut grain = Duration::MAX;
        for _ in 0..repeats {
            let (d, n) = timed(|| run(y4m, None))?;
            pass = pass.min(d);
            frames = n;
            let (d, _) = timed(|| run(y4m, Some((&synth, &by_frame))))?;
            grain = grain.min(d);
        }
        let n = frames.max(1) as f64;
        let pass_ms = pass.as_secs_f64() * 1e3 / n;
        let grain_ms = grain.as_secs_f64() * 1e3 / n;
        rows.push(BenchRow {
            threads: t,
            passthrough_fps: 1e3 / pass_ms,
            synthesis_fps: 1e3 / grain_ms,
            passthrough_ms_per_frame: pass_ms,
            synthesis_ms_per_frame: grain_ms,
            overhead_percent: (grain_ms / pass_ms - 1.0) * 100.0,
        });
    }
    Ok(BenchReport {
        machine: MachineInfo::current(),
        width: format.width,
        height: format.height,
        bit_depth: format.bit_depth,
        frames,
        repeats,
        rows,
    })
}
