//! Frequency-filtering grain synthesis and additive blending.
//!
//! Per 8x8 block of each signalled component: the block average picks an
//! intensity interval, the interval's cutoffs pick a database pattern, a
//! pseudo-random offset picks an 8x8 window of it, and the window is scaled
//! by `sf >> (log2_scale_factor + 6)`. The assembled grain plane is
//! deblocked, then added to the picture and clipped to the sample range.

pub mod database;
pub mod deblock;

pub use database::{DatabaseError, GrainPatternDb, PATTERN_SIGMA};
pub use deblock::{deblockers, GrainDeblocker, DEFAULT_DEBLOCKER};

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{Frame, FrameIoError, Plane};
use crate::registry::UnknownStrategy;
use crate::rng::{coord_hash, derive_seed, extend_seed_hashed, mix64, GrainRng};
use crate::sei::{
    decode_sei, validate, FgcParams, Interval, IntervalModel, SidecarRecord, Violation,
    MAX_CUTOFF, MIN_CUTOFF,
};

/// Grain is placed in blocks of this size.
pub const BLOCK: usize = 8;
/// Largest window offset inside a 64x64 pattern that keeps an 8x8 window
/// in bounds.
pub const MAX_OFFSET: usize = 64 - BLOCK;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("cutoff {0} outside [{MIN_CUTOFF}, {MAX_CUTOFF}]")]
    CutoffOutOfRange(i32),
    #[error("invalid grain parameters: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidParams(Vec<Violation>),
    #[error(transparent)]
    Frame(#[from] FrameIoError),
    #[error(transparent)]
    Strategy(#[from] UnknownStrategy),
    #[error("cannot start worker threads: {0}")]
    ThreadPool(String),
}

/// Maps a signalled cutoff (`comp_model_value[c][i][1]` or `[2]`) to the last
/// retained coefficient index: `h = value - 2`, `h_c = ((h + 3) << 2) - 1`.
pub fn cutoff_index(value: i32) -> Result<usize, SynthesisError> {
    if !(MIN_CUTOFF..=MAX_CUTOFF).contains(&value) {
        return Err(SynthesisError::CutoffOutOfRange(value));
    }
    let h = value - 2;
    Ok((((h + 3) << 2) - 1) as usize)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    pub master_seed: u64,
    /// Seed of the pattern database (independent of the per-block streams).
    pub database_seed: u64,
    pub deblock_enabled: bool,
    /// Registered deblocking strategy used when `deblock_enabled`.
    pub deblock_filter: String,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            database_seed: 0,
            deblock_enabled: true,
            deblock_filter: DEFAULT_DEBLOCKER.to_string(),
            threads: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub blocks_grained: u64,
    pub blocks_skipped_no_interval: u64,
    pub clip_count: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum FrameStatus {
    Grained,
    /// Valid parameters with every `comp_model_present_flag` off.
    NoGrain,
    NoRecord,
    SeiError(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlendReport {
    pub frame_index: u64,
    pub status: FrameStatus,
    pub components: [ComponentReport; 3],
    /// Digest over every grained block's coordinates and drawn offsets, in
    /// raster order per band, bands and components folded in order.
    pub seed_digest: String,
}

impl BlendReport {
    fn pass_through(frame_index: u64, status: FrameStatus) -> Self {
        Self {
            frame_index,
            status,
            components: Default::default(),
            seed_digest: format!("{DIGEST_INIT:016x}"),
        }
    }
}

/// Starting value of the seed trace digest.
const DIGEST_INIT: u64 = 0xcbf2_9ce4_8422_2325;

pub fn select_interval(model: &IntervalModel, block_avg: u8) -> Option<&Interval> {
    model.select(block_avg)
}

/// Draws the window origin `(ox, oy)`, each uniform in `[0, 56]`.
#[inline]
pub fn draw_offsets(rng: &mut GrainRng) -> (usize, usize) {
    let ox = rng.below(MAX_OFFSET as u32 + 1) as usize;
    let oy = rng.below(MAX_OFFSET as u32 + 1) as usize;
    (ox, oy)
}

/// The 8x8 window at `(ox, oy)` of the pattern for `(h, v)`.
pub fn grain_block_at(db: &GrainPatternDb, h: i32, v: i32, ox: usize, oy: usize) -> [i16; 64] {
    let pattern = db.pattern(h, v);
    let mut out = [0i16; 64];
    for (r, dst) in out.chunks_exact_mut(BLOCK).enumerate() {
        let start = (oy + r) * 64 + ox;
        dst.copy_from_slice(&pattern[start..start + BLOCK]);
    }
    out
}

/// A pseudo-randomly placed 8x8 window of the pattern selected by
/// `interval`'s cutoffs.
pub fn grain_block(db: &GrainPatternDb, interval: &Interval, rng: &mut GrainRng) -> [i16; 64] {
    let (ox, oy) = draw_offsets(rng);
    grain_block_at(db, interval.h_cutoff, interval.v_cutoff, ox, oy)
}

/// `(sf * sample) >> (log2_scale_factor + 6)` with an arithmetic (flooring)
/// shift.
///
/// Width: patterns are `i16` (`|sample| <= 2^15`) and `sf <= 255 < 2^8`, so
/// `|sf * sample| < 2^23` fits `i32`. The shift is at least 8, which brings
/// the result back under `2^15` and into `i16`.
#[inline]
pub fn scale_sample(sample: i16, sf: i32, log2_scale_factor: u8) -> i16 {
    ((sf * i32::from(sample)) >> (u32::from(log2_scale_factor) + 6)) as i16
}

pub fn scale_and_shift(block: &[i16; 64], sf: i32, log2_scale_factor: u8) -> [i16; 64] {
    let mut out = [0i16; 64];
    for (o, &s) in out.iter_mut().zip(block) {
        *o = scale_sample(s, sf, log2_scale_factor);
    }
    out
}

struct BandStats {
    grained: u64,
    skipped: u64,
    clipped: u64,
    digest: u64,
}

impl BandStats {
    fn new() -> Self {
        Self {
            grained: 0,
            skipped: 0,
            clipped: 0,
            digest: DIGEST_INIT,
        }
    }
}

/// Per-component inputs shared by every band.
struct ComponentJob<'a> {
    model: &'a IntervalModel,
    /// Per interval, its pattern already scaled and shifted, then one all-zero
    /// pattern for blocks outside every interval.
    bank: Vec<i16>,
    bit_depth: u8,
    width: usize,
    /// `coord_hash(bx)` for every block column.
    column_hashes: Vec<u64>,
    seed_coords: [u64; 2],
    master_seed: u64,
}

const PATTERN_LEN: usize = 64 * 64;

impl ComponentJob<'_> {
    /// Block sums of `band` (block row `by`), then one interval and window
    /// per block, left in `scratch.offsets` as positions in the bank.
    fn place_band(&self, band: &[u16], by: usize, scratch: &mut BandScratch) -> BandStats {
        let w = self.width;
        let bh = band.len() / w;
        let mut stats = BandStats::new();
        let [frame, comp] = self.seed_coords;
        let row_seed = derive_seed(self.master_seed, &[frame, comp, by as u64]);
        let zero = (self.model.intervals.len() * PATTERN_LEN) as u32;

        // column sums first (at most 8 x 1023, fits u16), then per block
        let columns = &mut scratch.columns;
        columns.clear();
        columns.resize(w, 0);
        for row in band.chunks_exact(w) {
            for (a, &v) in columns.iter_mut().zip(row) {
                *a += v;
            }
        }
        let sums = &mut scratch.sums;
        sums.clear();
        sums.extend(
            columns
                .chunks(BLOCK)
                .map(|c| c.iter().map(|&v| u32::from(v)).sum::<u32>()),
        );

        let offsets = &mut scratch.offsets;
        offsets.clear();
        let down = self.bit_depth - 8;
        for (bx, (&sum, &col)) in sums.iter().zip(&self.column_hashes).enumerate() {
            let bw = BLOCK.min(w - bx * BLOCK);
            let count = (bw * bh) as u32;
            let mean = if count == 64 {
                (sum + 32) >> 6
            } else {
                (sum + count / 2) / count
            };
            let avg = (mean >> down).min(255) as u8;
            let Some(iv) = self.model.select_index(avg) else {
                stats.skipped += 1;
                offsets.push(zero);
                continue;
            };
            stats.grained += 1;
            let mut rng = GrainRng::new(extend_seed_hashed(row_seed, col));
            let (ox, oy) = draw_offsets(&mut rng);
            let trace = (by as u64) << 40 | (bx as u64) << 16 | (ox as u64) << 8 | oy as u64;
            stats.digest = mix64(stats.digest ^ trace);
            offsets.push((iv * PATTERN_LEN + oy * 64 + ox) as u32);
        }
        stats
    }

    /// Writes row `r` of the band's grain from the placed windows.
    #[inline]
    fn fill_row(&self, r: usize, grow: &mut [i16], offsets: &[u32]) {
        let bank = &self.bank[r * 64..];
        let full = grow.len() / BLOCK;
        let mut chunks = grow.chunks_exact_mut(BLOCK);
        for (chunk, &o) in (&mut chunks).zip(offsets) {
            chunk.copy_from_slice(&bank[o as usize..o as usize + BLOCK]);
        }
        let tail = chunks.into_remainder();
        if let Some(&o) = offsets.get(full) {
            tail.copy_from_slice(&bank[o as usize..o as usize + tail.len()]);
        }
    }
}

/// Per-worker buffers reused across bands.
#[derive(Default)]
struct BandScratch {
    /// One row of grain, before and after deblocking.
    raw: Vec<i16>,
    grain: Vec<i16>,
    columns: Vec<u16>,
    sums: Vec<u32>,
    /// Per block: start of its window in the bank.
    offsets: Vec<u32>,
}

/// Adds `grain` (8-bit domain) to `samples` with the bit-depth shift and
/// clipping. Returns the number of clipped samples.
///
/// Works in saturating `i16`: samples are at most 16 bits wide only in
/// theory and at most 10 here, and whenever a sum saturates the exact value
/// is outside the sample range anyway, so the clipped result and the clip
/// count are unchanged.
#[inline]
fn add_grain(samples: &mut [u16], grain: &[i16], bit_depth: u8) -> u64 {
    match bit_depth {
        8 => add_grain_shifted::<0>(samples, grain, 255),
        10 => add_grain_shifted::<2>(samples, grain, 1023),
        _ => unreachable!("bit depth {bit_depth} rejected by VideoFormat"),
    }
}

#[inline]
fn add_grain_shifted<const UP: u32>(samples: &mut [u16], grain: &[i16], max: i16) -> u64 {
    // grain beyond +-lim lands outside the sample range once shifted
    let lim = i16::MAX >> UP;
    let mut clipped = 0u64;
    for (sc, gc) in samples.chunks_mut(64).zip(grain.chunks(64)) {
        let mut n = 0u16;
        for (s, &g) in sc.iter_mut().zip(gc) {
            let v = (*s as i16).saturating_add(g.clamp(-lim - 1, lim) << UP);
            let c = v.clamp(0, max);
            n += u16::from(c != v);
            *s = c as u16;
        }
        clipped += u64::from(n);
    }
    clipped
}

fn merge_bands(bands: Vec<BandStats>) -> BandStats {
    bands.into_iter().fold(BandStats::new(), |mut acc, b| {
        acc.grained += b.grained;
        acc.skipped += b.skipped;
        acc.clipped += b.clipped;
        acc.digest = mix64(acc.digest ^ b.digest);
        acc
    })
}

/// Grain synthesis engine: pattern database, deblocking strategy and worker
/// pool, reusable across frames.
pub struct Synthesizer {
    db: Arc<GrainPatternDb>,
    cfg: SynthesisConfig,
    deblocker: Box<dyn GrainDeblocker>,
    pool: rayon::ThreadPool,
}

impl Synthesizer {
    pub fn new(db: Arc<GrainPatternDb>, cfg: SynthesisConfig) -> Result<Self, SynthesisError> {
        let deblocker = deblockers().create(&cfg.deblock_filter)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| SynthesisError::ThreadPool(e.to_string()))?;
        Ok(Self {
            db,
            cfg,
            deblocker,
            pool,
        })
    }

    pub fn config(&self) -> &SynthesisConfig {
        &self.cfg
    }

    pub fn database(&self) -> &GrainPatternDb {
        &self.db
    }

    /// Synthesizes and blends one component plane in place.
    fn blend_plane(&self, plane: &mut Plane, job: &ComponentJob<'_>) -> BandStats {
        let w = plane.width;
        let deblock = (self.cfg.deblock_enabled && !self.deblocker.is_identity())
            .then_some(&*self.deblocker);
        if deblock.map_or(true, |d| d.row_local()) {
            // build, smooth and add one row of grain at a time while it is
            // still in cache
            let bands = self.pool.install(|| {
                plane
                    .data
                    .par_chunks_mut(BLOCK * w)
                    .enumerate()
                    .map_init(BandScratch::default, |scratch, (by, band)| {
                        let mut stats = job.place_band(band, by, scratch);
                        scratch.raw.resize(w, 0);
                        scratch.grain.resize(w, 0);
                        for (r, row) in band.chunks_exact_mut(w).enumerate() {
                            job.fill_row(r, &mut scratch.raw, &scratch.offsets);
                            let grain = match deblock {
                                Some(d) => {
                                    d.filter_row(&scratch.raw, &mut scratch.grain);
                                    &scratch.grain
                                }
                                None => &scratch.raw,
                            };
                            stats.clipped += add_grain(row, grain, job.bit_depth);
                        }
                        stats
                    })
                    .collect()
            });
            return merge_bands(bands);
        }
        let mut grain = vec![0i16; plane.data.len()];
        let bands = self.pool.install(|| {
            grain
                .par_chunks_mut(BLOCK * w)
                .zip(plane.data.par_chunks(BLOCK * w))
                .enumerate()
                .map_init(BandScratch::default, |scratch, (by, (g, band))| {
                    let stats = job.place_band(band, by, scratch);
                    for (r, grow) in g.chunks_exact_mut(w).enumerate() {
                        job.fill_row(r, grow, &scratch.offsets);
                    }
                    stats
                })
                .collect()
        });
        let mut stats = merge_bands(bands);
        if let Some(d) = deblock {
            d.apply(&mut grain, w, plane.height);
        }
        stats.clipped = self.pool.install(|| {
            plane
                .data
                .par_chunks_mut(BLOCK * w)
                .zip(grain.par_chunks(BLOCK * w))
                .map(|(s, g)| add_grain(s, g, job.bit_depth))
                .sum()
        });
        stats
    }

    /// Blends grain into `frame` in place.
    pub fn blend_in_place(
        &self,
        frame: &mut Frame,
        params: &FgcParams,
        frame_index: u64,
    ) -> Result<BlendReport, SynthesisError> {
        // out-of-range input samples are clipped like any other
        frame.check_shape()?;
        let violations = validate(params);
        if !violations.is_empty() {
            return Err(SynthesisError::InvalidParams(violations));
        }
        let mut report = BlendReport::pass_through(
            frame_index,
            if params.any_component_present() {
                FrameStatus::Grained
            } else {
                FrameStatus::NoGrain
            },
        );
        let bit_depth = frame.format.bit_depth;
        let mut digest = DIGEST_INIT;
        for (c, model) in params.components.iter().enumerate() {
            let Some(model) = model else { continue };
            let mut bank = Vec::with_capacity((model.intervals.len() + 1) * PATTERN_LEN);
            for iv in &model.intervals {
                bank.extend(
                    self.db
                        .pattern(iv.h_cutoff, iv.v_cutoff)
                        .iter()
                        .map(|&p| scale_sample(p, iv.scaling_factor, params.log2_scale_factor)),
                );
            }
            bank.resize(bank.len() + PATTERN_LEN, 0);
            let width = frame.planes[c].width;
            let job = ComponentJob {
                model,
                bank,
                bit_depth,
                width,
                column_hashes: (0..width.div_ceil(BLOCK) as u64).map(coord_hash).collect(),
                seed_coords: [frame_index, c as u64],
                master_seed: self.cfg.master_seed,
            };
            let stats = self.blend_plane(&mut frame.planes[c], &job);
            report.components[c] = ComponentReport {
                blocks_grained: stats.grained,
                blocks_skipped_no_interval: stats.skipped,
                clip_count: stats.clipped,
            };
            digest = mix64(digest ^ stats.digest);
        }
        report.seed_digest = format!("{digest:016x}");
        Ok(report)
    }

    pub fn blend_frame(
        &self,
        decoded: &Frame,
        params: &FgcParams,
        frame_index: u64,
    ) -> Result<(Frame, BlendReport), SynthesisError> {
        let mut out = decoded.clone();
        let report = self.blend_in_place(&mut out, params, frame_index)?;
        Ok((out, report))
    }

    /// Applies per-frame SEI records to a frame stream. Frames without a
    /// record, or whose record fails to decode, pass through unchanged.
    pub fn synthesize_sequence<'a, I>(
        &'a self,
        frames: I,
        records: impl IntoIterator<Item = SidecarRecord>,
    ) -> impl Iterator<Item = Result<(Frame, BlendReport), SynthesisError>> + 'a
    where
        I: IntoIterator<Item = Frame>,
        I::IntoIter: 'a,
    {
        let mut by_frame: HashMap<u64, Vec<u8>> = HashMap::new();
        for r in records {
            let index = u64::from(r.frame_index);
            if by_frame.contains_key(&index) {
                log::warn!("duplicate SEI record for frame {index}; keeping the first");
                continue;
            }
            by_frame.insert(index, r.payload);
        }
        frames
            .into_iter()
            .enumerate()
            .map(move |(i, frame)| {
                let index = i as u64;
                let Some(payload) = by_frame.get(&index) else {
                    return Ok((frame, BlendReport::pass_through(index, FrameStatus::NoRecord)));
                };
                match decode_sei(payload) {
                    Ok(params) => {
                        let mut frame = frame;
                        let report = self.blend_in_place(&mut frame, &params, index)?;
                        Ok((frame, report))
                    }
                    Err(e) => {
                        log::warn!("frame {index}: {e}; passing through");
                        Ok((
                            frame,
                            BlendReport::pass_through(index, FrameStatus::SeiError(e.to_string())),
                        ))
                    }
                }
            })
    }
}

/// One-shot blend with a throwaway [`Synthesizer`].
pub fn blend_frame(
    decoded: &Frame,
    params: &FgcParams,
    db: Arc<GrainPatternDb>,
    cfg: &SynthesisConfig,
    frame_index: u64,
) -> Result<(Frame, BlendReport), SynthesisError> {
    Synthesizer::new(db, cfg.clone())?.blend_frame(decoded, params, frame_index)
}
