//! The grain pattern database: one 64x64 spatial pattern per pair of
//! signalled cutoffs, all derived from a single block of transformed
//! pseudo-random values.

use std::io::{self, Read, Write};

use thiserror::Error;

use super::cutoff_index;
use crate::dct::{IntDct64, BLOCK_LEN, COEFF_FRAC_BITS, N};
use crate::frame::read_full;
use crate::rng::{derive_seed, GrainRng};
use crate::sei::{MAX_CUTOFF, MIN_CUTOFF};

/// Cutoff values per axis (`2..=14`).
pub const CUTOFF_STEPS: usize = (MAX_CUTOFF - MIN_CUTOFF + 1) as usize;
pub const PATTERN_COUNT: usize = CUTOFF_STEPS * CUTOFF_STEPS;
/// Target spatial standard deviation of every pattern. Grain is scaled up by
/// 2^6 here and shifted back down by `log2_scale_factor + 6` at blend time.
pub const PATTERN_SIGMA: f64 = 64.0;

const CACHE_MAGIC: &[u8; 4] = b"FGDB";
const CACHE_VERSION: u32 = 1;
const DB_STREAM: u64 = 0x6462; // "db"

#[derive(Debug, Error)]
pub enum DatabaseError {
    #[error("not a grain database cache (bad magic)")]
    BadMagic,
    #[error("grain database cache version {0} unsupported (expected {CACHE_VERSION})")]
    Version(u32),
    #[error("grain database cache truncated")]
    Truncated,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrainPatternDb {
    seed: u64,
    sigma_db: f64,
    /// `PATTERN_COUNT` patterns of `64 * 64` samples, ordered by
    /// `(h_cutoff, v_cutoff)` with `v` varying fastest.
    patterns: Vec<i16>,
}

fn pattern_slot(h_cutoff: i32, v_cutoff: i32) -> usize {
    debug_assert!((MIN_CUTOFF..=MAX_CUTOFF).contains(&h_cutoff));
    debug_assert!((MIN_CUTOFF..=MAX_CUTOFF).contains(&v_cutoff));
    (h_cutoff - MIN_CUTOFF) as usize * CUTOFF_STEPS + (v_cutoff - MIN_CUTOFF) as usize
}

/// Population standard deviation of a pattern.
pub fn pattern_sigma(pattern: &[i16]) -> f64 {
    let n = pattern.len() as f64;
    let mean = pattern.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = pattern
        .iter()
        .map(|&v| (f64::from(v) - mean).powi(2))
        .sum::<f64>()
        / n;
    var.sqrt()
}

/// The shared frequency-domain block `B`: unit Gaussian values, DC forced to
/// zero so that every pattern is zero-mean.
fn transformed_random_block(seed: u64) -> Vec<f64> {
    let mut rng = GrainRng::new(derive_seed(seed, &[DB_STREAM]));
    let mut block: Vec<f64> = (0..BLOCK_LEN).map(|_| rng.gaussian()).collect();
    block[0] = 0.0;
    block
}

impl GrainPatternDb {
    pub fn build(seed: u64) -> Self {
        let base = transformed_random_block(seed);
        let dct = IntDct64;
        let mut patterns = vec![0i16; PATTERN_COUNT * BLOCK_LEN];
        let mut coef = vec![0i32; BLOCK_LEN];
        let mut spatial = vec![0i32; BLOCK_LEN];
        for h in MIN_CUTOFF..=MAX_CUTOFF {
            for v in MIN_CUTOFF..=MAX_CUTOFF {
                let hc = cutoff_index(h).expect("cutoff in range");
                let vc = cutoff_index(v).expect("cutoff in range");
                // equal energy across cutoffs: the retained AC coefficients
                // carry the full block's variance
                let kept = ((hc + 1) * (vc + 1) - 1) as f64;
                let gain = PATTERN_SIGMA * (BLOCK_LEN as f64 / kept).sqrt()
                    * f64::from(1u32 << COEFF_FRAC_BITS);
                for y in 0..N {
                    for x in 0..N {
                        let i = y * N + x;
                        coef[i] = if x > hc || y > vc {
                            0
                        } else {
                            (base[i] * gain).round() as i32
                        };
                    }
                }
                dct.inverse(&coef, &mut spatial);
                let slot = pattern_slot(h, v) * BLOCK_LEN;
                for (dst, &s) in patterns[slot..slot + BLOCK_LEN].iter_mut().zip(&spatial) {
                    *dst = s.clamp(i32::from(i16::MIN), i32::from(i16::MAX)) as i16;
                }
            }
        }
        let mut db = Self {
            seed,
            sigma_db: 0.0,
            patterns,
        };
        db.sigma_db = pattern_sigma(db.pattern(8, 8));
        db
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Calibrated pre-scale standard deviation (that of the (8, 8) pattern).
    pub fn sigma_db(&self) -> f64 {
        self.sigma_db
    }

    /// The 64x64 pattern for signalled cutoffs `(h, v)`, row-major.
    pub fn pattern(&self, h_cutoff: i32, v_cutoff: i32) -> &[i16] {
        let slot = pattern_slot(h_cutoff, v_cutoff) * BLOCK_LEN;
        &self.patterns[slot..slot + BLOCK_LEN]
    }

    /// Cache layout: magic, version u32, seed u64, sigma_db f64, then
    /// 169 x 64 x 64 i16, all little-endian.
    pub fn write_cache<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.sigma_db.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.patterns.len() * 2);
        for &v in &self.patterns {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        w.flush()
    }

    pub fn read_cache<R: Read>(mut r: R) -> Result<Self, DatabaseError> {
        let mut head = [0u8; 24];
        if read_full(&mut r, &mut head)? != head.len() {
            return Err(DatabaseError::Truncated);
        }
        if &head[..4] != CACHE_MAGIC {
            return Err(DatabaseError::BadMagic);
        }
        let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
        if version != CACHE_VERSION {
            return Err(DatabaseError::Version(version));
        }
        let seed = u64::from_le_bytes(head[8..16].try_into().unwrap());
        let sigma_db = f64::from_le_bytes(head[16..24].try_into().unwrap());
        let mut body = vec![0u8; PATTERN_COUNT * BLOCK_LEN * 2];
        if read_full(&mut r, &mut body)? != body.len() {
            return Err(DatabaseError::Truncated);
        }
        let patterns = body
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]))
            .collect();
        Ok(Self {
            seed,
            sigma_db,
            patterns,
        })
    }

    /// Loads `path` if it holds a database for `seed`, otherwise builds one
    /// and writes it there.
    pub fn load_or_build(path: &std::path::Path, seed: u64) -> Result<Self, DatabaseError> {
        if let Ok(file) = std::fs::File::open(path) {
            match Self::read_cache(io::BufReader::new(file)) {
                Ok(db) if db.seed == seed => return Ok(db),
                Ok(db) => log::info!(
                    "grain cache {} holds seed {}, rebuilding for {seed}",
                    path.display(),
                    db.seed
                ),
                Err(e) => log::warn!("ignoring grain cache {}: {e}", path.display()),
            }
        }
        let db = Self::build(seed);
        let file = std::fs::File::create(path)?;
        db.write_cache(io::BufWriter::new(file))?;
        Ok(db)
    }
}
