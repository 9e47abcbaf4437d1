//! Deterministic pseudo-random numbers for grain synthesis.
//!
//! `GrainRng` is xorshift64* (Vigna, "An experimental exploration of
//! Marsaglia's xorshift generators, scrambled", 2016): shifts 12/25/27 and
//! output multiplier `0x2545F4914F6CDD1D`. Seeds go through SplitMix64 so that
//! nearby inputs give unrelated streams, and a zero state is impossible.

const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const XORSHIFT_MULT: u64 = 0x2545_F491_4F6C_DD1D;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a list of coordinates into one seed, e.g.
/// `(master_seed, frame, component, block_y, block_x)`.
pub fn derive_seed(master: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(mix64(master.wrapping_add(SPLITMIX_GAMMA)), |h, &c| extend_seed(h, c))
}

/// One folding step of [`derive_seed`], so that a shared prefix of
/// coordinates can be hashed once:
/// `derive_seed(m, &[a, b]) == extend_seed(derive_seed(m, &[a]), b)`.
#[inline]
pub fn extend_seed(h: u64, coord: u64) -> u64 {
    extend_seed_hashed(h, coord_hash(coord))
}

/// The per-coordinate half of [`extend_seed`], for callers that reuse a
/// coordinate across many seeds.
#[inline]
pub fn coord_hash(coord: u64) -> u64 {
    mix64(coord.wrapping_add(SPLITMIX_GAMMA))
}

/// [`extend_seed`] with the coordinate already passed through
/// [`coord_hash`].
#[inline]
pub fn extend_seed_hashed(h: u64, hashed_coord: u64) -> u64 {
    mix64(h.wrapping_add(SPLITMIX_GAMMA) ^ hashed_coord)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrainRng {
    state: u64,
    spare_gaussian: Option<u64>,
}

impl GrainRng {
    pub fn new(seed: u64) -> Self {
        let mut state = mix64(seed.wrapping_add(SPLITMIX_GAMMA));
        if state == 0 {
            state = SPLITMIX_GAMMA;
        }
        Self {
            state,
            spare_gaussian: None,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(XORSHIFT_MULT)
    }

    /// Uniform integer in `[0, n)` by multiply-shift on the top 32 bits.
    #[inline]
    pub fn below(&mut self, n: u32) -> u32 {
        let hi = (self.next_u64() >> 32) as u32;
        ((u64::from(hi) * u64::from(n)) >> 32) as u32
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal deviate via Box-Muller; the second value of each pair
    /// is kept for the next call.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(bits) = self.spare_gaussian.take() {
            return f64::from_bits(bits);
        }
        // 1 - u keeps the log argument in (0, 1]
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_gaussian = Some((r * theta.sin()).to_bits());
        r * theta.cos()
    }
}
