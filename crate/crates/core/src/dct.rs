//! Transforms used by the grain pipeline.
//!
//! [`IntDct64`] is the fixed-point 64-point DCT-II that turns the frequency
//! domain grain block into spatial patterns. Basis constants carry
//! [`BASIS_FRAC_BITS`] fractional bits; transform coefficients carry
//! [`COEFF_FRAC_BITS`]. The orthonormal scaling is kept, so a coefficient
//! `c` represents the real value `c / 2^8`.
//!
//! [`FloatDct`] is an orthonormal floating-point DCT-II of arbitrary size used
//! by the analysis side on 8x8 residual blocks.

use std::sync::OnceLock;

pub const N: usize = 64;
pub const BLOCK_LEN: usize = N * N;
pub const BASIS_FRAC_BITS: u32 = 20;
pub const COEFF_FRAC_BITS: u32 = 8;

/// `round(2^20 * sqrt(2/64) * cos(pi * j / 128))` for `j = 0..=64`.
const COS_Q20: [i64; 65] = [
    185364, 185308, 185141, 184862, 184471, 183970, 183358, 182635, //
    181802, 180860, 179809, 178649, 177382, 176008, 174528, 172943, //
    171254, 169461, 167567, 165571, 163476, 161283, 158992, 156605, //
    154124, 151551, 148886, 146131, 143288, 140359, 137346, 134249, //
    131072, 127816, 124483, 121075, 117594, 114042, 110421, 106734, //
    102983, 99169, 95296, 91365, 87380, 83342, 79253, 75117, //
    70936, 66712, 62447, 58145, 53808, 49439, 45040, 40613, //
    36163, 31690, 27199, 22691, 18169, 13636, 9095, 4549, //
    0,
];

/// `round(2^20 * sqrt(1/64))`, the DC row.
const DC_Q20: i64 = 131072;

/// `cos(pi * m / 128)` in Q20 for any `m`, folded onto the quarter-wave table.
fn folded_cos(m: usize) -> i64 {
    let m = m % 256;
    match m {
        0..=64 => COS_Q20[m],
        65..=128 => -COS_Q20[128 - m],
        129..=192 => -COS_Q20[m - 128],
        _ => COS_Q20[256 - m],
    }
}

/// Basis rows restricted to the first half of the samples; the second half
/// follows from `T[k][63 - n] = (-1)^k T[k][n]`.
struct HalfBasis {
    rows: [[i64; N / 2]; N],
}

fn basis() -> &'static HalfBasis {
    static BASIS: OnceLock<HalfBasis> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut rows = [[0i64; N / 2]; N];
        for (k, row) in rows.iter_mut().enumerate() {
            for (n, v) in row.iter_mut().enumerate() {
                *v = if k == 0 {
                    DC_Q20
                } else {
                    folded_cos((2 * n + 1) * k)
                };
            }
        }
        HalfBasis { rows }
    })
}

/// The full 64x64 integer basis matrix `T[k][n]` (Q20).
pub fn basis_matrix() -> Vec<[i64; N]> {
    let b = basis();
    (0..N)
        .map(|k| {
            let mut row = [0i64; N];
            for n in 0..N / 2 {
                row[n] = b.rows[k][n];
                row[N - 1 - n] = if k % 2 == 0 { b.rows[k][n] } else { -b.rows[k][n] };
            }
            row
        })
        .collect()
}

#[inline]
fn round_shift(v: i64, shift: u32) -> i64 {
    (v + (1i64 << (shift - 1))) >> shift
}

fn forward_1d(input: &[i64; N], out: &mut [i64; N]) {
    let b = basis();
    let mut sum = [0i64; N / 2];
    let mut diff = [0i64; N / 2];
    for n in 0..N / 2 {
        sum[n] = input[n] + input[N - 1 - n];
        diff[n] = input[n] - input[N - 1 - n];
    }
    for (k, o) in out.iter_mut().enumerate() {
        let src = if k % 2 == 0 { &sum } else { &diff };
        *o = b.rows[k].iter().zip(src).map(|(t, x)| t * x).sum();
    }
}

fn inverse_1d(input: &[i64; N], out: &mut [i64; N]) {
    let b = basis();
    let mut even = [0i64; N / 2];
    let mut odd = [0i64; N / 2];
    for k in 0..N {
        let c = input[k];
        if c == 0 {
            continue;
        }
        let acc = if k % 2 == 0 { &mut even } else { &mut odd };
        for (a, t) in acc.iter_mut().zip(&b.rows[k]) {
            *a += t * c;
        }
    }
    for n in 0..N / 2 {
        out[n] = even[n] + odd[n];
        out[N - 1 - n] = even[n] - odd[n];
    }
}

/// Fixed-point 64x64 DCT-II. Blocks are row-major `[y * 64 + x]`; in the
/// coefficient domain `x` is the horizontal frequency and `y` the vertical.
///
/// Accuracy holds for spatial samples with `|s| <= 2^15`: every accumulator
/// is at most `64 * 2^16 * 2^18 * 2^8`, comfortably inside `i64`.
#[derive(Clone, Copy, Debug, Default)]
pub struct IntDct64;

impl IntDct64 {
    /// Spatial integers to Q8 coefficients.
    pub fn forward(&self, input: &[i32], out: &mut [i32]) {
        assert_eq!(input.len(), BLOCK_LEN);
        assert_eq!(out.len(), BLOCK_LEN);
        let mut tmp = vec![0i64; BLOCK_LEN];
        let mut line = [0i64; N];
        let mut res = [0i64; N];
        // rows: Q0 * Q20 -> Q8
        for y in 0..N {
            for x in 0..N {
                line[x] = i64::from(input[y * N + x]);
            }
            forward_1d(&line, &mut res);
            for u in 0..N {
                tmp[y * N + u] = round_shift(res[u], BASIS_FRAC_BITS - COEFF_FRAC_BITS);
            }
        }
        // columns: Q8 * Q20 -> Q8
        for u in 0..N {
            for y in 0..N {
                line[y] = tmp[y * N + u];
            }
            forward_1d(&line, &mut res);
            for v in 0..N {
                out[v * N + u] = round_shift(res[v], BASIS_FRAC_BITS) as i32;
            }
        }
    }

    /// Q8 coefficients back to spatial integers.
    pub fn inverse(&self, input: &[i32], out: &mut [i32]) {
        assert_eq!(input.len(), BLOCK_LEN);
        assert_eq!(out.len(), BLOCK_LEN);
        let mut tmp = vec![0i64; BLOCK_LEN];
        let mut line = [0i64; N];
        let mut res = [0i64; N];
        // columns: Q8 * Q20 -> Q8
        for u in 0..N {
            for v in 0..N {
                line[v] = i64::from(input[v * N + u]);
            }
            inverse_1d(&line, &mut res);
            for y in 0..N {
                tmp[y * N + u] = round_shift(res[y], BASIS_FRAC_BITS);
            }
        }
        // rows: Q8 * Q20 -> Q0
        for y in 0..N {
            line.copy_from_slice(&tmp[y * N..(y + 1) * N]);
            inverse_1d(&line, &mut res);
            for x in 0..N {
                out[y * N + x] = round_shift(res[x], BASIS_FRAC_BITS + COEFF_FRAC_BITS) as i32;
            }
        }
    }
}

/// Orthonormal DCT-II of size `n`, applied separably to `n x n` blocks.
#[derive(Clone, Debug)]
pub struct FloatDct {
    n: usize,
    /// `basis[k * n + i] = c_k cos(pi (2i + 1) k / 2n)`
    basis: Vec<f64>,
}

impl FloatDct {
    pub fn new(n: usize) -> Self {
        assert!(n > 0);
        let mut basis = vec![0.0; n * n];
        let nf = n as f64;
        for k in 0..n {
            let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            for i in 0..n {
                basis[k * n + i] = scale
                    * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * nf)).cos();
            }
        }
        Self { n, basis }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Row-major `n x n` spatial block to coefficients `[v * n + u]`.
    pub fn forward_2d(&self, input: &[f64], out: &mut [f64]) {
        let n = self.n;
        assert_eq!(input.len(), n * n);
        assert_eq!(out.len(), n * n);
        let mut tmp = vec![0.0; n * n];
        for y in 0..n {
            let row = &input[y * n..(y + 1) * n];
            for u in 0..n {
                let b = &self.basis[u * n..(u + 1) * n];
                tmp[y * n + u] = row.iter().zip(b).map(|(a, b)| a * b).sum();
            }
        }
        for u in 0..n {
            for v in 0..n {
                let b = &self.basis[v * n..(v + 1) * n];
                out[v * n + u] = (0..n).map(|y| tmp[y * n + u] * b[y]).sum();
            }
        }
    }

    pub fn inverse_2d(&self, input: &[f64], out: &mut [f64]) {
        let n = self.n;
        assert_eq!(input.len(), n * n);
        assert_eq!(out.len(), n * n);
        let mut tmp = vec![0.0; n * n];
        for u in 0..n {
            for y in 0..n {
                tmp[y * n + u] = (0..n)
                    .map(|v| input[v * n + u] * self.basis[v * n + y])
                    .sum();
            }
        }
        for y in 0..n {
            for x in 0..n {
                out[y * n + x] = (0..n)
                    .map(|u| tmp[y * n + u] * self.basis[u * n + x])
                    .sum();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::GrainRng;

    #[test]
    fn table_matches_cosine() {
        for (j, &v) in COS_Q20.iter().enumerate() {
            let exact = (1u64 << 20) as f64
                * (2.0f64 / 64.0).sqrt()
                * (std::f64::consts::PI * j as f64 / 128.0).cos();
            assert!((v as f64 - exact).abs() <= 0.5, "entry {j}");
        }
    }

    #[test]
    fn basis_rows_are_nearly_orthonormal() {
        let t = basis_matrix();
        let one = (1u64 << 40) as f64;
        for a in 0..N {
            for b in 0..N {
                let dot: i64 = (0..N).map(|n| t[a][n] * t[b][n]).sum();
                let expect = if a == b { one } else { 0.0 };
                assert!((dot as f64 - expect).abs() / one < 1e-5, "{a},{b}");
            }
        }
    }

    #[test]
    fn dc_block_maps_to_single_coefficient() {
        let input = vec![100i32; BLOCK_LEN];
        let mut coef = vec![0i32; BLOCK_LEN];
        IntDct64.forward(&input, &mut coef);
        // orthonormal DC of a constant block = 64 * value, in Q8
        assert_eq!(coef[0], 100 * 64 * 256);
        assert!(coef[1..].iter().all(|&c| c.abs() <= 1));
        let mut back = vec![0i32; BLOCK_LEN];
        IntDct64.inverse(&coef, &mut back);
        assert!(back.iter().all(|&v| v == 100));
    }

    #[test]
    fn roundtrip_within_one_lsb() {
        let mut rng = GrainRng::new(7);
        let mut coef = vec![0i32; BLOCK_LEN];
        let mut back = vec![0i32; BLOCK_LEN];
        for _ in 0..20 {
            let input: Vec<i32> = (0..BLOCK_LEN)
                .map(|_| rng.below(8192) as i32 - 4096)
                .collect();
            IntDct64.forward(&input, &mut coef);
            IntDct64.inverse(&coef, &mut back);
            for (a, b) in input.iter().zip(&back) {
                assert!((a - b).abs() <= 1);
            }
        }
    }

    #[test]
    fn float_dct_inverts() {
        let dct = FloatDct::new(8);
        let input: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let mut coef = vec![0.0; 64];
        let mut back = vec![0.0; 64];
        dct.forward_2d(&input, &mut coef);
        dct.inverse_2d(&coef, &mut back);
        for (a, b) in input.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
        let e_in: f64 = input.iter().map(|v| v * v).sum();
        let e_out: f64 = coef.iter().map(|v| v * v).sum();
        assert!((e_in - e_out).abs() / e_in < 1e-12);
    }
}
