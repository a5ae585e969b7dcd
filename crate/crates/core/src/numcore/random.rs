//! Seeded generators for matrices and subspaces.
//!
//! Every generator takes an explicit RNG built by [`rng`], so results are
//! reproducible from a `u64` seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{c, CMatrix, Subspace, C64};

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard complex Gaussian scalar (unit variance).
pub fn complex_normal(rng: &mut SeededRng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Complex Gaussian matrix with unit-variance entries.
pub fn gaussian(rng: &mut SeededRng, rows: usize, cols: usize) -> CMatrix {
    let mut m = CMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = complex_normal(rng);
        }
    }
    m
}

/// Haar-distributed unitary from a phase-corrected QR factorization.
pub fn unitary(rng: &mut SeededRng, k: usize) -> CMatrix {
    let qr = gaussian(rng, k, k).qr();
    let (mut q, r) = qr.unpack();
    for j in 0..k {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c(1.0, 0.0) };
        for i in 0..k {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Invertible matrix `U diag(s) V*` with condition number at most `cond_cap`.
pub fn invertible(rng: &mut SeededRng, k: usize, cond_cap: f64) -> CMatrix {
    let u = unitary(rng, k);
    let v = unitary(rng, k);
    let cap = cond_cap.max(1.0);
    let s: Vec<f64> = (0..k).map(|_| cap.powf(rng.random::<f64>())).collect();
    let d = CMatrix::from_fn(k, k, |i, j| if i == j { c(s[i], 0.0) } else { c(0.0, 0.0) });
    u * d * v.adjoint()
}

/// Random subspace of the given dimension.
pub fn subspace(rng: &mut SeededRng, k: usize, dim: usize) -> Subspace {
    if dim == 0 {
        return Subspace::zero(k);
    }
    let u = unitary(rng, k);
    let frame = u.columns(0, dim.min(k)).into_owned();
    Subspace::from_orthonormal(frame, &Default::default()).expect("unitary columns are orthonormal")
}

/// Uniform real number in `[lo, hi)`.
pub fn uniform(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Uniform integer in `[lo, hi]`.
pub fn int_in(rng: &mut SeededRng, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}
