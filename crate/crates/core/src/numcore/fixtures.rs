//! Finite truncations of subspace configurations whose infinite-dimensional
//! versions break trace-based lattice identities.

use super::{c, CMatrix, CVector, Subspace, Tolerance};
use crate::error::{Error, Result};

/// `P = e_n^⊥` and `Q = (e_1/n + e_n)^⊥` in `C^dim` (basis indices start at 1).
pub fn shifted_hyperplanes(dim: usize, n: usize, tol: &Tolerance) -> Result<(Subspace, Subspace)> {
    if n < 2 || n > dim {
        return Err(Error::IndexOutOfRange { index: n, len: dim });
    }
    let mut en = CVector::zeros(dim);
    en[n - 1] = c(1.0, 0.0);
    let mut shifted = en.clone();
    shifted[0] = c(1.0 / n as f64, 0.0);
    let p = Subspace::span_of(dim, &[en], tol)?.complement(tol);
    let q = Subspace::span_of(dim, &[shifted], tol)?.complement(tol);
    Ok((p, q))
}

/// Truncated graph-space configuration in `⊕_{m=0}^{N} C^2`.
pub struct GraphSpaces {
    /// `span{e_0 + m e_m : 1 <= m <= N}`.
    pub e: Subspace,
    /// `span{f_m : 0 <= m <= N}`.
    pub f: Subspace,
    /// `span{e_m : 0 <= m <= N}`.
    pub g: Subspace,
    pub e0: CVector,
}

/// Unit vectors `e_m`, `f_m` in the `m`-th copy of `C^2` with
/// `<e_m, f_m> = 1 - 1/m^3` for `m >= 1`; `f_0` is orthogonal to `e_0`.
pub fn graph_spaces(truncation: usize, tol: &Tolerance) -> Result<GraphSpaces> {
    if truncation == 0 {
        return Err(Error::InvalidArgument("truncation must be positive".into()));
    }
    let dim = 2 * (truncation + 1);
    let e_vec = |m: usize| {
        let mut v = CVector::zeros(dim);
        v[2 * m] = c(1.0, 0.0);
        v
    };
    let f_vec = |m: usize| {
        let mut v = CVector::zeros(dim);
        let cosine = if m == 0 { 0.0 } else { 1.0 - 1.0 / (m as f64).powi(3) };
        let sine = (1.0 - cosine * cosine).sqrt();
        v[2 * m] = c(cosine, 0.0);
        v[2 * m + 1] = c(sine, 0.0);
        v
    };
    let e0 = e_vec(0);
    let e_span: Vec<CVector> = (1..=truncation).map(|m| &e0 + e_vec(m) * c(m as f64, 0.0)).collect();
    let f_span: Vec<CVector> = (0..=truncation).map(f_vec).collect();
    let g_span: Vec<CVector> = (0..=truncation).map(e_vec).collect();
    let orth = |vs: &[CVector]| -> Result<Subspace> {
        let m = CMatrix::from_fn(dim, vs.len(), |i, j| vs[j][i]);
        let q = m.qr().q();
        Subspace::from_orthonormal(q, tol)
    };
    Ok(GraphSpaces { e: orth(&e_span)?, f: orth(&f_span)?, g: orth(&g_span)?, e0 })
}
