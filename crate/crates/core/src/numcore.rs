//! Dense complex matrices, tolerances and the lattice of subspaces.
//!
//! A [`Subspace`] is stored as an orthonormal frame. The zero subspace has a
//! frame with no columns. All rank decisions go through [`Tolerance`].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_rational::Ratio;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub mod fixtures;
pub mod random;

/// Shorthand for a complex scalar.
#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Absolute and relative thresholds for numerical decisions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs_eps: f64,
    pub rel_eps: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { abs_eps: 1e-10, rel_eps: 1e-8 }
    }
}

impl Tolerance {
    pub fn new(abs_eps: f64, rel_eps: f64) -> Result<Self> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(abs_eps) || !ok(rel_eps) {
            return Err(Error::InvalidArgument(format!(
                "tolerances must be positive and finite (abs {abs_eps}, rel {rel_eps})"
            )));
        }
        Ok(Self { abs_eps, rel_eps })
    }

    /// Decision threshold `abs_eps + rel_eps * scale`.
    #[inline]
    pub fn threshold(&self, scale: f64) -> f64 {
        self.abs_eps + self.rel_eps * scale.abs()
    }

    /// Both thresholds multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { abs_eps: self.abs_eps * factor, rel_eps: self.rel_eps * factor }
    }
}

pub fn check_finite(m: &CMatrix, what: &'static str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Returns the size of a square, non-empty matrix.
pub fn check_square(m: &CMatrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    if m.nrows() == 0 {
        return Err(Error::Empty("matrix"));
    }
    Ok(m.nrows())
}

/// Thin singular value decomposition `A = U diag(s) V*` with `s` descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMatrix,
    pub s: Vec<f64>,
    pub v: CMatrix,
}

fn to_faer(a: &CMatrix) -> faer::Mat<C64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Thin SVD of an arbitrary matrix.
pub fn svd(a: &CMatrix) -> Result<Svd> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        let r = m.min(n);
        return Ok(Svd { u: CMatrix::zeros(m, r), s: Vec::new(), v: CMatrix::zeros(n, r) });
    }
    let f = to_faer(a);
    let dec = f.thin_svd().map_err(|e| Error::Numerical(format!("svd: {e:?}")))?;
    let (fu, fs, fv) = (dec.U(), dec.S(), dec.V());
    let r = fs.dim();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| fs[j].re.total_cmp(&fs[i].re));
    let u = CMatrix::from_fn(m, r, |i, j| fu[(i, order[j])]);
    let v = CMatrix::from_fn(n, r, |i, j| fv[(i, order[j])]);
    let s = order.iter().map(|&i| fs[i].re).collect();
    Ok(Svd { u, s, v })
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(a: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let k = check_square(a)?;
    let f = to_faer(a);
    let dec = f
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Numerical(format!("hermitian eigensolver: {e:?}")))?;
    let (fu, fs) = (dec.U(), dec.S());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| fs[i].re.total_cmp(&fs[j].re));
    let vecs = CMatrix::from_fn(k, k, |i, j| fu[(i, order[j])]);
    Ok((order.iter().map(|&i| fs[i].re).collect(), vecs))
}

/// Singular values in descending order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = match to_faer(m).singular_values() {
        Ok(s) => s,
        Err(_) => svd(m).map(|d| d.s).unwrap_or_else(|_| vec![f64::NAN]),
    };
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Spectral norm (largest singular value); zero for empty matrices.
pub fn op_norm(m: &CMatrix) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Frobenius norm of the strictly lower triangular part.
pub fn strict_lower_norm(m: &CMatrix) -> f64 {
    let mut acc = 0.0;
    for j in 0..m.ncols() {
        for i in (j + 1)..m.nrows() {
            acc += m[(i, j)].norm_sqr();
        }
    }
    acc.sqrt()
}

/// Smallest singular value of a square matrix.
pub fn sigma_min(m: &CMatrix) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

/// Condition number in the spectral norm.
pub fn condition_number(m: &CMatrix) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Inverse via LU, rejecting numerically singular input.
pub fn inverse(m: &CMatrix, tol: &Tolerance) -> Result<CMatrix> {
    check_square(m)?;
    let s = singular_values(m);
    let smin = *s.last().unwrap_or(&0.0);
    if smin <= tol.threshold(s[0]) {
        return Err(Error::Singular { sigma_min: smin });
    }
    m.clone().lu().try_inverse().ok_or(Error::Singular { sigma_min: smin })
}

/// Numerical rank under the rule `sigma > abs_eps + rel_eps * sigma_max`.
pub fn numerical_rank(m: &CMatrix, tol: &Tolerance) -> usize {
    let s = singular_values(m);
    let Some(&smax) = s.first() else { return 0 };
    let cut = tol.threshold(smax);
    s.iter().filter(|&&x| x > cut).count()
}

/// Iteration cap per Schur attempt, scaled by the dimension.
const SCHUR_SWEEPS: usize = 200;

/// Complex Schur form `m = Q T Q*`.
///
/// The QR iteration can stall, notably on matrices that are a multiple of
/// the identity up to rounding. The mean diagonal is removed first, and a
/// stalled attempt is retried on a seeded unitary conjugate.
pub fn schur_form(m: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    check_square(m)?;
    check_finite(m, "matrix")?;
    let k = m.nrows();
    if k == 0 {
        return Ok((m.clone(), m.clone()));
    }
    // Removing the mean diagonal keeps near-scalar inputs from stalling.
    let shift = m.trace() / c(k as f64, 0.0);
    let centred = m - CMatrix::identity(k, k) * shift;
    let unshift = |q: CMatrix, t: CMatrix| (q, t + CMatrix::identity(k, k) * shift);
    let cap = SCHUR_SWEEPS * k;
    if let Some(s) = nalgebra::Schur::try_new(centred.clone(), f64::EPSILON, cap) {
        let (q, t) = s.unpack();
        return Ok(unshift(q, t));
    }
    let mut rng = random::rng(0x5c4u64);
    for _ in 0..8 {
        let u = random::unitary(&mut rng, k);
        let conj = u.adjoint() * &centred * &u;
        if let Some(s) = nalgebra::Schur::try_new(conj, f64::EPSILON, cap) {
            let (q, t) = s.unpack();
            return Ok(unshift(u * q, t));
        }
    }
    Err(Error::Numerical("Schur iteration did not converge".into()))
}

/// Eigenvalues from the complex Schur form, in diagonal order.
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<C64>> {
    let (_, t) = schur_form(m)?;
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Closed subspace of `C^k` held as an orthonormal frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    ambient: usize,
    frame: CMatrix,
}

impl Subspace {
    pub fn zero(ambient: usize) -> Self {
        Self { ambient, frame: CMatrix::zeros(ambient, 0) }
    }

    pub fn full(ambient: usize) -> Self {
        Self { ambient, frame: CMatrix::identity(ambient, ambient) }
    }

    /// Wraps a frame whose columns are already orthonormal.
    pub fn from_orthonormal(frame: CMatrix, tol: &Tolerance) -> Result<Self> {
        check_finite(&frame, "frame")?;
        let m = frame.ncols();
        let gram = frame.adjoint() * &frame - CMatrix::identity(m, m);
        let err = op_norm(&gram);
        if err > tol.threshold(1.0) {
            return Err(Error::Numerical(format!("frame is not orthonormal (error {err:e})")));
        }
        Ok(Self { ambient: frame.nrows(), frame })
    }

    /// Column space of an arbitrary `k x m` matrix at numerical rank.
    pub fn span(columns: &CMatrix, tol: &Tolerance) -> Result<Self> {
        check_finite(columns, "columns")?;
        column_space(columns, tol)
    }

    /// Span of the given vectors.
    pub fn span_of(ambient: usize, vectors: &[CVector], tol: &Tolerance) -> Result<Self> {
        for v in vectors {
            if v.len() != ambient {
                return Err(Error::DimensionMismatch { expected: ambient, found: v.len() });
            }
        }
        let m = CMatrix::from_fn(ambient, vectors.len(), |i, j| vectors[j][i]);
        Self::span(&m, tol)
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.frame.ncols()
    }

    pub fn frame(&self) -> &CMatrix {
        &self.frame
    }

    pub fn into_frame(self) -> CMatrix {
        self.frame
    }

    pub fn is_zero(&self) -> bool {
        self.dim() == 0
    }

    /// Orthogonal projector `F F*`.
    pub fn projector(&self) -> CMatrix {
        &self.frame * self.frame.adjoint()
    }

    /// Normalized trace `dim / ambient`.
    pub fn trace(&self) -> f64 {
        self.dim() as f64 / self.ambient as f64
    }

    /// Normalized trace as an exact fraction.
    pub fn trace_ratio(&self) -> Ratio<usize> {
        Ratio::new(self.dim(), self.ambient)
    }

    /// Orthogonal complement `1 - P`.
    pub fn complement(&self, tol: &Tolerance) -> Self {
        if self.is_zero() {
            return Self::full(self.ambient);
        }
        if self.dim() == self.ambient {
            return Self::zero(self.ambient);
        }
        let id = CMatrix::identity(self.ambient, self.ambient);
        let target = self.ambient - self.dim();
        match svd(&(id - self.projector())) {
            Ok(d) => Subspace { ambient: self.ambient, frame: d.u.columns(0, target).into_owned() },
            Err(_) => column_space(&(CMatrix::identity(self.ambient, self.ambient) - self.projector()), tol)
                .unwrap_or_else(|_| Subspace::zero(self.ambient)),
        }
    }

    /// Norm of the component of `v` orthogonal to the subspace.
    pub fn residual_of(&self, v: &CVector) -> f64 {
        (v - &self.frame * (self.frame.adjoint() * v)).norm()
    }

    /// `other <= self` in the lattice.
    pub fn contains(&self, other: &Subspace, tol: &Tolerance) -> Result<bool> {
        same_ambient(self, other)?;
        if other.is_zero() {
            return Ok(true);
        }
        let r = &other.frame - &self.frame * (self.frame.adjoint() * &other.frame);
        Ok(op_norm(&r) <= tol.threshold(1.0))
    }

    /// `||(1 - P) A P||`, zero exactly when the subspace is `A`-invariant.
    pub fn invariance_residual(&self, a: &CMatrix) -> Result<f64> {
        if a.nrows() != self.ambient || a.ncols() != self.ambient {
            return Err(Error::DimensionMismatch { expected: self.ambient, found: a.nrows() });
        }
        if self.is_zero() {
            return Ok(0.0);
        }
        let af = a * &self.frame;
        Ok(op_norm(&(&af - &self.frame * (self.frame.adjoint() * &af))))
    }

    /// Image of the subspace under a `k' x k` matrix.
    pub fn image_under(&self, a: &CMatrix, tol: &Tolerance) -> Result<Subspace> {
        if a.ncols() != self.ambient {
            return Err(Error::DimensionMismatch { expected: self.ambient, found: a.ncols() });
        }
        Subspace::span(&(a * &self.frame), tol)
    }
}

fn same_ambient(p: &Subspace, q: &Subspace) -> Result<()> {
    if p.ambient != q.ambient {
        return Err(Error::DimensionMismatch { expected: p.ambient, found: q.ambient });
    }
    Ok(())
}

fn column_space(a: &CMatrix, tol: &Tolerance) -> Result<Subspace> {
    let k = a.nrows();
    if a.ncols() == 0 {
        return Ok(Subspace::zero(k));
    }
    let d = svd(a)?;
    let smax = d.s.first().copied().unwrap_or(0.0);
    let cut = tol.threshold(smax);
    let rank = d.s.iter().take_while(|&&x| x > cut).count();
    Ok(Subspace { ambient: k, frame: d.u.columns(0, rank).into_owned() })
}

/// Range of a square matrix at numerical rank.
pub fn range_projection(a: &CMatrix, tol: &Tolerance) -> Result<Subspace> {
    check_square(a)?;
    check_finite(a, "matrix")?;
    column_space(a, tol)
}

/// Intersection `P ∧ Q`.
///
/// Directions of `P` whose principal angle to `Q` has sine at most
/// `tol.threshold(1)` are kept. Sines are read from the residual
/// `(1 - QQ*) F_P`, which stays accurate for nearly touching subspaces.
pub fn meet(p: &Subspace, q: &Subspace, tol: &Tolerance) -> Result<Subspace> {
    same_ambient(p, q)?;
    let k = p.ambient;
    if p.is_zero() || q.is_zero() {
        return Ok(Subspace::zero(k));
    }
    let (a, b) = if p.dim() <= q.dim() { (p, q) } else { (q, p) };
    let resid = &a.frame - &b.frame * (b.frame.adjoint() * &a.frame);
    let d = svd(&resid)?;
    let cut = tol.threshold(1.0);
    let keep: Vec<usize> = (0..d.s.len()).rev().filter(|&i| d.s[i] <= cut).collect();
    if keep.is_empty() {
        return Ok(Subspace::zero(k));
    }
    let v = CMatrix::from_fn(a.dim(), keep.len(), |i, j| d.v[(i, keep[j])]);
    Ok(Subspace { ambient: k, frame: &a.frame * v })
}

/// Closed span `P ∨ Q`.
pub fn join(p: &Subspace, q: &Subspace, tol: &Tolerance) -> Result<Subspace> {
    same_ambient(p, q)?;
    if p.is_zero() {
        return Ok(q.clone());
    }
    if q.is_zero() {
        return Ok(p.clone());
    }
    let stacked = CMatrix::from_fn(p.ambient, p.dim() + q.dim(), |i, j| {
        if j < p.dim() {
            p.frame[(i, j)]
        } else {
            q.frame[(i, j - p.dim())]
        }
    });
    column_space(&stacked, tol)
}

/// Join of a list of subspaces of `C^ambient`.
pub fn join_all(ambient: usize, parts: &[Subspace], tol: &Tolerance) -> Result<Subspace> {
    parts.iter().try_fold(Subspace::zero(ambient), |acc, s| join(&acc, s, tol))
}

/// Meet of a list of subspaces of `C^ambient`.
pub fn meet_all(ambient: usize, parts: &[Subspace], tol: &Tolerance) -> Result<Subspace> {
    parts.iter().try_fold(Subspace::full(ambient), |acc, s| meet(&acc, s, tol))
}

/// Operator-norm distance between the two orthogonal projectors.
pub fn projection_distance(p: &Subspace, q: &Subspace) -> Result<f64> {
    same_ambient(p, q)?;
    Ok(op_norm(&(p.projector() - q.projector())))
}

/// Principal angles in ascending order, `min(dim P, dim Q)` of them.
pub fn principal_angles(p: &Subspace, q: &Subspace) -> Result<Vec<f64>> {
    same_ambient(p, q)?;
    if p.is_zero() || q.is_zero() {
        return Ok(Vec::new());
    }
    let (a, b) = if p.dim() <= q.dim() { (p, q) } else { (q, p) };
    let resid = &a.frame - &b.frame * (b.frame.adjoint() * &a.frame);
    let mut angles: Vec<f64> = singular_values(&resid).into_iter().map(|s| s.min(1.0).asin()).collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}

/// Embeds a subspace of a compressed space back through an isometry `W`.
pub fn embed(sub: &Subspace, isometry: &CMatrix) -> Result<Subspace> {
    if isometry.ncols() != sub.ambient {
        return Err(Error::DimensionMismatch { expected: sub.ambient, found: isometry.ncols() });
    }
    Ok(Subspace { ambient: isometry.nrows(), frame: isometry * &sub.frame })
}
