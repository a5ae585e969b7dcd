//! Holomorphic functional calculus for commuting tuples.
//!
//! Polynomials and power series are applied directly. The boundary-integral
//! form of the calculus is evaluated by quadrature for one and two
//! variables: the kernel `M_T x` is built from `α_{z-T}^{-1}` and its
//! `z̄`-derivatives, which are taken in closed form,
//! `∂/∂z̄_k α_{z-T}^{-1} = -α^{-1} (L(s_k)* ⊗ 1) α^{-1}`.
//!
//! The form `(M_T x)(z)` lives in `Λ[d z̄] ⊗ Λ[s] ⊗ C^k`. Basis elements are
//! written `dz̄_I ∧ s_J`; left wedging by `s_j` therefore picks up the sign
//! `(-1)^{|I|}`. With that convention the scalar kernel is the
//! Bochner–Martinelli kernel; for two variables the integral over the
//! outward-oriented boundary then carries the factor `(-1)^{n(n-1)/2} = -1`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::num::NonZeroUsize;
use std::sync::Arc;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::{Dyn, LU};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hsproj::{atom_region, hs_joint, Membership, Region};
use crate::jointspec::ExteriorAlgebra;
use crate::numcore::{c, op_norm, projection_distance, CMatrix, CVector, Tolerance, C64};
use crate::triangular::{joint_eigenvalues, joint_measure, pushforward, simultaneous_schur, JointSpectralMeasure};
use crate::tuples::{certify_commuting_with, eval_poly, CommPolynomial, CommutingTuple, PointMap};

type CoeffFn = Arc<dyn Fn(&[u32]) -> C64 + Send + Sync>;
type ValueFn = Arc<dyn Fn(&[C64]) -> C64 + Send + Sync>;
type MajorantFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Power series about the origin.
#[derive(Clone)]
pub struct PowerSeries {
    pub n: usize,
    pub label: String,
    /// Coefficient of `z^α`.
    pub coeff: CoeffFn,
    /// Closed-form value, used for point evaluation.
    pub value: ValueFn,
    /// Polyradius of convergence; infinite for entire functions.
    pub radius: Vec<f64>,
    /// Bound on `|f|` over the closed polydisk of the given radii, which must
    /// lie inside the polyradius of convergence.
    pub majorant: MajorantFn,
}

impl fmt::Debug for PowerSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PowerSeries").field("n", &self.n).field("label", &self.label).field("radius", &self.radius).finish()
    }
}

fn factorial(m: u32) -> f64 {
    (1..=m).map(|i| i as f64).product()
}

impl PowerSeries {
    /// `exp(Σ a_j z_j)`.
    pub fn exp_linear(a: Vec<C64>) -> PowerSeries {
        let n = a.len();
        let (ac, av, am) = (a.clone(), a.clone(), a.clone());
        PowerSeries {
            n,
            label: "exp_linear".into(),
            coeff: Arc::new(move |alpha: &[u32]| {
                alpha.iter().zip(&ac).map(|(&m, aj)| aj.powu(m) / factorial(m)).product()
            }),
            value: Arc::new(move |z: &[C64]| z.iter().zip(&av).map(|(zj, aj)| zj * aj).sum::<C64>().exp()),
            radius: vec![f64::INFINITY; n],
            majorant: Arc::new(move |r: &[f64]| r.iter().zip(&am).map(|(rj, aj)| rj * aj.norm()).sum::<f64>().exp()),
        }
    }

    /// `1 / (w - z_j)` in `n` variables, expanded about the origin.
    pub fn inverse_shift(n: usize, j: usize, w: C64) -> Result<PowerSeries> {
        if j >= n {
            return Err(Error::IndexOutOfRange { index: j, len: n });
        }
        if w.norm() == 0.0 {
            return Err(Error::InvalidArgument("pole at the origin".into()));
        }
        let mut radius = vec![f64::INFINITY; n];
        radius[j] = w.norm();
        Ok(PowerSeries {
            n,
            label: "inverse_shift".into(),
            coeff: Arc::new(move |alpha: &[u32]| {
                if alpha.iter().enumerate().any(|(i, &m)| i != j && m != 0) {
                    c(0.0, 0.0)
                } else {
                    w.powi(-(alpha[j] as i32) - 1)
                }
            }),
            value: Arc::new(move |z: &[C64]| 1.0 / (w - z[j])),
            radius,
            majorant: Arc::new(move |r: &[f64]| 1.0 / (w.norm() - r[j])),
        })
    }
}

/// Function holomorphic near the joint spectrum.
#[derive(Debug, Clone)]
pub enum HoloFunction {
    Polynomial(CommPolynomial),
    Series(PowerSeries),
}

impl HoloFunction {
    pub fn n(&self) -> usize {
        match self {
            HoloFunction::Polynomial(p) => p.n(),
            HoloFunction::Series(s) => s.n,
        }
    }

    /// Value at a point; errors outside the domain of convergence.
    pub fn eval(&self, z: &[C64]) -> Result<C64> {
        if z.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: z.len() });
        }
        match self {
            HoloFunction::Polynomial(p) => p.eval_point(z),
            HoloFunction::Series(s) => {
                if z.iter().zip(&s.radius).any(|(zj, r)| zj.norm() >= *r) {
                    return Err(domain_error(z));
                }
                Ok((s.value)(z))
            }
        }
    }
}

impl PointMap for HoloFunction {
    fn in_dim(&self) -> usize {
        self.n()
    }

    fn out_dim(&self) -> usize {
        1
    }

    fn map_point(&self, z: &[C64]) -> Result<Vec<C64>> {
        Ok(vec![self.eval(z)?])
    }
}

/// Tuple of holomorphic functions `h = (h_1, ..., h_m)`.
#[derive(Debug, Clone)]
pub struct HoloMap(pub Vec<HoloFunction>);

impl PointMap for HoloMap {
    fn in_dim(&self) -> usize {
        self.0.first().map(|f| f.n()).unwrap_or(0)
    }

    fn out_dim(&self) -> usize {
        self.0.len()
    }

    fn map_point(&self, z: &[C64]) -> Result<Vec<C64>> {
        self.0.iter().map(|f| f.eval(z)).collect()
    }
}

fn domain_error(z: &[C64]) -> Error {
    Error::DomainViolation { point: z.iter().map(|w| (w.re, w.im)).collect() }
}

/// Largest truncation degree tried before giving up on a series.
pub const MAX_SERIES_DEGREE: u32 = 400;

/// Multi-indices of total degree `d` in `n` variables, lexicographic.
fn indices_of_degree(n: usize, d: u32) -> Vec<Vec<u32>> {
    if n == 1 {
        return vec![vec![d]];
    }
    let mut out = Vec::new();
    for first in (0..=d).rev() {
        for rest in indices_of_degree(n - 1, d - first) {
            let mut v = Vec::with_capacity(n);
            v.push(first);
            v.extend(rest);
            out.push(v);
        }
    }
    out
}

fn binomial(a: u64, b: u64) -> f64 {
    (0..b).fold(1.0, |acc, i| acc * (a - i) as f64 / (i + 1) as f64)
}

/// Truncation degree and certified tail bound for a series on a tuple.
///
/// With `R_j = 2 ||T_j||` inside the radius of convergence (or halfway to
/// it) Cauchy's estimate gives `|c_α| ≤ M R^{-α}`, so the tail beyond
/// degree `N` is at most `M Σ_{d>N} C(d+n-1, n-1) q^d` with
/// `q = max ||T_j|| / R_j`.
pub fn series_truncation(s: &PowerSeries, norms: &[f64], target: f64) -> Result<(u32, f64)> {
    let n = s.n;
    let mut r = Vec::with_capacity(n);
    for (&nj, &rho) in norms.iter().zip(&s.radius) {
        if nj >= rho {
            return Err(Error::Numerical(format!(
                "operator norm {nj} is not inside the radius of convergence {rho}; the tail cannot be certified"
            )));
        }
        let rj = if rho.is_finite() { (nj + rho) / 2.0 } else { 2.0 * nj };
        r.push(rj.max(1e-300));
    }
    let q = norms.iter().zip(&r).map(|(a, b)| a / b).fold(0.0, f64::max);
    let m = (s.majorant)(&r);
    if !m.is_finite() {
        return Err(Error::Numerical("series majorant is not finite".into()));
    }
    let mut tail: f64 = 0.0;
    // Tail from degree N+1 on, summed backwards from a far cut-off where the
    // remaining terms are below double precision.
    let far = MAX_SERIES_DEGREE + 200;
    let terms: Vec<f64> = (0..=far).map(|d| m * binomial(d as u64 + n as u64 - 1, n as u64 - 1) * q.powi(d as i32)).collect();
    let mut suffix = vec![0.0; terms.len() + 1];
    for d in (0..terms.len()).rev() {
        suffix[d] = suffix[d + 1] + terms[d];
    }
    for nn in 0..=MAX_SERIES_DEGREE {
        tail = suffix[nn as usize + 1];
        if tail <= target {
            return Ok((nn, tail));
        }
    }
    Err(Error::Numerical(format!("series tail {tail} above {target} at degree {MAX_SERIES_DEGREE}")))
}

/// `f(T)` for a polynomial or a power series.
///
/// Series are truncated where the certified tail is at most `1e-12` times
/// the scale `max(1, M)`, with `M` the Cauchy majorant.
pub fn apply_series(f: &HoloFunction, t: &CommutingTuple, tol: &Tolerance) -> Result<CMatrix> {
    if f.n() != t.n() {
        return Err(Error::DimensionMismatch { expected: t.n(), found: f.n() });
    }
    match f {
        HoloFunction::Polynomial(p) => eval_poly(p, t),
        HoloFunction::Series(s) => {
            for p in joint_eigenvalues(&simultaneous_schur(t, tol)?) {
                if p.iter().zip(&s.radius).any(|(z, r)| z.norm() >= *r) {
                    return Err(domain_error(&p));
                }
            }
            let norms = t.norms();
            let probe = series_truncation(s, &norms, f64::INFINITY)?;
            let _ = probe;
            let r: Vec<f64> = norms
                .iter()
                .zip(&s.radius)
                .map(|(&nj, &rho)| if rho.is_finite() { (nj + rho) / 2.0 } else { 2.0 * nj })
                .map(|x| x.max(1e-300))
                .collect();
            let scale = (s.majorant)(&r).max(1.0);
            let (degree, _) = series_truncation(s, &norms, 1e-12 * scale)?;
            let k = t.k();
            let mut powers: Vec<Vec<CMatrix>> = Vec::with_capacity(t.n());
            for m in t.matrices() {
                let mut p = vec![CMatrix::identity(k, k)];
                for d in 1..=degree as usize {
                    let next = &p[d - 1] * m;
                    p.push(next);
                }
                powers.push(p);
            }
            let mut acc = CMatrix::zeros(k, k);
            for d in 0..=degree {
                for alpha in indices_of_degree(t.n(), d) {
                    let cf = (s.coeff)(&alpha);
                    if cf == c(0.0, 0.0) {
                        continue;
                    }
                    let mut term = powers[0][alpha[0] as usize].clone();
                    for (j, &e) in alpha.iter().enumerate().skip(1) {
                        if e > 0 {
                            term = term * &powers[j][e as usize];
                        }
                    }
                    acc += term * cf;
                }
            }
            Ok(acc)
        }
    }
}

/// Applies every component of a map and certifies the image tuple.
pub fn apply_map(h: &HoloMap, t: &CommutingTuple, tol: &Tolerance) -> Result<CommutingTuple> {
    if h.0.is_empty() {
        return Err(Error::Empty("map"));
    }
    let mats = h.0.iter().map(|f| apply_series(f, t, tol)).collect::<Result<Vec<_>>>()?;
    certify_commuting_with(mats, tol.rel_eps)
}

/// Precomputed pieces for evaluating the kernel `M_T`.
#[derive(Debug, Clone)]
pub struct MartinelliContext {
    tuple: CommutingTuple,
    ext: ExteriorAlgebra,
    /// `L(s_j)* ⊗ 1` on `Λ[s] ⊗ C^k`.
    contractions: Vec<CMatrix>,
    /// `L(s_j) ⊗ 1`.
    wedges: Vec<CMatrix>,
    /// `α_{-T}`, so that `α_{z-T} = α_{-T} + Σ z_j L(s_j) ⊗ 1 + conj(z_j) L(s_j)* ⊗ 1`.
    base: CMatrix,
}

/// Largest residual `||α α^{-1} - 1||` accepted at a node.
pub const ALPHA_INVERSE_RESIDUAL: f64 = 1e-10;

impl MartinelliContext {
    pub fn new(t: &CommutingTuple) -> Result<Self> {
        if t.n() > 2 {
            return Err(Error::Unsupported(format!("boundary kernel for n = {} (only n = 1, 2)", t.n())));
        }
        let ext = ExteriorAlgebra::new(t.n())?;
        let eye = CMatrix::identity(t.k(), t.k());
        let contractions = ext.wedges().iter().map(|l| l.adjoint().kronecker(&eye)).collect();
        let wedges = ext.wedges().iter().map(|l| l.kronecker(&eye)).collect();
        let negated: Vec<CMatrix> = t.matrices().iter().map(|m| -m).collect();
        let base = crate::jointspec::alpha_matrix(&ext, &negated)?;
        Ok(MartinelliContext { tuple: t.clone(), ext, contractions, wedges, base })
    }

    pub fn n(&self) -> usize {
        self.tuple.n()
    }

    pub fn k(&self) -> usize {
        self.tuple.k()
    }

    /// Dimension of `Λ[s] ⊗ C^k`.
    pub fn inner_dim(&self) -> usize {
        self.ext.dim() * self.k()
    }

    /// `α_{z-T}` on `Λ[s] ⊗ C^k`.
    pub fn alpha_at(&self, z: &[C64]) -> Result<CMatrix> {
        if z.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: z.len() });
        }
        let mut a = self.base.clone();
        for (j, &zj) in z.iter().enumerate() {
            a.zip_zip_apply(&self.wedges[j], &self.contractions[j], |x, w, l| *x += w * zj + l * zj.conj());
        }
        Ok(a)
    }

    /// `α_{z-T}^{-1}`, rejected when the inversion residual is too large.
    pub fn alpha_inverse(&self, z: &[C64]) -> Result<CMatrix> {
        let a = self.alpha_at(z)?;
        let inv = a.clone().try_inverse().ok_or_else(|| Error::Singular { sigma_min: 0.0 })?;
        let dim = a.nrows();
        let residual = (&a * &inv - CMatrix::identity(dim, dim)).iter().map(|x| x.norm()).fold(0.0, f64::max);
        if !(residual <= ALPHA_INVERSE_RESIDUAL) {
            return Err(Error::Singular { sigma_min: crate::numcore::sigma_min(&a) });
        }
        Ok(inv)
    }

    /// `∂/∂z̄_k α_{z-T}^{-1}` in closed form.
    pub fn alpha_inverse_dbar(&self, z: &[C64], k: usize) -> Result<CMatrix> {
        let inv = self.alpha_inverse(z)?;
        Ok(-(&inv * &self.contractions[k] * &inv))
    }

    /// Column block of `Λ[s] ⊗ C^k` for the top form `s_1 ∧ ... ∧ s_n`.
    fn top_block(&self) -> usize {
        (self.ext.dim() - 1) * self.k()
    }

    /// Solves `α X = B` from an LU factorization and rejects solutions whose
    /// residual exceeds [`ALPHA_INVERSE_RESIDUAL`] relative to `B`.
    fn solve(&self, a: &CMatrix, lu: &LU<C64, Dyn, Dyn>, b: &CMatrix) -> Result<CMatrix> {
        let x = lu.solve(b).ok_or(Error::Singular { sigma_min: 0.0 })?;
        let max_abs = |m: &CMatrix| m.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let residual = max_abs(&(a * &x - b));
        if !(residual <= ALPHA_INVERSE_RESIDUAL * max_abs(b).max(f64::MIN_POSITIVE)) {
            return Err(Error::Singular { sigma_min: crate::numcore::sigma_min(a) });
        }
        Ok(x)
    }

    /// `C^k`-component of the kernel for one `dz̄`-monomial of degree `n-1`,
    /// applied to every basis vector at once.
    ///
    /// For `n = 1` the only monomial is `1` and the block is the `Ω` part of
    /// `α^{-1}(s_1 ⊗ x)`. For `n = 2`, `j = 0` selects the coefficient of
    /// `dz̄_2` and `j = 1` that of `dz̄_1`, the monomials without `dz̄_{j+1}`.
    pub fn kernel_block(&self, z: &[C64], j: usize) -> Result<CMatrix> {
        let k = self.k();
        if j >= self.n().max(1) || (self.n() == 1 && j != 0) {
            return Err(Error::IndexOutOfRange { index: j, len: self.n() });
        }
        let a = self.alpha_at(z)?;
        let lu = a.clone().lu();
        let mut e = CMatrix::zeros(self.inner_dim(), k);
        e.rows_mut(self.top_block(), k).fill_with_identity();
        let top = self.solve(&a, &lu, &e)?;
        if self.n() == 1 {
            return Ok(top.rows(0, k).into_owned());
        }
        // The second application of β meets dz̄_slot ∧ (...), where the wedge
        // sign and the minus from differentiating cancel.
        let slot = 1 - j;
        let w = self.solve(&a, &lu, &(&self.contractions[slot] * &top))?;
        let v = self.solve(&a, &lu, &w)?;
        Ok(v.rows(0, k).into_owned())
    }

    /// Every block of [`MartinelliContext::kernel_block`], in order of `j`.
    pub fn kernel_blocks(&self, z: &[C64]) -> Result<Vec<CMatrix>> {
        (0..self.n()).map(|j| self.kernel_block(z, j)).collect()
    }
}

/// Full kernel `(M_T x)(z)` in `Λ[dz̄] ⊗ Λ[s] ⊗ C^k`.
///
/// Entry `(I | J << n) * k + h` holds the coefficient of `dz̄_I ∧ s_J ⊗ e_h`.
pub fn mt_eval(ctx: &MartinelliContext, x: &CVector, z: &[C64]) -> Result<CVector> {
    let (n, k) = (ctx.n(), ctx.k());
    if x.len() != k {
        return Err(Error::DimensionMismatch { expected: k, found: x.len() });
    }
    let inner = ctx.inner_dim();
    let inv = ctx.alpha_inverse(z)?;
    let mut g0 = CVector::zeros(inner);
    g0.rows_mut(ctx.top_block(), k).copy_from(x);
    let mut out = CVector::zeros((1 << n) * inner);
    let place = |out: &mut CVector, dzb_mask: usize, v: &CVector| {
        for s_mask in 0..(1 << n) {
            for h in 0..k {
                out[(dzb_mask | (s_mask << n)) * k + h] = v[s_mask * k + h];
            }
        }
    };
    match n {
        1 => place(&mut out, 0, &(&inv * g0)),
        _ => {
            let first = &inv * &g0;
            for j in 0..n {
                // -α^{-1} L_j* α^{-1} g0, then β on dz̄_j ∧ (.) contributes (-1)^1 α^{-1}.
                let d = -(&inv * (&ctx.contractions[j] * &first));
                let v = -(&inv * d);
                place(&mut out, 1 << j, &v);
            }
        }
    }
    Ok(out)
}

/// Polydisk of integration and node counts.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSpec {
    pub center: Vec<C64>,
    pub radii: Vec<f64>,
    /// Trapezoid nodes per angular variable.
    pub angular: usize,
    /// Gauss–Legendre nodes per radial variable.
    pub radial: usize,
    /// Smallest admissible distance from the joint eigenvalues to the boundary.
    pub margin: f64,
}

impl QuadratureSpec {
    /// Polydisk centred at the eigenvalue centroid with one common radius:
    /// the largest over coordinates of 1.5 times the eigenvalue spread, and
    /// at least a quarter of `1 + ||T_j||`. Equal radii keep the kernel from
    /// peaking sharply on the face whose circle is much smaller.
    pub fn around(t: &CommutingTuple, tol: &Tolerance, angular: usize, radial: usize) -> Result<Self> {
        let eig = joint_eigenvalues(&simultaneous_schur(t, tol)?);
        let n = t.n();
        let center: Vec<C64> =
            (0..n).map(|j| eig.iter().map(|p| p[j]).sum::<C64>() / eig.len() as f64).collect();
        let norms = t.norms();
        let radius = (0..n)
            .map(|j| {
                let spread = eig.iter().map(|p| (p[j] - center[j]).norm()).fold(0.0, f64::max);
                (1.5 * spread).max(0.25 * (1.0 + norms[j]))
            })
            .fold(0.0, f64::max);
        let radii = vec![radius; n];
        let margin = radii.iter().fold(f64::INFINITY, |a, &r| a.min(r)) * 0.1;
        Ok(QuadratureSpec { center, radii, angular, radial, margin })
    }

    fn validate(&self, t: &CommutingTuple, f: &HoloFunction, tol: &Tolerance) -> Result<()> {
        let n = t.n();
        if self.center.len() != n || self.radii.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: self.center.len() });
        }
        if self.angular < 2 || (n == 2 && self.radial == 0) || !(self.margin > 0.0) {
            return Err(Error::InvalidArgument("quadrature needs nodes and a positive margin".into()));
        }
        for p in joint_eigenvalues(&simultaneous_schur(t, tol)?) {
            for j in 0..n {
                if self.radii[j] - (p[j] - self.center[j]).norm() < self.margin {
                    return Err(domain_error(&p));
                }
            }
        }
        if let HoloFunction::Series(s) = f {
            for j in 0..n {
                if self.center[j].norm() + self.radii[j] >= s.radius[j] {
                    let mut p = self.center.clone();
                    p[j] += self.radii[j];
                    return Err(domain_error(&p));
                }
            }
        }
        Ok(())
    }
}

fn trapezoid(count: usize) -> Vec<(f64, f64)> {
    (0..count).map(|i| (2.0 * PI * i as f64 / count as f64, 2.0 * PI / count as f64)).collect()
}

fn legendre(count: usize, radius: f64) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(count).unwrap_or(NonZeroUsize::MIN));
    rule.as_node_weight_pairs().iter().map(|&(x, w)| ((x + 1.0) * radius / 2.0, w * radius / 2.0)).collect()
}

/// `f(T)` from the boundary integral over the polydisk of `quad`.
///
/// For `n = 1` the boundary is one circle. For `n = 2` it is the union of
/// `{|z_1 - c_1| = r_1} × D_2` and `D_1 × {|z_2 - c_2| = r_2}`; the torus
/// where they meet has no 3-dimensional volume. Each solid face uses the
/// trapezoid rule in its angles and Gauss–Legendre in its radius.
pub fn vasilescu_integral(t: &CommutingTuple, f: &HoloFunction, quad: &QuadratureSpec, tol: &Tolerance) -> Result<CMatrix> {
    Ok(vasilescu_integrals(t, std::slice::from_ref(f), quad, tol)?.remove(0))
}

fn add_scaled(acc: &mut [CMatrix], block: &CMatrix, fs: &[HoloFunction], z: &[C64], weight: C64) -> Result<()> {
    for (a, f) in acc.iter_mut().zip(fs) {
        *a += block * (f.eval(z)? * weight);
    }
    Ok(())
}

fn sum_parts(parts: Vec<Vec<CMatrix>>, count: usize, k: usize) -> Vec<CMatrix> {
    parts.into_iter().fold(vec![CMatrix::zeros(k, k); count], |mut acc, p| {
        for (a, b) in acc.iter_mut().zip(p) {
            *a += b;
        }
        acc
    })
}

/// Several functions against one evaluation of the kernel per node.
pub fn vasilescu_integrals(
    t: &CommutingTuple,
    fs: &[HoloFunction],
    quad: &QuadratureSpec,
    tol: &Tolerance,
) -> Result<Vec<CMatrix>> {
    if fs.is_empty() {
        return Err(Error::Empty("function list"));
    }
    if t.n() > 2 {
        return Err(Error::Unsupported(format!("boundary quadrature for n = {}", t.n())));
    }
    for f in fs {
        if f.n() != t.n() {
            return Err(Error::DimensionMismatch { expected: t.n(), found: f.n() });
        }
        quad.validate(t, f, tol)?;
    }
    let ctx = MartinelliContext::new(t)?;
    let (k, count) = (t.k(), fs.len());
    let angles = trapezoid(quad.angular);
    match t.n() {
        1 => {
            let (c0, r) = (quad.center[0], quad.radii[0]);
            let parts = angles
                .par_iter()
                .map(|&(th, w)| {
                    let e = C64::from_polar(1.0, th);
                    let z = [c0 + e * r];
                    let block = ctx.kernel_block(&z, 0)?;
                    let mut acc = vec![CMatrix::zeros(k, k); count];
                    // dz = i r e^{iθ} dθ
                    add_scaled(&mut acc, &block, fs, &z, c(0.0, r) * e * w)?;
                    Ok(acc)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(sum_parts(parts, count, k).into_iter().map(|m| m / c(0.0, 2.0 * PI)).collect())
        }
        _ => {
            let radial: Vec<Vec<(f64, f64)>> = quad.radii.iter().map(|&r| legendre(quad.radial, r)).collect();
            // Face on |z_1 - c_1| = r_1: only dz̄_2 ∧ dz_1 ∧ dz_2 survives and it
            // equals 2 r_1 ρ e^{iθ} dθ dρ dφ in the outward orientation.
            // Face on |z_2 - c_2| = r_2: dz̄_1 ∧ dz_1 ∧ dz_2 = -2 ρ r_2 e^{iψ} dρ dφ dψ.
            let face = |circle: usize| -> Result<Vec<CMatrix>> {
                let solid = 1 - circle;
                let sign = if circle == 0 { 2.0 } else { -2.0 };
                let parts = angles
                    .par_iter()
                    .map(|&(th, wt)| {
                        let e = C64::from_polar(1.0, th);
                        let mut acc = vec![CMatrix::zeros(k, k); count];
                        for &(ph, wp) in &angles {
                            let ep = C64::from_polar(1.0, ph);
                            for &(rho, wr) in &radial[solid] {
                                let mut z = [c(0.0, 0.0); 2];
                                z[circle] = quad.center[circle] + e * quad.radii[circle];
                                z[solid] = quad.center[solid] + ep * rho;
                                // Block `circle` is the coefficient of dz̄ of the solid coordinate.
                                let block = ctx.kernel_block(&z, circle)?;
                                let form = e * (sign * quad.radii[circle] * rho * wt * wp * wr);
                                add_scaled(&mut acc, &block, fs, &z, form)?;
                            }
                        }
                        Ok(acc)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(sum_parts(parts, count, k))
            };
            let two_pi_i = c(0.0, 2.0 * PI);
            let scale = -(two_pi_i * two_pi_i).inv();
            Ok(face(0)?.into_iter().zip(face(1)?).map(|(a, b)| (a + b) * scale).collect())
        }
    }
}

/// Observed convergence order `log2(e_N / e_{2N})` from errors at `N` and `2N` nodes.
pub fn observed_order(error_coarse: f64, error_fine: f64) -> f64 {
    (error_coarse / error_fine).log2()
}

/// Outcome of comparing both sides of the push-forward identities.
#[derive(Debug, Clone)]
pub struct PushforwardReport {
    pub image: JointSpectralMeasure,
    pub pushed: JointSpectralMeasure,
    /// Distance between `ν_{h(T)}` and `h_* ν_T`.
    pub atom_distance: f64,
    /// Distance between `P(h(T) : X)` and `P(T : h^{-1}(X))` per region.
    pub projection_distances: Vec<f64>,
}

/// Region in `C^n` made of small polydisks around the atoms that `h` maps into `x`.
pub fn preimage_region(nu: &JointSpectralMeasure, h: &dyn PointMap, x: &Region, band: f64) -> Result<Region> {
    let mut selected = Vec::new();
    for (i, a) in nu.atoms().iter().enumerate() {
        let y = h.map_point(a)?;
        match x.classify(&y, band) {
            Membership::Inside => selected.push(i),
            Membership::Outside => {}
            Membership::Ambiguous => {
                return Err(Error::BoundaryAmbiguous { point: y.iter().map(|w| (w.re, w.im)).collect() })
            }
        }
    }
    Ok(atom_region(nu.atoms(), &selected))
}

/// Checks `ν_{h(T)} = h_* ν_T` and `P(h(T) : X) = P(T : h^{-1}(X))`.
pub fn verify_pushforward(h: &HoloMap, t: &CommutingTuple, regions: &[Region], tol: &Tolerance) -> Result<PushforwardReport> {
    if h.in_dim() != t.n() {
        return Err(Error::DimensionMismatch { expected: t.n(), found: h.in_dim() });
    }
    let ht = apply_map(h, t, tol)?;
    let nu = joint_measure(t, tol)?;
    let image = joint_measure(&ht, tol)?;
    let pushed = pushforward(&nu, h)?;
    let atom_distance = image.distance(&pushed);
    let band = crate::hsproj::boundary_band(&ht, tol);
    let mut projection_distances = Vec::with_capacity(regions.len());
    for x in regions {
        let lhs = hs_joint(&ht, x, tol)?.subspace;
        let pre = preimage_region(&nu, h, x, band)?;
        let rhs = hs_joint(t, &pre, tol)?.subspace;
        projection_distances.push(projection_distance(&lhs, &rhs)?);
    }
    Ok(PushforwardReport { image, pushed, atom_distance, projection_distances })
}

/// Sparse polynomial from `(exponents, coefficient)` pairs.
pub fn polynomial(n: usize, terms: &[(&[u32], C64)]) -> Result<HoloFunction> {
    let map: BTreeMap<Vec<u32>, C64> = terms.iter().map(|(e, v)| (e.to_vec(), *v)).collect();
    Ok(HoloFunction::Polynomial(CommPolynomial::from_terms(n, map)?))
}

/// Largest `||T_j||`, used to scale quadrature tolerances.
pub fn tuple_scale(t: &CommutingTuple) -> f64 {
    t.matrices().iter().map(op_norm).fold(1.0, f64::max)
}
