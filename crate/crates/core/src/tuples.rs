//! Certified commuting tuples, polynomials in commuting variables,
//! nilpotency tests and seeded tuple generators.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};
use crate::numcore::random::{self, SeededRng};
use crate::numcore::{self, c, check_finite, check_square, op_norm, CMatrix, Tolerance, C64};

/// Content hash identifying a tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TupleId(pub u64);

/// Normalized commutator `||AB - BA|| / max(1, ||A|| ||B||)`.
pub fn commutation_residual(a: &CMatrix, b: &CMatrix) -> f64 {
    let comm = a * b - b * a;
    op_norm(&comm) / (op_norm(a) * op_norm(b)).max(1.0)
}

/// `n` pairwise commuting `k x k` matrices with a recorded commutation residual.
#[derive(Debug, Clone)]
pub struct CommutingTuple {
    matrices: Vec<CMatrix>,
    comm_residual: f64,
    id: TupleId,
}

/// Certifies commutation using `tol.abs_eps` as the residual threshold.
pub fn certify_commuting(matrices: Vec<CMatrix>, tol: &Tolerance) -> Result<CommutingTuple> {
    certify_commuting_with(matrices, tol.abs_eps)
}

/// Certifies commutation against an explicit residual threshold.
pub fn certify_commuting_with(matrices: Vec<CMatrix>, threshold: f64) -> Result<CommutingTuple> {
    let first = matrices.first().ok_or(Error::Empty("tuple"))?;
    let k = check_square(first)?;
    for m in &matrices {
        let kk = check_square(m)?;
        if kk != k {
            return Err(Error::DimensionMismatch { expected: k, found: kk });
        }
        check_finite(m, "tuple matrix")?;
    }
    let mut worst = 0.0f64;
    for i in 0..matrices.len() {
        for j in (i + 1)..matrices.len() {
            let r = commutation_residual(&matrices[i], &matrices[j]);
            if r > threshold {
                return Err(Error::NonCommuting { i, j, residual: r });
            }
            worst = worst.max(r);
        }
    }
    let id = tuple_id(&matrices);
    Ok(CommutingTuple { matrices, comm_residual: worst, id })
}

fn tuple_id(matrices: &[CMatrix]) -> TupleId {
    let mut h = DefaultHasher::new();
    matrices.len().hash(&mut h);
    for m in matrices {
        m.nrows().hash(&mut h);
        for z in m.iter() {
            z.re.to_bits().hash(&mut h);
            z.im.to_bits().hash(&mut h);
        }
    }
    TupleId(h.finish())
}

impl CommutingTuple {
    /// Ambient dimension.
    pub fn k(&self) -> usize {
        self.matrices[0].nrows()
    }

    /// Number of operators.
    pub fn n(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrices(&self) -> &[CMatrix] {
        &self.matrices
    }

    pub fn matrix(&self, i: usize) -> &CMatrix {
        &self.matrices[i]
    }

    pub fn comm_residual(&self) -> f64 {
        self.comm_residual
    }

    pub fn id(&self) -> TupleId {
        self.id
    }

    /// Spectral norms of the operators.
    pub fn norms(&self) -> Vec<f64> {
        self.matrices.iter().map(op_norm).collect()
    }

    /// Largest operator norm.
    pub fn scale(&self) -> f64 {
        self.norms().into_iter().fold(0.0, f64::max)
    }

    fn rewrap(&self, matrices: Vec<CMatrix>) -> CommutingTuple {
        let mut worst = 0.0f64;
        for i in 0..matrices.len() {
            for j in (i + 1)..matrices.len() {
                worst = worst.max(commutation_residual(&matrices[i], &matrices[j]));
            }
        }
        let id = tuple_id(&matrices);
        CommutingTuple { matrices, comm_residual: worst, id }
    }

    /// The adjoint tuple `(T_1*, ..., T_n*)`.
    pub fn adjoint(&self) -> CommutingTuple {
        self.rewrap(self.matrices.iter().map(|m| m.adjoint()).collect())
    }

    /// `S T_i S^{-1}` for every `i`, re-certified against `threshold`.
    pub fn similar(&self, s: &CMatrix, tol: &Tolerance, threshold: f64) -> Result<CommutingTuple> {
        if s.nrows() != self.k() || s.ncols() != self.k() {
            return Err(Error::DimensionMismatch { expected: self.k(), found: s.nrows() });
        }
        let sinv = numcore::inverse(s, tol)?;
        certify_commuting_with(self.matrices.iter().map(|m| s * m * &sinv).collect(), threshold)
    }

    /// `W* T_i W` for an isometry `W`, re-certified against `threshold`.
    pub fn compress(&self, w: &CMatrix, threshold: f64) -> Result<CommutingTuple> {
        if w.nrows() != self.k() {
            return Err(Error::DimensionMismatch { expected: self.k(), found: w.nrows() });
        }
        if w.ncols() == 0 {
            return Err(Error::Empty("compression"));
        }
        certify_commuting_with(self.matrices.iter().map(|m| w.adjoint() * m * w).collect(), threshold)
    }

    /// `T_i - w_i I` for every coordinate.
    pub fn shifted(&self, w: &[C64]) -> Result<Vec<CMatrix>> {
        if w.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: w.len() });
        }
        let k = self.k();
        Ok(self
            .matrices
            .iter()
            .zip(w)
            .map(|(m, &wi)| m - CMatrix::identity(k, k) * wi)
            .collect())
    }
}

/// Polynomial in `n` commuting variables with complex coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CommPolynomial {
    n: usize,
    terms: BTreeMap<Vec<u32>, C64>,
}

impl CommPolynomial {
    pub fn zero(n: usize) -> Self {
        Self { n, terms: BTreeMap::new() }
    }

    pub fn constant(n: usize, value: C64) -> Self {
        let mut p = Self::zero(n);
        p.add_term(vec![0; n], value).expect("arity matches");
        p
    }

    /// The coordinate function `z_j` (zero-based `j`).
    pub fn coordinate(n: usize, j: usize) -> Result<Self> {
        if j >= n {
            return Err(Error::IndexOutOfRange { index: j, len: n });
        }
        let mut e = vec![0; n];
        e[j] = 1;
        let mut p = Self::zero(n);
        p.add_term(e, c(1.0, 0.0))?;
        Ok(p)
    }

    pub fn from_terms<I: IntoIterator<Item = (Vec<u32>, C64)>>(n: usize, terms: I) -> Result<Self> {
        let mut p = Self::zero(n);
        for (e, v) in terms {
            p.add_term(e, v)?;
        }
        Ok(p)
    }

    /// Adds `value * z^exps`, merging with an existing monomial.
    pub fn add_term(&mut self, exps: Vec<u32>, value: C64) -> Result<()> {
        if exps.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: exps.len() });
        }
        if !(value.re.is_finite() && value.im.is_finite()) {
            return Err(Error::NonFinite("coefficient"));
        }
        let entry = self.terms.entry(exps).or_insert(c(0.0, 0.0));
        *entry += value;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &BTreeMap<Vec<u32>, C64> {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn constant_term(&self) -> C64 {
        self.terms.get(&vec![0; self.n]).copied().unwrap_or(c(0.0, 0.0))
    }

    fn check_arity(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: other.n });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_arity(other)?;
        let mut out = self.clone();
        for (e, &v) in &other.terms {
            out.add_term(e.clone(), v)?;
        }
        Ok(out)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_arity(other)?;
        let mut out = Self::zero(self.n);
        for (ea, &va) in &self.terms {
            for (eb, &vb) in &other.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, va * vb)?;
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { n: self.n, terms: self.terms.iter().map(|(e, &v)| (e.clone(), v * s)).collect() }
    }

    /// Value at a point of `C^n`.
    pub fn eval_point(&self, z: &[C64]) -> Result<C64> {
        if z.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: z.len() });
        }
        Ok(self
            .terms
            .iter()
            .map(|(e, &v)| e.iter().zip(z).fold(v, |acc, (&p, &zi)| acc * zi.powu(p)))
            .sum())
    }

    /// Random polynomial of total degree at most `max_degree`.
    pub fn random(rng: &mut SeededRng, n: usize, max_degree: u32, zero_constant: bool) -> Self {
        let mut p = Self::zero(n);
        let count = random::int_in(rng, 1, 4);
        for _ in 0..count {
            let deg = random::int_in(rng, if zero_constant { 1 } else { 0 }, max_degree.max(1) as usize);
            let mut e = vec![0u32; n];
            for _ in 0..deg {
                e[random::int_in(rng, 0, n - 1)] += 1;
            }
            let v = random::complex_normal(rng) / (1.0 + deg as f64);
            p.add_term(e, v).expect("arity matches");
        }
        if zero_constant {
            p.terms.remove(&vec![0; n]);
        }
        p
    }
}

/// A map `C^n -> C^m` that can be applied to atoms of a measure.
pub trait PointMap: Sync {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn map_point(&self, z: &[C64]) -> Result<Vec<C64>>;
}

impl PointMap for CommPolynomial {
    fn in_dim(&self) -> usize {
        self.n
    }

    fn out_dim(&self) -> usize {
        1
    }

    fn map_point(&self, z: &[C64]) -> Result<Vec<C64>> {
        Ok(vec![self.eval_point(z)?])
    }
}

/// A tuple of polynomials, read as a polynomial map `C^n -> C^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialMap(pub Vec<CommPolynomial>);

impl PointMap for PolynomialMap {
    fn in_dim(&self) -> usize {
        self.0.first().map_or(0, |p| p.n)
    }

    fn out_dim(&self) -> usize {
        self.0.len()
    }

    fn map_point(&self, z: &[C64]) -> Result<Vec<C64>> {
        self.0.iter().map(|p| p.eval_point(z)).collect()
    }
}

/// `f(T_1, ..., T_n)`.
pub fn eval_poly(f: &CommPolynomial, t: &CommutingTuple) -> Result<CMatrix> {
    if f.n != t.n() {
        return Err(Error::DimensionMismatch { expected: t.n(), found: f.n });
    }
    let k = t.k();
    let mut powers: Vec<Vec<CMatrix>> = vec![vec![CMatrix::identity(k, k)]; t.n()];
    let mut out = CMatrix::zeros(k, k);
    for (e, &v) in &f.terms {
        let mut term = CMatrix::identity(k, k) * v;
        for (j, &p) in e.iter().enumerate() {
            while powers[j].len() <= p as usize {
                let next = powers[j].last().expect("non-empty") * t.matrix(j);
                powers[j].push(next);
            }
            if p > 0 {
                term = term * &powers[j][p as usize];
            }
        }
        out += term;
    }
    Ok(out)
}

/// Outcome of the two-sided nilpotency test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NilpotencyReport {
    /// `||B^k||` for `B = A / s`.
    pub power_ratio: f64,
    /// Spectral radius of `B`.
    pub radius_ratio: f64,
    pub nilpotent: bool,
}

/// Nilpotency of `A` measured relative to `s = max(||A||, reference_scale)`.
///
/// With `B = A / s`, the power test asks `||B^k|| <= rel_eps` and the
/// eigenvalue test asks `rho(B) <= rel_eps^(1/k)`. A matrix whose norm is at
/// most `abs_eps` counts as zero. Conflicting verdicts are an error.
pub fn nilpotency_report(a: &CMatrix, reference_scale: f64, tol: &Tolerance) -> Result<NilpotencyReport> {
    let k = check_square(a)?;
    check_finite(a, "matrix")?;
    let norm = op_norm(a);
    let s = norm.max(reference_scale.abs());
    if norm <= tol.abs_eps {
        return Ok(NilpotencyReport { power_ratio: 0.0, radius_ratio: 0.0, nilpotent: true });
    }
    let b = a / c(s, 0.0);
    let mut p = b.clone();
    for _ in 1..k {
        p = &p * &b;
    }
    let power_ratio = op_norm(&p);
    let radius_ratio = numcore::eigenvalues(&b)?.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let eta = tol.rel_eps;
    let power_ok = power_ratio <= eta;
    let radius_ok = radius_ratio <= eta.powf(1.0 / k as f64);
    if power_ok != radius_ok {
        return Err(Error::NilpotencyDisagreement { power_ratio, radius_ratio });
    }
    Ok(NilpotencyReport { power_ratio, radius_ratio, nilpotent: power_ok })
}

/// Nilpotency relative to the matrix's own norm.
pub fn is_nilpotent(a: &CMatrix, tol: &Tolerance) -> Result<bool> {
    Ok(nilpotency_report(a, 0.0, tol)?.nilpotent)
}

/// Generator family for [`random_commuting_tuple`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TupleStyle {
    /// Polynomials in one Gaussian matrix.
    PolyOfOne,
    /// Commuting upper triangulars with planted diagonals, conjugated by an
    /// invertible matrix of condition number at most 10.
    ConjugatedTriangular,
}

/// How a planted triangular tuple is moved out of triangular form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Conjugation {
    None,
    Unitary,
    Invertible { cond_cap: f64 },
}

/// Parameters of the planted generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedSpec {
    pub k: usize,
    pub n: usize,
    /// Largest block sharing one joint eigenvalue.
    pub max_cluster: usize,
    /// Draw coordinates from a coarse lattice so coordinates repeat across
    /// distinct joint eigenvalues.
    pub collisions: bool,
    /// Size of the nilpotent coupling inside a cluster.
    pub coupling: f64,
    /// Size of the off-diagonal part of the triangularizing similarity.
    pub shear: f64,
    pub conjugation: Conjugation,
}

impl PlantedSpec {
    pub fn new(k: usize, n: usize) -> Self {
        Self {
            k,
            n,
            max_cluster: 1,
            collisions: false,
            coupling: 0.5,
            shear: 0.5,
            conjugation: Conjugation::Unitary,
        }
    }
}

/// A planted tuple together with the joint eigenvalues it was built from.
#[derive(Debug, Clone)]
pub struct PlantedTuple {
    pub tuple: CommutingTuple,
    /// Joint eigenvalues with multiplicity (length `k`).
    pub eigenvalues: Vec<Vec<C64>>,
    /// Upper triangular forms before conjugation.
    pub triangulars: Vec<CMatrix>,
    /// Conjugating matrix `X` with `T_i = X B_i X^{-1}`.
    pub conjugator: CMatrix,
    /// Cluster sizes in diagonal order.
    pub clusters: Vec<usize>,
}

const LATTICE: [f64; 4] = [-1.5, -0.5, 0.5, 1.5];

fn sample_point(rng: &mut SeededRng, n: usize, collisions: bool) -> Vec<C64> {
    (0..n)
        .map(|_| {
            if collisions {
                c(LATTICE[random::int_in(rng, 0, 3)], LATTICE[random::int_in(rng, 0, 3)])
            } else {
                let r = 1.5 * random::uniform(rng, 0.0, 1.0).sqrt();
                let th = random::uniform(rng, 0.0, std::f64::consts::TAU);
                C64::from_polar(r, th)
            }
        })
        .collect()
}

fn separation(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Builds a tuple with known joint eigenvalues.
///
/// Each cluster of size `m` contributes blocks `lambda_j I + q_j(M)` with a
/// strictly upper triangular `M` and random `q_j` vanishing at zero. The
/// block-diagonal tuple is conjugated by a unit upper triangular matrix and
/// then by the requested conjugation.
pub fn planted_tuple(spec: &PlantedSpec, seed: u64) -> Result<PlantedTuple> {
    let PlantedSpec { k, n, .. } = *spec;
    if k == 0 || n == 0 {
        return Err(Error::InvalidArgument("k and n must be positive".into()));
    }
    let mut rng = random::rng(seed);
    let mut clusters = Vec::new();
    let mut left = k;
    while left > 0 {
        let m = random::int_in(&mut rng, 1, spec.max_cluster.max(1).min(left));
        clusters.push(m);
        left -= m;
    }
    let mut points: Vec<Vec<C64>> = Vec::new();
    let mut attempts = 0;
    while points.len() < clusters.len() {
        let p = sample_point(&mut rng, n, spec.collisions);
        attempts += 1;
        if points.iter().all(|q| separation(&p, q) >= 0.25) || attempts > 10_000 {
            points.push(p);
        }
    }
    let mut blocks = vec![CMatrix::zeros(k, k); n];
    let mut eigenvalues = Vec::with_capacity(k);
    let mut offset = 0;
    for (cl, &m) in clusters.iter().enumerate() {
        let mut nil = CMatrix::zeros(m, m);
        for j in 0..m {
            for i in 0..j {
                nil[(i, j)] = random::complex_normal(&mut rng) * spec.coupling;
            }
        }
        let local = certify_commuting_with(vec![nil], f64::INFINITY)?;
        for (j, block) in blocks.iter_mut().enumerate() {
            let q = CommPolynomial::random(&mut rng, 1, (m as u32).saturating_sub(1).max(1), true);
            let mut b = eval_poly(&q, &local)?;
            for d in 0..m {
                b[(d, d)] += points[cl][j];
            }
            block.view_mut((offset, offset), (m, m)).copy_from(&b);
        }
        for _ in 0..m {
            eigenvalues.push(points[cl].clone());
        }
        offset += m;
    }
    let mut shear = CMatrix::identity(k, k);
    let amp = spec.shear / (k as f64).sqrt();
    for j in 0..k {
        for i in 0..j {
            shear[(i, j)] = random::complex_normal(&mut rng) * amp;
        }
    }
    let tol = Tolerance::default();
    let shear_inv = numcore::inverse(&shear, &tol)?;
    let triangulars: Vec<CMatrix> = blocks.iter().map(|b| &shear * b * &shear_inv).collect();
    let conjugator = match spec.conjugation {
        Conjugation::None => CMatrix::identity(k, k),
        Conjugation::Unitary => random::unitary(&mut rng, k),
        Conjugation::Invertible { cond_cap } => random::invertible(&mut rng, k, cond_cap),
    };
    let conj_inv = match spec.conjugation {
        Conjugation::Unitary => conjugator.adjoint(),
        _ => numcore::inverse(&conjugator, &tol)?,
    };
    let mats: Vec<CMatrix> = triangulars.iter().map(|b| &conjugator * b * &conj_inv).collect();
    let tuple = certify_commuting(mats, &tol)?;
    Ok(PlantedTuple { tuple, eigenvalues, triangulars, conjugator, clusters })
}

/// Seeded random commuting tuple.
pub fn random_commuting_tuple(k: usize, n: usize, seed: u64, style: TupleStyle) -> Result<CommutingTuple> {
    if k == 0 || n == 0 {
        return Err(Error::InvalidArgument("k and n must be positive".into()));
    }
    match style {
        TupleStyle::PolyOfOne => {
            let mut rng = random::rng(seed);
            let a = random::gaussian(&mut rng, k, k) / c((k as f64).sqrt(), 0.0);
            let base = certify_commuting_with(vec![a], f64::INFINITY)?;
            let mats = (0..n)
                .map(|_| eval_poly(&CommPolynomial::random(&mut rng, 1, 3, false), &base))
                .collect::<Result<Vec<_>>>()?;
            certify_commuting(mats, &Tolerance::default())
        }
        TupleStyle::ConjugatedTriangular => {
            let mut spec = PlantedSpec::new(k, n);
            spec.conjugation = Conjugation::Invertible { cond_cap: 10.0 };
            Ok(planted_tuple(&spec, seed)?.tuple)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m2(a: [[f64; 2]; 2]) -> CMatrix {
        CMatrix::from_fn(2, 2, |i, j| c(a[i][j], 0.0))
    }

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn strictly_upper(rng: &mut SeededRng, k: usize) -> CMatrix {
        CMatrix::from_fn(k, k, |i, j| if j > i { random::complex_normal(rng) } else { c(0.0, 0.0) })
    }

    #[test]
    fn scalar_commutes() {
        let t = certify_commuting(vec![m2([[1.0, 1.0], [0.0, 2.0]]), m2([[3.0, 0.0], [0.0, 3.0]])], &tol()).unwrap();
        assert_eq!(t.comm_residual(), 0.0);
    }

    #[test]
    fn polynomial_image_commutes() {
        let a = m2([[1.0, 1.0], [0.0, 2.0]]);
        let b = m2([[1.0, 3.0], [0.0, 4.0]]);
        // The second matrix is the square of the first.
        assert_eq!(&a * &a, b);
        let t = certify_commuting(vec![a, b], &tol()).unwrap();
        assert_eq!(t.comm_residual(), 0.0);
    }

    #[test]
    fn shift_pair_rejected() {
        let e = certify_commuting(vec![m2([[0.0, 1.0], [0.0, 0.0]]), m2([[0.0, 0.0], [1.0, 0.0]])], &tol());
        assert!(matches!(e, Err(Error::NonCommuting { i: 0, j: 1, .. })));
    }

    #[test]
    fn size_mismatch_rejected() {
        let e = certify_commuting(vec![CMatrix::identity(2, 2), CMatrix::identity(3, 3)], &tol());
        assert!(matches!(e, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn eval_examples() {
        let t = certify_commuting(vec![m2([[1.0, 0.0], [0.0, 2.0]]), m2([[3.0, 0.0], [0.0, 4.0]])], &tol()).unwrap();
        let z1 = CommPolynomial::coordinate(2, 0).unwrap();
        assert_eq!(eval_poly(&z1, &t).unwrap(), *t.matrix(0));
        let z2 = CommPolynomial::coordinate(2, 1).unwrap();
        let prod = z1.mul(&z2).unwrap();
        assert_eq!(eval_poly(&prod, &t).unwrap(), m2([[3.0, 0.0], [0.0, 8.0]]));

        let a = m2([[1.0, 1.0], [0.0, 2.0]]);
        let b = m2([[1.0, 3.0], [0.0, 4.0]]);
        let t = certify_commuting(vec![a.clone(), b.clone()], &tol()).unwrap();
        let f = z1.mul(&z1).unwrap().add(&z2).unwrap();
        assert_eq!(eval_poly(&f, &t).unwrap(), &a * &a + &b);
    }

    #[test]
    fn arity_mismatch_rejected() {
        let t = certify_commuting(vec![CMatrix::identity(2, 2)], &tol()).unwrap();
        assert!(eval_poly(&CommPolynomial::coordinate(2, 1).unwrap(), &t).is_err());
    }

    #[test]
    fn nilpotency_examples() {
        let mut rng = random::rng(1);
        assert!(is_nilpotent(&strictly_upper(&mut rng, 3), &tol()).unwrap());
        assert!(!is_nilpotent(&CMatrix::identity(3, 3), &tol()).unwrap());
        assert!(is_nilpotent(&CMatrix::zeros(4, 4), &tol()).unwrap());
    }

    #[test]
    fn near_nilpotent_conflict_is_reported() {
        // A Jordan block plus a tiny diagonal: eigenvalues pass, powers do not.
        let k = 6;
        let mut a = CMatrix::zeros(k, k);
        for i in 0..k - 1 {
            a[(i, i + 1)] = c(1.0, 0.0);
        }
        for i in 0..k {
            a[(i, i)] = c(1e-3, 0.0);
        }
        assert!(matches!(is_nilpotent(&a, &tol()), Err(Error::NilpotencyDisagreement { .. })));
    }

    #[test]
    fn poly_of_one_residual() {
        let t = random_commuting_tuple(4, 2, 7, TupleStyle::PolyOfOne).unwrap();
        assert!(t.comm_residual() <= 1e-12);
        let t = random_commuting_tuple(1, 3, 99, TupleStyle::ConjugatedTriangular).unwrap();
        assert_eq!(t.n(), 3);
        assert_eq!(t.comm_residual(), 0.0);
    }

    #[test]
    fn planted_eigenvalues_match_independent_eigensolver() {
        let p = planted_tuple(&PlantedSpec { conjugation: Conjugation::Invertible { cond_cap: 10.0 }, ..PlantedSpec::new(5, 2) }, 1)
            .unwrap();
        for j in 0..2 {
            let mut got = numcore::eigenvalues(p.tuple.matrix(j)).unwrap();
            let mut want: Vec<C64> = p.eigenvalues.iter().map(|e| e[j]).collect();
            let key = |z: &C64| (z.re, z.im);
            got.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
            want.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let a = random_commuting_tuple(6, 3, 42, TupleStyle::ConjugatedTriangular).unwrap();
        let b = random_commuting_tuple(6, 3, 42, TupleStyle::ConjugatedTriangular).unwrap();
        assert_eq!(a.id(), b.id());
        assert_eq!(a.matrices(), b.matrices());
    }

    proptest! {
        #[test]
        fn commuting_nilpotents_stay_nilpotent(seed in any::<u64>(), k in 2usize..7) {
            let mut rng = random::rng(seed);
            let base = certify_commuting_with(vec![strictly_upper(&mut rng, k)], f64::INFINITY).unwrap();
            let p1 = CommPolynomial::random(&mut rng, 1, 3, true);
            let p2 = CommPolynomial::random(&mut rng, 1, 3, true);
            let p3 = CommPolynomial::random(&mut rng, 1, 2, false);
            let n1 = eval_poly(&p1, &base).unwrap();
            let n2 = eval_poly(&p2, &base).unwrap();
            let a = eval_poly(&p3, &base).unwrap();
            let pair = certify_commuting(vec![n1.clone(), n2.clone()], &tol()).unwrap();
            let f = CommPolynomial::random(&mut rng, 2, 3, true);
            let cases = [&a * &n1, &n1 + &n2, eval_poly(&f, &pair).unwrap()];
            for m in &cases {
                let radius = numcore::eigenvalues(m).unwrap().iter().map(|z| z.norm()).fold(0.0, f64::max);
                prop_assert!(radius <= 1e-7);
                prop_assert!(is_nilpotent(m, &tol()).unwrap());
            }
        }

        #[test]
        fn evaluation_is_multiplicative(seed in any::<u64>()) {
            let t = random_commuting_tuple(5, 2, seed, TupleStyle::PolyOfOne).unwrap();
            let mut rng = random::rng(seed ^ 0x5eed);
            let f = CommPolynomial::random(&mut rng, 2, 3, false);
            let g = CommPolynomial::random(&mut rng, 2, 3, false);
            let lhs = eval_poly(&f.mul(&g).unwrap(), &t).unwrap();
            let ef = eval_poly(&f, &t).unwrap();
            let eg = eval_poly(&g, &t).unwrap();
            let rhs = &ef * &eg;
            let scale = op_norm(&ef) * op_norm(&eg) + 1.0;
            prop_assert!(op_norm(&(lhs - rhs)) <= 1e-8 * scale);
        }
    }
}
