//! Simultaneous Schur triangularization and the joint eigenvalue measure.
//!
//! Deflation repeatedly extracts a common eigenvector. Among candidates the
//! joint eigenvalue that is smallest in lexicographic order on
//! `(Re λ_1, Im λ_1, ..., Re λ_n, Im λ_n)` wins, which makes the unitary
//! deterministic.

use std::cmp::Ordering;

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::numcore::{self, c, op_norm, strict_lower_norm, svd, CMatrix, CVector, Tolerance, C64};
use crate::tuples::{certify_commuting, CommutingTuple, PointMap};

/// Merge radius for a set of points: `1e-7 * (1 + max |z|)`.
pub fn merge_radius<'a, I: IntoIterator<Item = &'a Vec<C64>>>(points: I) -> f64 {
    1e-7 * (1.0 + points.into_iter().map(|p| point_norm(p)).fold(0.0, f64::max))
}

/// Euclidean norm on `C^n`.
pub fn point_norm(p: &[C64]) -> f64 {
    p.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Euclidean distance on `C^n`.
pub fn point_distance(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// Exact lexicographic order on `(Re z_1, Im z_1, ...)`.
pub fn lex_cmp(a: &[C64], b: &[C64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im));
        if o != Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

fn fuzzy_cmp(a: C64, b: C64, radius: f64) -> Ordering {
    if (a.re - b.re).abs() > radius {
        a.re.total_cmp(&b.re)
    } else if (a.im - b.im).abs() > radius {
        a.im.total_cmp(&b.im)
    } else {
        Ordering::Equal
    }
}

/// A unit vector shared by every operator, with its joint eigenvalue.
#[derive(Debug, Clone)]
pub struct JointEigenvector {
    pub vector: CVector,
    pub eigenvalue: Vec<C64>,
    /// Largest `||T_i v - λ_i v||`.
    pub residual: f64,
}

/// Unitary `U` with `U* T_i U` upper triangular for every `i`.
#[derive(Debug, Clone)]
pub struct SchurFlag {
    pub unitary: CMatrix,
    pub triangulars: Vec<CMatrix>,
    /// Largest strictly-lower norm relative to `||T_i||`.
    pub residual: f64,
}

impl SchurFlag {
    pub fn k(&self) -> usize {
        self.unitary.nrows()
    }

    pub fn n(&self) -> usize {
        self.triangulars.len()
    }

    /// Diagonal point at position `p`.
    pub fn diagonal_point(&self, p: usize) -> Vec<C64> {
        self.triangulars.iter().map(|t| t[(p, p)]).collect()
    }
}

fn kernel_basis(b: &CMatrix, lambda: C64, cut: f64) -> Result<CMatrix> {
    let d = b.nrows();
    let shifted = b - CMatrix::identity(d, d) * lambda;
    let dec = svd(&shifted)?;
    let count = dec.s.iter().filter(|&&s| s <= cut).count().max(1);
    Ok(dec.v.columns(d - count, count).into_owned())
}

fn cluster_eigenvalues(values: &[C64]) -> Vec<(C64, usize)> {
    let radius = 1e-7 * (1.0 + values.iter().map(|z| z.norm()).fold(0.0, f64::max));
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let mut clusters: Vec<(C64, C64, usize)> = Vec::new();
    for z in sorted {
        match clusters.iter_mut().find(|(seed, _, _)| (seed - z).norm() <= radius) {
            Some((_, sum, count)) => {
                *sum += z;
                *count += 1;
            }
            None => clusters.push((z, z, 1)),
        }
    }
    clusters.into_iter().map(|(_, sum, count)| (sum / count as f64, count)).collect()
}

fn common_eigvec_raw(mats: &[CMatrix], scales: &[f64], tol: &Tolerance) -> Result<JointEigenvector> {
    let k = mats[0].nrows();
    let mut basis = CMatrix::identity(k, k);
    for m in mats {
        let b = basis.adjoint() * m * &basis;
        let values = numcore::eigenvalues(&b)?;
        let clusters = cluster_eigenvalues(&values);
        let radius = 1e-7 * (1.0 + values.iter().map(|z| z.norm()).fold(0.0, f64::max));
        let (lambda, _) = clusters
            .iter()
            .copied()
            .min_by(|a, b| fuzzy_cmp(a.0, b.0, radius))
            .ok_or(Error::Empty("eigenvalues"))?;
        let cut = tol.threshold(op_norm(m));
        basis = &basis * kernel_basis(&b, lambda, cut)?;
    }
    let mut v: CVector = basis.column(0).into_owned();
    v /= c(v.norm(), 0.0);
    let (pivot, _) = v.iter().enumerate().fold((0, -1.0), |acc, (i, z)| if z.norm() > acc.1 { (i, z.norm()) } else { acc });
    let phase = v[pivot] / v[pivot].norm();
    v /= phase;
    let mut eigenvalue = Vec::with_capacity(mats.len());
    let mut residual = 0.0f64;
    for (m, &scale) in mats.iter().zip(scales) {
        let mv = m * &v;
        let lambda = v.dotc(&mv);
        let r = (mv - &v * lambda).norm();
        let allowed = tol.threshold(scale);
        if r > allowed {
            return Err(Error::ResidualTooLarge { residual: r, allowed });
        }
        residual = residual.max(r);
        eigenvalue.push(lambda);
    }
    Ok(JointEigenvector { vector: v, eigenvalue, residual })
}

/// A unit vector `v` with `||T_i v - λ_i v|| <= tol.threshold(||T_i||)`.
pub fn common_eigenvector(t: &CommutingTuple, tol: &Tolerance) -> Result<JointEigenvector> {
    common_eigvec_raw(t.matrices(), &t.norms(), tol)
}

/// Unitary whose first column is the unit vector `v`.
///
/// The remaining columns orthonormalize the standard basis vectors other than
/// the one where `v` is largest, so `v = e_1` yields the identity.
pub fn complete_unitary(v: &CVector) -> CMatrix {
    let k = v.len();
    let pivot = (0..k).max_by(|&i, &j| v[i].norm().total_cmp(&v[j].norm()).then(j.cmp(&i))).unwrap_or(0);
    let mut cols: Vec<CVector> = vec![v.clone()];
    for j in (0..k).filter(|&j| j != pivot) {
        let mut w = CVector::zeros(k);
        w[j] = c(1.0, 0.0);
        for _ in 0..2 {
            for q in &cols {
                let proj = q.dotc(&w);
                w -= q * proj;
            }
        }
        let nrm = w.norm();
        cols.push(w / c(nrm, 0.0));
    }
    CMatrix::from_fn(k, k, |i, j| cols[j][i])
}

/// Simultaneous Schur form by repeated deflation.
pub fn simultaneous_schur(t: &CommutingTuple, tol: &Tolerance) -> Result<SchurFlag> {
    let k = t.k();
    let scales = t.norms();
    let mut u = CMatrix::identity(k, k);
    let mut work: Vec<CMatrix> = t.matrices().to_vec();
    for p in 0..k.saturating_sub(1) {
        let d = k - p;
        let ev = common_eigvec_raw(&work, &scales, tol)?;
        let w = complete_unitary(&ev.vector);
        let tail = u.columns(p, d).into_owned() * &w;
        u.columns_mut(p, d).copy_from(&tail);
        work = work
            .iter()
            .map(|m| {
                let rotated = w.adjoint() * m * &w;
                rotated.view((1, 1), (d - 1, d - 1)).into_owned()
            })
            .collect();
    }
    let triangulars: Vec<CMatrix> = t.matrices().iter().map(|m| u.adjoint() * m * &u).collect();
    let residual = triangulars
        .iter()
        .zip(&scales)
        .map(|(r, &s)| if s > 0.0 { strict_lower_norm(r) / s } else { 0.0 })
        .fold(0.0, f64::max);
    let allowed = tol.rel_eps;
    if residual > allowed {
        return Err(Error::ResidualTooLarge { residual, allowed });
    }
    Ok(SchurFlag { unitary: u, triangulars, residual })
}

/// Diagonal points of the triangular forms, one per position.
pub fn joint_eigenvalues(flag: &SchurFlag) -> Vec<Vec<C64>> {
    (0..flag.k()).map(|p| flag.diagonal_point(p)).collect()
}

/// Atomic probability measure on `C^n` with rational weights `count / total`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSpectralMeasure {
    n: usize,
    atoms: Vec<Vec<C64>>,
    counts: Vec<usize>,
    total: usize,
}

impl JointSpectralMeasure {
    /// Uniform measure on the given points, merged within the merge radius.
    pub fn from_points(n: usize, points: &[Vec<C64>]) -> Result<Self> {
        let weighted: Vec<(Vec<C64>, usize)> = points.iter().map(|p| (p.clone(), 1)).collect();
        Self::from_counts(n, weighted, points.len())
    }

    /// Measure with weights `count / total`, merged within the merge radius.
    pub fn from_counts(n: usize, points: Vec<(Vec<C64>, usize)>, total: usize) -> Result<Self> {
        if points.is_empty() || total == 0 {
            return Err(Error::Empty("measure"));
        }
        let sum: usize = points.iter().map(|p| p.1).sum();
        if sum != total {
            return Err(Error::InvalidArgument(format!("counts sum to {sum}, expected {total}")));
        }
        for (p, _) in &points {
            if p.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: p.len() });
            }
            if p.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return Err(Error::NonFinite("atom"));
            }
        }
        let radius = merge_radius(points.iter().map(|p| &p.0));
        let mut sorted = points;
        sorted.sort_by(|a, b| lex_cmp(&a.0, &b.0));
        let mut clusters: Vec<(Vec<C64>, Vec<C64>, usize)> = Vec::new();
        for (p, w) in sorted {
            if w == 0 {
                continue;
            }
            match clusters.iter_mut().find(|(seed, _, _)| point_distance(seed, &p) <= radius) {
                Some((_, sum, count)) => {
                    for (s, z) in sum.iter_mut().zip(&p) {
                        *s += z * w as f64;
                    }
                    *count += w;
                }
                None => {
                    let sum = p.iter().map(|z| z * w as f64).collect();
                    clusters.push((p, sum, w));
                }
            }
        }
        let mut merged: Vec<(Vec<C64>, usize)> = clusters
            .into_iter()
            .map(|(_, sum, count)| (sum.into_iter().map(|s| s / count as f64).collect(), count))
            .collect();
        merged.sort_by(|a, b| lex_cmp(&a.0, &b.0));
        let (atoms, counts) = merged.into_iter().unzip();
        Ok(Self { n, atoms, counts, total })
    }

    /// Measure with rational weights summing to one.
    pub fn from_ratios(n: usize, points: Vec<(Vec<C64>, Ratio<usize>)>) -> Result<Self> {
        let denom = points.iter().fold(1usize, |acc, p| lcm(acc, *p.1.denom()));
        let weighted: Vec<(Vec<C64>, usize)> =
            points.into_iter().map(|(p, r)| (p, r.numer() * (denom / r.denom()))).collect();
        Self::from_counts(n, weighted, denom)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn atoms(&self) -> &[Vec<C64>] {
        &self.atoms
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn weights(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.total as f64).collect()
    }

    pub fn weight_ratio(&self, i: usize) -> Ratio<usize> {
        Ratio::new(self.counts[i], self.total)
    }

    /// Exact mass of the atoms satisfying `pred`.
    pub fn mass_where<F: Fn(&[C64]) -> bool>(&self, pred: F) -> Ratio<usize> {
        let hit: usize = self.atoms.iter().zip(&self.counts).filter(|(a, _)| pred(a)).map(|(_, &c)| c).sum();
        Ratio::new(hit, self.total)
    }

    /// Atoms repeated by count.
    pub fn expanded(&self) -> Vec<Vec<C64>> {
        self.atoms
            .iter()
            .zip(&self.counts)
            .flat_map(|(a, &c)| std::iter::repeat_n(a.clone(), c))
            .collect()
    }

    /// Atoms repeated so that every point carries weight `1 / denom`.
    pub fn expanded_to(&self, denom: usize) -> Option<Vec<Vec<C64>>> {
        if denom % self.total != 0 {
            return None;
        }
        let f = denom / self.total;
        Some(
            self.atoms
                .iter()
                .zip(&self.counts)
                .flat_map(|(a, &c)| std::iter::repeat_n(a.clone(), c * f))
                .collect(),
        )
    }

    /// Complex-conjugate measure `E -> ν(E*)`.
    pub fn conjugate(&self) -> Self {
        let points = self
            .atoms
            .iter()
            .zip(&self.counts)
            .map(|(a, &c)| (a.iter().map(|z| z.conj()).collect(), c))
            .collect();
        Self::from_counts(self.n, points, self.total).expect("conjugation keeps a valid measure")
    }

    /// Matching distance between the expanded multisets; infinite when the
    /// weights cannot be matched.
    /// Whether both measures have the same exact weights on atoms matched
    /// within the merge radius of their union. Atom order and the common
    /// denominator do not matter.
    pub fn same_weights(&self, other: &Self) -> bool {
        if self.n != other.n || self.atoms.len() != other.atoms.len() {
            return false;
        }
        let radius = merge_radius(self.atoms.iter().chain(&other.atoms));
        let mut used = vec![false; other.atoms.len()];
        for (i, a) in self.atoms.iter().enumerate() {
            let nearest = (0..other.atoms.len())
                .filter(|&j| !used[j])
                .map(|j| (point_distance(a, &other.atoms[j]), j))
                .min_by(|x, y| x.0.total_cmp(&y.0));
            match nearest {
                Some((d, j)) if d <= radius && self.weight_ratio(i) == other.weight_ratio(j) => used[j] = true,
                _ => return false,
            }
        }
        true
    }

    pub fn distance(&self, other: &Self) -> f64 {
        let denom = lcm(self.total, other.total);
        match (self.expanded_to(denom), other.expanded_to(denom)) {
            (Some(a), Some(b)) if self.n == other.n => multiset_distance(&a, &b),
            _ => f64::INFINITY,
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Largest pair distance of a greedy global matching between equal-size
/// multisets (closest pairs first); infinite for different sizes.
pub fn multiset_distance(a: &[Vec<C64>], b: &[Vec<C64>]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(a.len() * b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            pairs.push((point_distance(x, y), i, j));
        }
    }
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut worst = 0.0f64;
    for (d, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            worst = worst.max(d);
        }
    }
    worst
}

/// Joint eigenvalue measure read from a simultaneous Schur form.
pub fn measure_from_flag(flag: &SchurFlag) -> Result<JointSpectralMeasure> {
    JointSpectralMeasure::from_points(flag.n(), &joint_eigenvalues(flag))
}

/// Joint spectral measure of a commuting tuple.
pub fn joint_measure(t: &CommutingTuple, tol: &Tolerance) -> Result<JointSpectralMeasure> {
    measure_from_flag(&simultaneous_schur(t, tol)?)
}

/// Distribution of the `i`-th coordinate (zero-based).
pub fn marginal(nu: &JointSpectralMeasure, i: usize) -> Result<JointSpectralMeasure> {
    if i >= nu.n {
        return Err(Error::IndexOutOfRange { index: i, len: nu.n });
    }
    let points = nu.atoms.iter().zip(&nu.counts).map(|(a, &c)| (vec![a[i]], c)).collect();
    JointSpectralMeasure::from_counts(1, points, nu.total)
}

/// Push-forward `f_* ν`.
pub fn pushforward(nu: &JointSpectralMeasure, f: &dyn PointMap) -> Result<JointSpectralMeasure> {
    if f.in_dim() != nu.n {
        return Err(Error::DimensionMismatch { expected: nu.n, found: f.in_dim() });
    }
    let points = nu
        .atoms
        .iter()
        .zip(&nu.counts)
        .map(|(a, &c)| f.map_point(a).map(|p| (p, c)))
        .collect::<Result<Vec<_>>>()?;
    JointSpectralMeasure::from_counts(f.out_dim(), points, nu.total)
}

/// Commuting tuples placed block-diagonally.
#[derive(Debug, Clone)]
pub struct BlockTuple {
    pub blocks: Vec<CommutingTuple>,
}

impl BlockTuple {
    pub fn new(blocks: Vec<CommutingTuple>) -> Result<Self> {
        let first = blocks.first().ok_or(Error::Empty("block list"))?;
        for b in &blocks {
            if b.n() != first.n() {
                return Err(Error::DimensionMismatch { expected: first.n(), found: b.n() });
            }
        }
        Ok(Self { blocks })
    }

    /// Weights `k_ζ / Σ k_ζ`.
    pub fn weights(&self) -> Vec<Ratio<usize>> {
        let total: usize = self.blocks.iter().map(|b| b.k()).sum();
        self.blocks.iter().map(|b| Ratio::new(b.k(), total)).collect()
    }

    /// `Σ_ζ w_ζ ν_{T(ζ)}` computed block by block.
    pub fn mixture(&self, tol: &Tolerance) -> Result<JointSpectralMeasure> {
        let mut points = Vec::new();
        for (b, w) in self.blocks.iter().zip(self.weights()) {
            let nu = joint_measure(b, tol)?;
            for (i, a) in nu.atoms.iter().enumerate() {
                points.push((a.clone(), w * nu.weight_ratio(i)));
            }
        }
        JointSpectralMeasure::from_ratios(self.blocks[0].n(), points)
    }
}

/// Block-diagonal tuple `⊕_ζ T(ζ)`.
pub fn direct_sum(blocks: &BlockTuple, tol: &Tolerance) -> Result<CommutingTuple> {
    let k: usize = blocks.blocks.iter().map(|b| b.k()).sum();
    let n = blocks.blocks[0].n();
    let mut mats = vec![CMatrix::zeros(k, k); n];
    let mut offset = 0;
    for b in &blocks.blocks {
        for (j, m) in mats.iter_mut().enumerate() {
            m.view_mut((offset, offset), (b.k(), b.k())).copy_from(b.matrix(j));
        }
        offset += b.k();
    }
    certify_commuting(mats, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::random;
    use crate::tuples::{eval_poly, planted_tuple, random_commuting_tuple, CommPolynomial, Conjugation, PlantedSpec, TupleStyle};
    use proptest::prelude::*;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn diag(vals: &[f64]) -> CMatrix {
        CMatrix::from_diagonal(&CVector::from_iterator(vals.len(), vals.iter().map(|&x| c(x, 0.0))))
    }

    fn m2(a: [[f64; 2]; 2]) -> CMatrix {
        CMatrix::from_fn(2, 2, |i, j| c(a[i][j], 0.0))
    }

    fn diag_pair() -> CommutingTuple {
        certify_commuting(vec![diag(&[1.0, 2.0]), diag(&[3.0, 4.0])], &tol()).unwrap()
    }

    fn tri_pair() -> CommutingTuple {
        certify_commuting(vec![m2([[1.0, 1.0], [0.0, 2.0]]), m2([[1.0, 3.0], [0.0, 4.0]])], &tol()).unwrap()
    }

    fn pts(v: &[&[f64]]) -> Vec<Vec<C64>> {
        v.iter().map(|p| p.iter().map(|&x| c(x, 0.0)).collect()).collect()
    }

    fn sorted(mut v: Vec<C64>) -> Vec<C64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn same_weights_ignores_order_and_denominator() {
        let a = vec![c(1.0, 0.0)];
        let b = vec![c(1.0 + 1e-14, 0.0)];
        let z = vec![c(2.0, 0.0)];
        let x = JointSpectralMeasure::from_counts(1, vec![(a.clone(), 2), (z.clone(), 4)], 6).unwrap();
        let y = JointSpectralMeasure::from_ratios(1, vec![(z.clone(), Ratio::new(2, 3)), (b, Ratio::new(1, 3))]).unwrap();
        assert!(x.same_weights(&y) && y.same_weights(&x));
        let w = JointSpectralMeasure::from_counts(1, vec![(a, 1), (z, 2)], 3).unwrap();
        assert!(x.same_weights(&w));
        let v = JointSpectralMeasure::from_counts(1, vec![(vec![c(1.0, 0.0)], 1), (vec![c(2.0, 0.0)], 1)], 2).unwrap();
        assert!(!x.same_weights(&v));
    }

    #[test]
    fn common_eigenvector_of_diagonal_pair() {
        let ev = common_eigenvector(&diag_pair(), &tol()).unwrap();
        assert_eq!(ev.eigenvalue, vec![c(1.0, 0.0), c(3.0, 0.0)]);
        assert!((ev.vector[0] - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn common_eigenvector_of_triangular_pair() {
        let ev = common_eigenvector(&tri_pair(), &tol()).unwrap();
        assert!((ev.eigenvalue[0] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((ev.eigenvalue[1] - c(1.0, 0.0)).norm() < 1e-14);
        assert!(ev.vector[1].norm() < 1e-14);
    }

    #[test]
    fn common_eigenvector_of_planted_tuples() {
        for seed in 0..10 {
            let spec = PlantedSpec { max_cluster: 2, ..PlantedSpec::new(6, 2) };
            let p = planted_tuple(&spec, seed).unwrap();
            let ev = common_eigenvector(&p.tuple, &tol()).unwrap();
            for (m, l) in p.tuple.matrices().iter().zip(&ev.eigenvalue) {
                let r = (m * &ev.vector - &ev.vector * *l).norm();
                assert!(r <= 1e-8 * op_norm(m), "seed {seed}: residual {r}");
            }
        }
    }

    #[test]
    fn triangular_input_keeps_identity() {
        let flag = simultaneous_schur(&tri_pair(), &tol()).unwrap();
        assert!((&flag.unitary - CMatrix::identity(2, 2)).norm() < 1e-14);
        assert!(flag.residual < 1e-15);
        let je = joint_eigenvalues(&flag);
        for (got, want) in je.iter().zip(pts(&[&[1.0, 1.0], &[2.0, 4.0]])) {
            assert!(point_distance(got, &want) < 1e-14);
        }
    }

    #[test]
    fn diagonal_pair_eigenvalues() {
        let flag = simultaneous_schur(&diag_pair(), &tol()).unwrap();
        assert_eq!(joint_eigenvalues(&flag), pts(&[&[1.0, 3.0], &[2.0, 4.0]]));
    }

    #[test]
    fn single_operator_matches_eigensolver() {
        let t = random_commuting_tuple(7, 1, 3, TupleStyle::PolyOfOne).unwrap();
        let flag = simultaneous_schur(&t, &tol()).unwrap();
        let got = sorted(joint_eigenvalues(&flag).into_iter().map(|p| p[0]).collect());
        let want = sorted(numcore::eigenvalues(t.matrix(0)).unwrap());
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).norm() < 1e-9);
        }
    }

    #[test]
    fn planted_three_by_three() {
        let spec = PlantedSpec { conjugation: Conjugation::Unitary, ..PlantedSpec::new(3, 3) };
        let p = planted_tuple(&spec, 5).unwrap();
        let flag = simultaneous_schur(&p.tuple, &tol()).unwrap();
        assert!(multiset_distance(&joint_eigenvalues(&flag), &p.eigenvalues) < 1e-8);
    }

    #[test]
    fn schur_reconstructs_input() {
        for seed in 0..8 {
            let spec = PlantedSpec { max_cluster: 2, ..PlantedSpec::new(8, 3) };
            let p = planted_tuple(&spec, seed).unwrap();
            let flag = simultaneous_schur(&p.tuple, &tol()).unwrap();
            let u = &flag.unitary;
            assert!((u.adjoint() * u - CMatrix::identity(8, 8)).norm() < 1e-10);
            for (r, t) in flag.triangulars.iter().zip(p.tuple.matrices()) {
                assert!(op_norm(&(u * r * u.adjoint() - t)) <= 1e-8 * op_norm(t));
            }
        }
    }

    #[test]
    fn measure_examples() {
        let nu = joint_measure(&diag_pair(), &tol()).unwrap();
        assert_eq!(nu.atoms(), pts(&[&[1.0, 3.0], &[2.0, 4.0]]).as_slice());
        assert_eq!(nu.weights(), vec![0.5, 0.5]);
        let doubled = direct_sum(&BlockTuple::new(vec![diag_pair(), diag_pair()]).unwrap(), &tol()).unwrap();
        let nu2 = joint_measure(&doubled, &tol()).unwrap();
        assert_eq!(nu2.atoms(), nu.atoms());
        assert_eq!(nu2.weights(), vec![0.5, 0.5]);
    }

    #[test]
    fn marginal_examples() {
        let nu = JointSpectralMeasure::from_points(2, &pts(&[&[1.0, 3.0], &[2.0, 4.0]])).unwrap();
        let m = marginal(&nu, 1).unwrap();
        assert_eq!(m.atoms(), pts(&[&[3.0], &[4.0]]).as_slice());
        assert_eq!(m.weights(), vec![0.5, 0.5]);
        let nu = JointSpectralMeasure::from_points(2, &pts(&[&[0.0, 0.0], &[0.0, 1.0]])).unwrap();
        let m = marginal(&nu, 0).unwrap();
        assert_eq!(m.atoms(), pts(&[&[0.0]]).as_slice());
        assert_eq!(m.weights(), vec![1.0]);
        assert!(matches!(marginal(&nu, 2), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn marginals_match_eigensolver() {
        for seed in 0..6 {
            let t = random_commuting_tuple(6, 3, seed, TupleStyle::ConjugatedTriangular).unwrap();
            let nu = joint_measure(&t, &tol()).unwrap();
            for i in 0..3 {
                let m = marginal(&nu, i).unwrap();
                let eig: Vec<Vec<C64>> = numcore::eigenvalues(t.matrix(i)).unwrap().into_iter().map(|z| vec![z]).collect();
                let oracle = JointSpectralMeasure::from_points(1, &eig).unwrap();
                assert!(m.distance(&oracle) < 1e-7, "seed {seed} coord {i}");
            }
        }
    }

    #[test]
    fn pushforward_examples() {
        let nu = JointSpectralMeasure::from_points(2, &pts(&[&[1.0, 3.0], &[2.0, 4.0]])).unwrap();
        let z1 = CommPolynomial::coordinate(2, 0).unwrap();
        let z2 = CommPolynomial::coordinate(2, 1).unwrap();
        let prod = z1.mul(&z2).unwrap();
        let pf = pushforward(&nu, &prod).unwrap();
        assert_eq!(pf.atoms(), pts(&[&[3.0], &[8.0]]).as_slice());
        assert_eq!(pf.weights(), vec![0.5, 0.5]);
        let id = crate::tuples::PolynomialMap(vec![z1, z2]);
        assert_eq!(pushforward(&nu, &id).unwrap(), nu);
    }

    #[test]
    fn block_examples() {
        let one = |x: f64| certify_commuting(vec![diag(&[x])], &tol()).unwrap();
        let bt = BlockTuple::new(vec![one(1.0), one(2.0)]).unwrap();
        let nu = joint_measure(&direct_sum(&bt, &tol()).unwrap(), &tol()).unwrap();
        assert_eq!(nu.weights(), vec![0.5, 0.5]);
        let three = certify_commuting(vec![diag(&[5.0, 6.0, 7.0])], &tol()).unwrap();
        let bt = BlockTuple::new(vec![one(1.0), three]).unwrap();
        assert_eq!(bt.weights(), vec![Ratio::new(1, 4), Ratio::new(3, 4)]);
        let mix = bt.mixture(&tol()).unwrap();
        assert_eq!(mix.counts(), &[1, 1, 1, 1]);
        assert_eq!(mix.total(), 4);
    }

    #[test]
    fn block_law_is_atomwise() {
        for seed in 0..5 {
            let a = random_commuting_tuple(3, 2, seed, TupleStyle::ConjugatedTriangular).unwrap();
            let b = random_commuting_tuple(5, 2, seed + 100, TupleStyle::ConjugatedTriangular).unwrap();
            let bt = BlockTuple::new(vec![a, b]).unwrap();
            let whole = joint_measure(&direct_sum(&bt, &tol()).unwrap(), &tol()).unwrap();
            let mix = bt.mixture(&tol()).unwrap();
            assert_eq!(whole.counts(), mix.counts());
            assert!(whole.distance(&mix) < 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn eigenvalues_invariant_under_unitary_conjugation(seed in any::<u64>()) {
            let t = random_commuting_tuple(6, 2, seed, TupleStyle::ConjugatedTriangular).unwrap();
            let mut rng = random::rng(seed);
            let q = random::unitary(&mut rng, 6);
            let moved = certify_commuting(t.matrices().iter().map(|m| q.adjoint() * m * &q).collect(), &tol()).unwrap();
            let a = joint_eigenvalues(&simultaneous_schur(&t, &tol()).unwrap());
            let b = joint_eigenvalues(&simultaneous_schur(&moved, &tol()).unwrap());
            prop_assert!(multiset_distance(&a, &b) <= 1e-8);
        }

        #[test]
        fn measure_invariant_under_similarity(seed in any::<u64>()) {
            let t = random_commuting_tuple(5, 2, seed, TupleStyle::ConjugatedTriangular).unwrap();
            let mut rng = random::rng(seed ^ 7);
            let s = random::invertible(&mut rng, 5, 1e3);
            let moved = t.similar(&s, &tol(), 1e-9).unwrap();
            let a = joint_measure(&t, &tol()).unwrap();
            let b = joint_measure(&moved, &tol()).unwrap();
            prop_assert!(a.distance(&b) <= 1e-7);
        }

        #[test]
        fn adjoint_measure_is_conjugate(seed in any::<u64>()) {
            let t = random_commuting_tuple(5, 2, seed, TupleStyle::PolyOfOne).unwrap();
            let a = joint_measure(&t.adjoint(), &tol()).unwrap();
            let b = joint_measure(&t, &tol()).unwrap().conjugate();
            prop_assert!(a.distance(&b) <= 1e-8);
        }

        #[test]
        fn measure_of_polynomial_image_is_pushforward(seed in any::<u64>()) {
            let t = random_commuting_tuple(5, 2, seed, TupleStyle::ConjugatedTriangular).unwrap();
            let mut rng = random::rng(seed ^ 11);
            let f = CommPolynomial::random(&mut rng, 2, 3, false);
            let ft = certify_commuting(vec![eval_poly(&f, &t).unwrap()], &tol()).unwrap();
            let lhs = joint_measure(&ft, &tol()).unwrap();
            let rhs = pushforward(&joint_measure(&t, &tol()).unwrap(), &f).unwrap();
            prop_assert!(lhs.distance(&rhs) <= 1e-7);
        }
    }
}
