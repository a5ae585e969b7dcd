//! Orderings of joint eigenvalues along a space-filling curve.
//!
//! The curve fills the polydisk of operator norms. It is built on the cube
//! `[0,1]^{2n}` by feeding the second output of a 2-d Hilbert curve back into
//! itself, then mapped onto each disk factor with the concentric square to
//! disk map. At depth `d` the parameter interval is cut into cells whose
//! images are products of dyadic squares of side at most `2^-d`, and an atom
//! receives the left end of the first closed cell that contains it.
//!
//! Cell indices are handled as base-4 digit strings, so searches are exact
//! at any depth. Point evaluation uses `f64`.

use std::cmp::Ordering;
use std::f64::consts::{FRAC_PI_4, PI};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hsproj::{atom_region, reorder_flag, HSProjection};
use crate::numcore::{c, check_square, op_norm, strict_lower_norm, CMatrix, Subspace, Tolerance, C64};
use crate::triangular::{joint_eigenvalues, lex_cmp, point_distance, simultaneous_schur, JointSpectralMeasure};
use crate::tuples::{nilpotency_report, CommutingTuple, NilpotencyReport, PointMap, TupleId};

/// Base-4 digits after the point, most significant first.
pub type Digits = Vec<u8>;

/// Value in `[0,1]` of a base-4 digit string.
pub fn digits_value(d: &[u8]) -> f64 {
    let mut v = 0.0;
    for &q in d.iter().rev() {
        v = (v + q as f64) / 4.0;
    }
    v
}

/// First `count` base-4 digits of `t` in `[0,1)`. Exact, since scaling by 4
/// and removing the integer part lose nothing in binary floating point.
pub fn value_digits(t: f64, count: usize) -> Digits {
    let mut x = t.clamp(0.0, 1.0);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        x *= 4.0;
        let q = (x.floor() as u8).min(3);
        out.push(q);
        x -= q as f64;
    }
    out
}

fn digits_to_bits(d: &[u8]) -> Vec<bool> {
    d.iter().flat_map(|&q| [q & 2 != 0, q & 1 != 0]).collect()
}

fn bits_value(b: &[bool]) -> f64 {
    let mut v = 0.0;
    for &bit in b.iter().rev() {
        v = (v + if bit { 1.0 } else { 0.0 }) / 2.0;
    }
    v
}

/// Hilbert index of the square with corner bits `x`, `y` at level `x.len()`.
///
/// Quadrants are visited in the order (0,0), (0,1), (1,1), (1,0), so the
/// curve starts at the origin and ends at `(1, 0)`.
pub fn hilbert_index(x: &[bool], y: &[bool]) -> Digits {
    let level = x.len();
    let mut x = x.to_vec();
    let mut y = y.to_vec();
    let mut out = Vec::with_capacity(level);
    for i in 0..level {
        let (rx, ry) = (x[i] as u8, y[i] as u8);
        out.push((3 * rx) ^ ry);
        if ry == 0 {
            if rx == 1 {
                for b in x[i + 1..].iter_mut().chain(y[i + 1..].iter_mut()) {
                    *b = !*b;
                }
            }
            for j in i + 1..level {
                std::mem::swap(&mut x[j], &mut y[j]);
            }
        }
    }
    out
}

/// Corner bits `(x, y)` of the square with Hilbert index `d`.
pub fn hilbert_square(d: &[u8]) -> (Vec<bool>, Vec<bool>) {
    let level = d.len();
    // Integer coordinates held as little-endian bit vectors while building
    // from the least significant digit up.
    let mut x = vec![false; level];
    let mut y = vec![false; level];
    for (s, &q) in d.iter().rev().enumerate() {
        let rx = (q >> 1) & 1;
        let ry = (q ^ rx) & 1;
        if ry == 0 {
            if rx == 1 {
                for b in x[..s].iter_mut().chain(y[..s].iter_mut()) {
                    *b = !*b;
                }
            }
            for j in 0..s {
                let tmp = x[j];
                x[j] = y[j];
                y[j] = tmp;
            }
        }
        x[s] = rx == 1;
        y[s] = ry == 1;
    }
    x.reverse();
    y.reverse();
    (x, y)
}

/// Point of the 2-d Hilbert curve at parameter `t`.
pub fn hilbert_point(t: f64) -> (f64, f64) {
    if t >= 1.0 {
        return (1.0, 0.0);
    }
    hilbert_point_digits(&value_digits(t, 40))
}

/// Point of the 2-d Hilbert curve at the left end of a digit cell.
pub fn hilbert_point_digits(d: &[u8]) -> (f64, f64) {
    let (mut x, mut y) = (0.0f64, 0.0f64);
    for &q in d.iter().rev() {
        let (u, v) = match q {
            0 => (y, x),
            1 => (x, 1.0 + y),
            2 => (1.0 + x, 1.0 + y),
            _ => (2.0 - y, 1.0 - x),
        };
        x = u / 2.0;
        y = v / 2.0;
    }
    (x, y)
}

/// Indices of the closed dyadic intervals of length `2^-level` containing `x`.
fn closed_intervals(x: f64, level: usize) -> Vec<Vec<bool>> {
    if x >= 1.0 {
        return vec![vec![true; level]];
    }
    let mut r = x.max(0.0);
    let mut bits = Vec::with_capacity(level);
    for _ in 0..level {
        r *= 2.0;
        let b = r >= 1.0;
        if b {
            r -= 1.0;
        }
        bits.push(b);
    }
    let mut out = vec![bits.clone()];
    if r == 0.0 {
        // On a grid line: the interval to the left also contains x.
        if let Some(p) = bits.iter().rposition(|&b| b) {
            let mut prev = bits;
            prev[p] = false;
            for b in prev[p + 1..].iter_mut() {
                *b = true;
            }
            out.push(prev);
        }
    }
    out
}

/// Concentric map from the square `[-1,1]^2` onto the closed unit disk.
pub fn square_to_disk(a: f64, b: f64) -> C64 {
    if a == 0.0 && b == 0.0 {
        return c(0.0, 0.0);
    }
    let (r, phi) = if a.abs() > b.abs() {
        (a, FRAC_PI_4 * (b / a))
    } else {
        (b, PI / 2.0 - FRAC_PI_4 * (a / b))
    };
    c(r * phi.cos(), r * phi.sin())
}

/// Inverse of [`square_to_disk`].
pub fn disk_to_square(w: C64) -> (f64, f64) {
    let r = w.norm();
    if r == 0.0 {
        return (0.0, 0.0);
    }
    let mut phi = w.im.atan2(w.re);
    if phi < -FRAC_PI_4 {
        phi += 2.0 * PI;
    }
    if phi < FRAC_PI_4 {
        (r, r * phi / FRAC_PI_4)
    } else if phi < 3.0 * FRAC_PI_4 {
        (-r * (phi - PI / 2.0) / FRAC_PI_4, r)
    } else if phi < 5.0 * FRAC_PI_4 {
        (-r, -r * (phi - PI) / FRAC_PI_4)
    } else {
        (r * (phi - 1.5 * PI) / FRAC_PI_4, -r)
    }
}

/// Space-filling curve onto a polydisk, truncated at a fixed depth.
#[derive(Debug, Clone, PartialEq)]
pub struct PeanoCurve {
    n: usize,
    radii: Vec<f64>,
    depth: usize,
}

impl PeanoCurve {
    /// A zero radius makes that coordinate a single point.
    pub fn new(n: usize, radii: Vec<f64>, depth: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("curve dimension"));
        }
        if radii.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: radii.len() });
        }
        if radii.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidArgument("radii must be finite and nonnegative".into()));
        }
        if depth == 0 {
            return Err(Error::InvalidArgument("curve depth must be at least 1".into()));
        }
        Ok(PeanoCurve { n, radii, depth })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn cube_dim(&self) -> usize {
        2 * self.n
    }

    /// Hilbert level of each nested application, outermost first.
    pub fn levels(&self) -> Vec<usize> {
        let apps = self.cube_dim() - 1;
        (0..apps).map(|i| self.depth << (apps - 1 - i)).collect()
    }

    /// Number of base-4 digits in a cell index.
    pub fn index_len(&self) -> usize {
        self.levels()[0]
    }

    /// Side of a cell box along each cube coordinate.
    pub fn cell_sides(&self) -> Vec<f64> {
        let levels = self.levels();
        let mut out = Vec::with_capacity(self.cube_dim());
        for &l in &levels {
            out.push(0.5f64.powi(l as i32));
        }
        out.push(0.5f64.powi(self.depth as i32));
        out
    }

    /// Cube point at parameter `t`.
    pub fn eval_cube(&self, t: f64) -> Vec<f64> {
        let mut s = t.clamp(0.0, 1.0);
        let mut out = Vec::with_capacity(self.cube_dim());
        for _ in 0..self.cube_dim() - 1 {
            let (a, b) = hilbert_point(s);
            out.push(a);
            s = b;
        }
        out.push(s);
        out
    }

    /// Cube point at the left end of the cell with index `d`.
    pub fn eval_cube_digits(&self, d: &[u8]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.cube_dim());
        let (a, b) = hilbert_point_digits(d);
        out.push(a);
        let mut s = b;
        for _ in 1..self.cube_dim() - 1 {
            let (a, b) = hilbert_point(s);
            out.push(a);
            s = b;
        }
        out.push(s);
        out
    }

    /// Closed box, per cube coordinate, swept by the cell with index `d`.
    pub fn cell_box(&self, d: &[u8]) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.cube_dim());
        let mut digits = d.to_vec();
        let apps = self.cube_dim() - 1;
        for app in 0..apps {
            let (x, y) = hilbert_square(&digits);
            let side = 0.5f64.powi(x.len() as i32);
            let x0 = bits_value(&x);
            out.push((x0, x0 + side));
            if app + 1 == apps {
                let y0 = bits_value(&y);
                out.push((y0, y0 + side));
            } else {
                digits = y.chunks(2).map(|p| (p[0] as u8) << 1 | p[1] as u8).collect();
            }
        }
        out
    }

    fn point_to_cube(&self, z: &[C64], tol: &Tolerance) -> std::result::Result<Vec<f64>, ()> {
        let mut out = Vec::with_capacity(self.cube_dim());
        for (&zj, &r) in z.iter().zip(&self.radii) {
            if r == 0.0 {
                if zj.norm() > tol.abs_eps {
                    return Err(());
                }
                out.extend([0.5, 0.5]);
                continue;
            }
            let mut w = zj / r;
            let m = w.norm();
            if m > 1.0 {
                if m - 1.0 > tol.threshold(1.0) {
                    return Err(());
                }
                w /= m;
            }
            let (a, b) = disk_to_square(w);
            out.push(((a + 1.0) / 2.0).clamp(0.0, 1.0));
            out.push(((b + 1.0) / 2.0).clamp(0.0, 1.0));
        }
        Ok(out)
    }

    /// Cube coordinates of a polydisk point, clamping points just outside.
    pub fn to_cube(&self, z: &[C64], tol: &Tolerance) -> Result<Vec<f64>> {
        if z.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: z.len() });
        }
        self.point_to_cube(z, tol).map_err(|_| Error::AtomOutsidePolydisk { atom: 0 })
    }

    /// Polydisk point of a cube point.
    pub fn from_cube(&self, x: &[f64]) -> Vec<C64> {
        self.radii
            .iter()
            .enumerate()
            .map(|(j, &r)| {
                if r == 0.0 {
                    c(0.0, 0.0)
                } else {
                    square_to_disk(2.0 * x[2 * j] - 1.0, 2.0 * x[2 * j + 1] - 1.0) * r
                }
            })
            .collect()
    }

    /// Polydisk point at parameter `t`.
    pub fn eval(&self, t: f64) -> Vec<C64> {
        self.from_cube(&self.eval_cube(t))
    }

    fn cells_from(&self, x: &[f64], level: usize) -> Vec<Digits> {
        let xs = closed_intervals(x[0], level);
        let ys: Vec<Vec<bool>> = if x.len() == 2 {
            closed_intervals(x[1], level)
        } else {
            self.cells_from(&x[1..], level / 2).iter().map(|d| digits_to_bits(d)).collect()
        };
        let mut out = Vec::with_capacity(xs.len() * ys.len());
        for kx in &xs {
            for ky in &ys {
                out.push(hilbert_index(kx, ky));
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// Every cell whose closed box contains the cube point `x`, ascending.
    pub fn cells_containing(&self, x: &[f64]) -> Result<Vec<Digits>> {
        if x.len() != self.cube_dim() {
            return Err(Error::DimensionMismatch { expected: self.cube_dim(), found: x.len() });
        }
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("cube point outside [0,1]".into()));
        }
        Ok(self.cells_from(x, self.index_len()))
    }

    /// Index of the first cell whose closed box contains the cube point `x`.
    pub fn first_cell(&self, x: &[f64]) -> Result<Digits> {
        Ok(self.cells_containing(x)?.swap_remove(0))
    }
}

/// Atoms of a joint measure with their curve parameters.
#[derive(Debug, Clone)]
pub struct SpectralOrdering {
    pub atoms: Vec<Vec<C64>>,
    pub counts: Vec<usize>,
    /// Cell index of each atom.
    pub keys: Vec<Digits>,
    /// Parameter of each atom, the value of its key.
    pub params: Vec<f64>,
    /// Atom indices by increasing parameter, ties broken lexicographically.
    pub order: Vec<usize>,
    pub depth: usize,
}

/// Assigns each atom the left end of the first curve cell containing it.
pub fn assign_params(curve: &PeanoCurve, nu: &JointSpectralMeasure, tol: &Tolerance) -> Result<SpectralOrdering> {
    if nu.n() != curve.n() {
        return Err(Error::DimensionMismatch { expected: curve.n(), found: nu.n() });
    }
    let keys = nu
        .atoms()
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let x = curve.point_to_cube(a, tol).map_err(|_| Error::AtomOutsidePolydisk { atom: i })?;
            curve.first_cell(&x)
        })
        .collect::<Result<Vec<_>>>()?;
    let params: Vec<f64> = keys.iter().map(|k| digits_value(k)).collect();
    let atoms = nu.atoms().to_vec();
    let mut order: Vec<usize> = (0..atoms.len()).collect();
    order.sort_by(|&i, &j| keys[i].cmp(&keys[j]).then_with(|| lex_cmp(&atoms[i], &atoms[j])));
    Ok(SpectralOrdering { atoms, counts: nu.counts().to_vec(), keys, params, order, depth: curve.depth() })
}

/// Curve whose polydisk radii are the operator norms of the tuple.
pub fn curve_for(t: &CommutingTuple, depth: usize) -> Result<PeanoCurve> {
    PeanoCurve::new(t.n(), t.norms(), depth)
}

/// Chain of invariant subspaces following a spectral ordering.
#[derive(Debug, Clone)]
pub struct Flag {
    /// Parameter of each step.
    pub breakpoints: Vec<f64>,
    /// Atom added at each step.
    pub atoms: Vec<Vec<C64>>,
    pub multiplicities: Vec<usize>,
    /// Invariant subspace after each step; the last is the whole space.
    pub projections: Vec<HSProjection>,
    /// Orthonormal basis refining the chain.
    pub unitary: CMatrix,
    pub triangulars: Vec<CMatrix>,
    pub tuple_id: TupleId,
}

impl Flag {
    pub fn k(&self) -> usize {
        self.unitary.nrows()
    }

    /// Dimensions of the subspaces in the chain.
    pub fn dims(&self) -> Vec<usize> {
        self.projections.iter().map(|p| p.subspace.dim()).collect()
    }

    /// Joint eigenvalue at each basis position.
    pub fn diagonal(&self) -> Vec<Vec<C64>> {
        (0..self.k()).map(|p| self.triangulars.iter().map(|m| m[(p, p)]).collect()).collect()
    }
}

/// Builds the flag of invariant subspaces in curve order.
pub fn build_flag(t: &CommutingTuple, ordering: &SpectralOrdering, tol: &Tolerance) -> Result<Flag> {
    let mut schur = simultaneous_schur(t, tol)?;
    let mut rank = vec![0usize; ordering.atoms.len()];
    for (pos, &a) in ordering.order.iter().enumerate() {
        rank[a] = pos;
    }
    let mut seen = vec![0usize; ordering.atoms.len()];
    let mut keys = Vec::with_capacity(t.k());
    for p in joint_eigenvalues(&schur) {
        let (best, _) = ordering
            .atoms
            .iter()
            .enumerate()
            .map(|(i, a)| (i, point_distance(a, &p)))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .ok_or(Error::Empty("ordering"))?;
        seen[best] += 1;
        keys.push(rank[best]);
    }
    if seen != ordering.counts {
        return Err(Error::Numerical("triangular form does not match the ordered atoms".into()));
    }
    reorder_flag(&mut schur, &mut keys);

    let mut projections = Vec::with_capacity(ordering.order.len());
    let mut dim = 0;
    for (step, &a) in ordering.order.iter().enumerate() {
        dim += ordering.counts[a];
        let frame = schur.unitary.columns(0, dim).into_owned();
        projections.push(HSProjection {
            subspace: Subspace::from_orthonormal(frame, tol)?,
            region: atom_region(&ordering.atoms, &ordering.order[..=step]),
            tuple_id: t.id(),
            trace: num_rational::Ratio::new(dim, t.k()),
        });
    }
    Ok(Flag {
        breakpoints: ordering.order.iter().map(|&a| ordering.params[a]).collect(),
        atoms: ordering.order.iter().map(|&a| ordering.atoms[a].clone()).collect(),
        multiplicities: ordering.order.iter().map(|&a| ordering.counts[a]).collect(),
        projections,
        unitary: schur.unitary,
        triangulars: schur.triangulars,
        tuple_id: t.id(),
    })
}

/// Unitary of the flag basis and `V* T_i V` for every `i`, rechecked.
pub fn triangularize_by_flag(t: &CommutingTuple, flag: &Flag, tol: &Tolerance) -> Result<(CMatrix, Vec<CMatrix>)> {
    if flag.tuple_id != t.id() {
        return Err(Error::InvalidArgument("flag was built for a different tuple".into()));
    }
    let v = &flag.unitary;
    let mut tris = Vec::with_capacity(t.n());
    for m in t.matrices() {
        let r = v.adjoint() * m * v;
        let residual = strict_lower_norm(&r);
        if residual > tol.threshold(op_norm(m)) {
            return Err(Error::NotTriangular { residual });
        }
        tris.push(r);
    }
    Ok((v.clone(), tris))
}

/// Diagonal part of `S` in the flag basis, returned in the original basis.
pub fn diag_expectation(s: &CMatrix, flag: &Flag, tol: &Tolerance) -> Result<CMatrix> {
    let k = check_square(s)?;
    if k != flag.k() {
        return Err(Error::DimensionMismatch { expected: flag.k(), found: k });
    }
    let v = &flag.unitary;
    let m = v.adjoint() * s * v;
    let residual = strict_lower_norm(&m);
    if residual > tol.threshold(op_norm(s)) {
        return Err(Error::NotTriangular { residual });
    }
    let d = CMatrix::from_fn(k, k, |i, j| if i == j { m[(i, i)] } else { c(0.0, 0.0) });
    Ok(v * d * v.adjoint())
}

/// Distance between two multisets of complex numbers at resolution `radius`.
///
/// Values from both sides are clustered together by single linkage. Each
/// cluster must hold as many values from `a` as from `b`; the result is the
/// largest gap between the two cluster means, or infinity on a count
/// mismatch. Averaging makes defective eigenvalues usable.
pub fn clustered_distance(a: &[C64], b: &[C64], radius: f64) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let all: Vec<(C64, bool)> = a.iter().map(|&z| (z, true)).chain(b.iter().map(|&z| (z, false))).collect();
    let mut label: Vec<usize> = (0..all.len()).collect();
    fn find(label: &mut [usize], mut i: usize) -> usize {
        while label[i] != i {
            label[i] = label[label[i]];
            i = label[i];
        }
        i
    }
    for i in 0..all.len() {
        for j in (i + 1)..all.len() {
            if (all[i].0 - all[j].0).norm() <= radius {
                let (ri, rj) = (find(&mut label, i), find(&mut label, j));
                label[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, (C64, usize, C64, usize)> = Default::default();
    for i in 0..all.len() {
        let r = find(&mut label, i);
        let e = groups.entry(r).or_insert((c(0.0, 0.0), 0, c(0.0, 0.0), 0));
        if all[i].1 {
            e.0 += all[i].0;
            e.1 += 1;
        } else {
            e.2 += all[i].0;
            e.3 += 1;
        }
    }
    let mut worst = 0.0f64;
    for (sa, na, sb, nb) in groups.values() {
        if na != nb {
            return f64::INFINITY;
        }
        worst = worst.max((sa / *na as f64 - sb / *nb as f64).norm());
    }
    worst
}

/// Outcome of checking that `S = f(T)` and its flag diagonal share a
/// spectral distribution and differ by a nilpotent.
#[derive(Debug, Clone)]
pub struct SimultutReport {
    /// Eigenvalues of `S` against `f` at the atoms.
    pub eigen_distance: f64,
    /// Diagonal of the flag expectation against `f` at the atoms.
    pub diagonal_distance: f64,
    pub nilpotency: NilpotencyReport,
}

impl SimultutReport {
    pub fn passed(&self, limit: f64) -> bool {
        self.eigen_distance <= limit && self.diagonal_distance <= limit && self.nilpotency.nilpotent
    }
}

/// Checks a matrix `S = f(T)` against its flag diagonal.
pub fn verify_simultut(
    s: &CMatrix,
    f: &dyn PointMap,
    t: &CommutingTuple,
    flag: &Flag,
    tol: &Tolerance,
) -> Result<SimultutReport> {
    if f.in_dim() != t.n() || f.out_dim() != 1 {
        return Err(Error::DimensionMismatch { expected: t.n(), found: f.in_dim() });
    }
    let mut expected = Vec::with_capacity(t.k());
    for (a, &m) in flag.atoms.iter().zip(&flag.multiplicities) {
        let v = f.map_point(a)?[0];
        expected.extend(std::iter::repeat(v).take(m));
    }
    let n = diag_expectation(s, flag, tol)?;
    let v = &flag.unitary;
    let nd = v.adjoint() * &n * v;
    let diag: Vec<C64> = (0..t.k()).map(|i| nd[(i, i)]).collect();
    let scale = 1.0 + op_norm(s);
    let radius = 1e-4 * scale;
    let eig = crate::numcore::eigenvalues(s)?;
    let nilpotency = nilpotency_report(&(s - &n), op_norm(s), tol)?;
    Ok(SimultutReport {
        eigen_distance: clustered_distance(&eig, &expected, radius),
        diagonal_distance: clustered_distance(&diag, &expected, radius),
        nilpotency,
    })
}

/// Orders two atoms by parameter and then lexicographically.
pub fn ordering_cmp(o: &SpectralOrdering, i: usize, j: usize) -> Ordering {
    o.keys[i].cmp(&o.keys[j]).then_with(|| lex_cmp(&o.atoms[i], &o.atoms[j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hsproj::hs_joint;
    use crate::numcore::{projection_distance, random};
    use crate::triangular::joint_measure;
    use crate::tuples::{
        certify_commuting, eval_poly, planted_tuple, random_commuting_tuple, CommPolynomial, Conjugation,
        PlantedSpec, TupleStyle,
    };
    use proptest::prelude::*;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn diag(vals: &[f64]) -> CMatrix {
        CMatrix::from_fn(vals.len(), vals.len(), |i, j| if i == j { c(vals[i], 0.0) } else { c(0.0, 0.0) })
    }

    /// All indices of length `len`, in increasing order.
    fn all_indices(len: usize) -> impl Iterator<Item = Digits> {
        (0..4u64.pow(len as u32)).map(move |j| (0..len).rev().map(|s| ((j >> (2 * s)) & 3) as u8).collect())
    }

    /// Brute-force first cell via the swept boxes.
    fn brute_first_cell(curve: &PeanoCurve, x: &[f64]) -> Digits {
        all_indices(curve.index_len())
            .find(|d| curve.cell_box(d).iter().zip(x).all(|((lo, hi), v)| lo <= v && v <= hi))
            .unwrap()
    }

    #[test]
    fn hilbert_index_round_trip() {
        for level in 1..6 {
            for d in all_indices(level) {
                let (x, y) = hilbert_square(&d);
                assert_eq!(hilbert_index(&x, &y), d);
            }
        }
    }

    #[test]
    fn hilbert_endpoints_and_first_level() {
        assert_eq!(hilbert_point(0.0), (0.0, 0.0));
        assert_eq!(hilbert_point(1.0), (1.0, 0.0));
        let corners: Vec<_> = [0u8, 1, 2, 3].iter().map(|&q| hilbert_square(&[q])).collect();
        let as_pairs: Vec<(bool, bool)> = corners.iter().map(|(x, y)| (x[0], y[0])).collect();
        assert_eq!(as_pairs, vec![(false, false), (false, true), (true, true), (true, false)]);
    }

    #[test]
    fn consecutive_hilbert_cells_are_adjacent() {
        for level in 1..7 {
            let side = 0.5f64.powi(level as i32);
            let pts: Vec<(f64, f64)> = all_indices(level).map(|d| hilbert_point_digits(&d)).collect();
            for w in pts.windows(2) {
                let gap = (w[0].0 - w[1].0).abs() + (w[0].1 - w[1].1).abs();
                assert!((gap - side).abs() < 1e-15);
            }
            let last = pts.last().unwrap();
            assert!(((last.0 - 1.0).abs() + last.1.abs() - side).abs() < 1e-15);
        }
    }

    #[test]
    fn square_disk_round_trip() {
        let mut rng = random::rng(3);
        for _ in 0..500 {
            let a = random::uniform(&mut rng, -1.0, 1.0);
            let b = random::uniform(&mut rng, -1.0, 1.0);
            let w = square_to_disk(a, b);
            assert!(w.norm() <= 1.0 + 1e-15);
            let (a2, b2) = disk_to_square(w);
            assert!((a - a2).abs() < 1e-12 && (b - b2).abs() < 1e-12);
        }
        // Corners land on the unit circle.
        assert!((square_to_disk(1.0, 1.0).norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn curve_start_point() {
        for depth in 1..5 {
            let curve = PeanoCurve::new(1, vec![1.0], depth).unwrap();
            let z = curve.eval(0.0);
            assert!((z[0] - square_to_disk(-1.0, -1.0)).norm() < 1e-15);
            let nu = JointSpectralMeasure::from_points(1, &[z]).unwrap();
            let o = assign_params(&curve, &nu, &tol()).unwrap();
            assert_eq!(o.params[0], 0.0);
        }
    }

    #[test]
    fn cell_boxes_have_the_expected_sides() {
        let curve = PeanoCurve::new(2, vec![1.0, 1.0], 2).unwrap();
        assert_eq!(curve.levels(), vec![8, 4, 2]);
        let sides = curve.cell_sides();
        let mut rng = random::rng(1);
        for _ in 0..50 {
            let d: Digits = (0..curve.index_len()).map(|_| random::int_in(&mut rng, 0, 3) as u8).collect();
            let bx = curve.cell_box(&d);
            for ((lo, hi), s) in bx.iter().zip(&sides) {
                assert!((hi - lo - s).abs() < 1e-15);
            }
            let p = curve.eval_cube_digits(&d);
            assert!(bx.iter().zip(&p).all(|((lo, hi), v)| lo - 1e-15 <= *v && *v <= hi + 1e-15));
        }
    }

    #[test]
    fn every_dyadic_cell_is_covered() {
        for (n, depth) in [(1, 1), (1, 3), (1, 5), (2, 1), (2, 2), (2, 3), (2, 4), (2, 5)] {
            let curve = PeanoCurve::new(n, vec![1.0; n], depth).unwrap();
            let per = 1usize << depth;
            let dim = 2 * n;
            let total = per.pow(dim as u32);
            let side = 1.0 / per as f64;
            let uncovered = (0..total)
                .into_par_iter()
                .filter(|&cell| {
                    let idx: Vec<usize> = (0..dim).map(|j| (cell / per.pow(j as u32)) % per).collect();
                    let centre: Vec<f64> = idx.iter().map(|&i| (i as f64 + 0.5) * side).collect();
                    let d = curve.first_cell(&centre).unwrap();
                    let p = curve.eval_cube_digits(&d);
                    !idx.iter().zip(&p).all(|(&i, &v)| i as f64 * side - 1e-12 <= v && v <= (i + 1) as f64 * side + 1e-12)
                })
                .count();
            assert_eq!(uncovered, 0, "n={n} depth={depth}");
        }
    }

    #[test]
    fn consecutive_samples_are_close() {
        for (n, depth) in [(1, 6), (2, 1), (2, 2)] {
            let curve = PeanoCurve::new(n, vec![1.0; n], depth).unwrap();
            let mut prev: Option<Vec<f64>> = None;
            let mut worst = 0.0f64;
            for d in all_indices(curve.index_len()) {
                let p = curve.eval_cube_digits(&d);
                if let Some(q) = &prev {
                    worst = worst.max(p.iter().zip(q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
                }
                prev = Some(p);
            }
            assert!(worst <= 6.0 * 0.5f64.powi(depth as i32), "n={n} depth={depth} gap={worst}");
        }
    }

    #[test]
    fn first_cell_matches_brute_force() {
        let mut rng = random::rng(11);
        for (n, depth) in [(1, 3), (1, 5), (2, 1), (2, 2)] {
            let curve = PeanoCurve::new(n, vec![1.0; n], depth).unwrap();
            for trial in 0..40 {
                let x: Vec<f64> = (0..2 * n)
                    .map(|_| {
                        if trial % 3 == 0 {
                            // Grid points exercise cells meeting at a boundary.
                            random::int_in(&mut rng, 0, 1 << depth) as f64 / (1 << depth) as f64
                        } else {
                            random::uniform(&mut rng, 0.0, 1.0)
                        }
                    })
                    .collect();
                assert_eq!(curve.first_cell(&x).unwrap(), brute_first_cell(&curve, &x));
            }
        }
    }

    #[test]
    fn pair_order_matches_brute_force() {
        let mut rng = random::rng(5);
        let curve = PeanoCurve::new(1, vec![2.0], 4).unwrap();
        for _ in 0..20 {
            let pts: Vec<Vec<C64>> = (0..2).map(|_| vec![random::complex_normal(&mut rng) * 0.8]).collect();
            let nu = JointSpectralMeasure::from_points(1, &pts).unwrap();
            let o = assign_params(&curve, &nu, &tol()).unwrap();
            let brute: Vec<Digits> =
                nu.atoms().iter().map(|a| brute_first_cell(&curve, &curve.to_cube(a, &tol()).unwrap())).collect();
            let mut want: Vec<usize> = vec![0, 1];
            want.sort_by(|&i, &j| brute[i].cmp(&brute[j]).then_with(|| lex_cmp(&nu.atoms()[i], &nu.atoms()[j])));
            assert_eq!(o.order, want);
        }
    }

    #[test]
    fn atom_outside_polydisk_is_rejected() {
        let curve = PeanoCurve::new(1, vec![1.0], 2).unwrap();
        let nu = JointSpectralMeasure::from_points(1, &[vec![c(0.0, 0.0)], vec![c(1.5, 0.0)]]).unwrap();
        assert!(matches!(assign_params(&curve, &nu, &tol()), Err(Error::AtomOutsidePolydisk { atom: 1 })));
        let nu = JointSpectralMeasure::from_points(1, &[vec![c(1.0 + 1e-12, 0.0)]]).unwrap();
        assert!(assign_params(&curve, &nu, &tol()).is_ok());
    }

    #[test]
    fn diagonal_pair_flag() {
        let t = certify_commuting(vec![diag(&[1.0, 2.0]), diag(&[3.0, 4.0])], &tol()).unwrap();
        let curve = curve_for(&t, 3).unwrap();
        let o = assign_params(&curve, &joint_measure(&t, &tol()).unwrap(), &tol()).unwrap();
        let flag = build_flag(&t, &o, &tol()).unwrap();
        assert_eq!(flag.dims(), vec![1, 2]);
        assert!(flag.breakpoints[0] <= flag.breakpoints[1]);
        let (_, tris) = triangularize_by_flag(&t, &flag, &tol()).unwrap();
        for (step, a) in flag.atoms.iter().enumerate() {
            assert!((tris[0][(step, step)] - a[0]).norm() < 1e-14);
            assert!((tris[1][(step, step)] - a[1]).norm() < 1e-14);
        }
    }

    #[test]
    fn simultut_trivial_example() {
        let t = certify_commuting(vec![diag(&[1.0, 2.0]), diag(&[3.0, 4.0])], &tol()).unwrap();
        let curve = curve_for(&t, 3).unwrap();
        let o = assign_params(&curve, &joint_measure(&t, &tol()).unwrap(), &tol()).unwrap();
        let flag = build_flag(&t, &o, &tol()).unwrap();
        let f = CommPolynomial::from_terms(2, [(vec![1, 1], c(1.0, 0.0))]).unwrap();
        let s = eval_poly(&f, &t).unwrap();
        let n = diag_expectation(&s, &flag, &tol()).unwrap();
        assert!((&s - &n).norm() < 1e-14);
        let r = verify_simultut(&s, &f, &t, &flag, &tol()).unwrap();
        assert!(r.passed(1e-12));

        let one = CommPolynomial::constant(2, c(2.0, 1.0));
        let s = eval_poly(&one, &t).unwrap();
        assert!((&s - diag_expectation(&s, &flag, &tol()).unwrap()).norm() == 0.0);
    }

    #[test]
    fn expectation_rejects_non_triangular() {
        let t = certify_commuting(vec![diag(&[1.0, 2.0])], &tol()).unwrap();
        let curve = curve_for(&t, 2).unwrap();
        let o = assign_params(&curve, &joint_measure(&t, &tol()).unwrap(), &tol()).unwrap();
        let flag = build_flag(&t, &o, &tol()).unwrap();
        let s = CMatrix::from_fn(2, 2, |_, _| c(1.0, 0.0));
        assert!(matches!(diag_expectation(&s, &flag, &tol()), Err(Error::NotTriangular { .. })));
    }

    #[test]
    fn clustered_distance_examples() {
        let a = [c(1.0, 0.0), c(1.0 + 1e-6, 0.0), c(5.0, 0.0)];
        let b = [c(1.0 + 5e-7, 0.0), c(1.0 + 5e-7, 0.0), c(5.0, 0.0)];
        assert!(clustered_distance(&a, &b, 1e-4) < 1e-15);
        let b = [c(1.0, 0.0), c(5.0, 0.0), c(5.0, 0.0)];
        assert_eq!(clustered_distance(&a, &b, 1e-4), f64::INFINITY);
    }

    fn planted(seed: u64, k: usize, n: usize) -> CommutingTuple {
        let spec = PlantedSpec { max_cluster: 2, conjugation: Conjugation::Unitary, ..PlantedSpec::new(k, n) };
        planted_tuple(&spec, seed).unwrap().tuple
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn flag_is_an_invariant_chain(seed in any::<u64>(), k in 2usize..8, n in 1usize..4) {
            let t = planted(seed, k, n);
            let nu = joint_measure(&t, &tol()).unwrap();
            let o = assign_params(&curve_for(&t, 2).unwrap(), &nu, &tol()).unwrap();
            let flag = build_flag(&t, &o, &tol()).unwrap();
            let dims = flag.dims();
            prop_assert_eq!(*dims.last().unwrap(), k);
            for w in flag.projections.windows(2) {
                prop_assert!(w[0].subspace.dim() < w[1].subspace.dim());
                prop_assert!(w[1].subspace.contains(&w[0].subspace, &tol()).unwrap());
            }
            for (step, q) in flag.projections.iter().enumerate() {
                for (m, s) in t.matrices().iter().zip(t.norms()) {
                    prop_assert!(q.subspace.invariance_residual(m).unwrap() <= 1e-8 * s.max(1.0));
                }
                let covered = &o.order[..=step];
                let mass = nu.mass_where(|a| covered.iter().any(|&i| nu.atoms()[i] == a));
                prop_assert_eq!(q.subspace.trace_ratio(), mass);
                let lattice = hs_joint(&t, &q.region, &tol()).unwrap().subspace;
                prop_assert!(projection_distance(&lattice, &q.subspace).unwrap() <= 1e-7);
            }
            let (_, tris) = triangularize_by_flag(&t, &flag, &tol()).unwrap();
            for (r, s) in tris.iter().zip(t.norms()) {
                prop_assert!(strict_lower_norm(r) <= 1e-8 * s);
            }
            let mut pos = 0;
            for (a, &m) in flag.atoms.iter().zip(&flag.multiplicities) {
                for _ in 0..m {
                    let d: Vec<C64> = tris.iter().map(|r| r[(pos, pos)]).collect();
                    prop_assert!(point_distance(&d, a) <= 1e-7);
                    pos += 1;
                }
            }
        }

        #[test]
        fn refinement_moves_params_less_than_a_cell(seed in any::<u64>()) {
            let t = planted(seed, 5, 1);
            let nu = joint_measure(&t, &tol()).unwrap();
            let mut prev: Option<SpectralOrdering> = None;
            for depth in 3..=6 {
                let curve = curve_for(&t, depth).unwrap();
                let o = assign_params(&curve, &nu, &tol()).unwrap();
                if let Some(p) = &prev {
                    let width = 0.25f64.powi(curve_for(&t, depth - 1).unwrap().index_len() as i32);
                    for (a, b) in p.params.iter().zip(&o.params) {
                        prop_assert!(*b >= *a);
                        prop_assert!(*b - *a < width);
                    }
                }
                prev = Some(o);
            }
        }

        #[test]
        fn params_push_back_to_atoms(seed in any::<u64>(), n in 1usize..4) {
            let t = planted(seed, 4, n);
            let nu = joint_measure(&t, &tol()).unwrap();
            let curve = curve_for(&t, 3).unwrap();
            let o = assign_params(&curve, &nu, &tol()).unwrap();
            for (a, key) in nu.atoms().iter().zip(&o.keys) {
                let x = curve.to_cube(a, &tol()).unwrap();
                let p = curve.eval_cube_digits(key);
                let gap = x.iter().zip(&p).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
                prop_assert!(gap <= 0.5f64.powi(3) + 1e-12);
            }
        }

        #[test]
        fn expectation_is_multiplicative(seed in any::<u64>()) {
            let t = planted(seed, 6, 2);
            let nu = joint_measure(&t, &tol()).unwrap();
            let flag = build_flag(&t, &assign_params(&curve_for(&t, 2).unwrap(), &nu, &tol()).unwrap(), &tol()).unwrap();
            let mut rng = random::rng(seed);
            let v = &flag.unitary;
            let upper = |rng: &mut random::SeededRng| {
                let g = random::gaussian(rng, 6, 6);
                v * CMatrix::from_fn(6, 6, |i, j| if i <= j { g[(i, j)] } else { c(0.0, 0.0) }) * v.adjoint()
            };
            let (s1, s2) = (upper(&mut rng), upper(&mut rng));
            let e = |s: &CMatrix| diag_expectation(s, &flag, &tol()).unwrap();
            let gap = (e(&(&s1 * &s2)) - e(&s1) * e(&s2)).norm();
            prop_assert!(gap <= 1e-8 * (1.0 + op_norm(&s1) * op_norm(&s2)));
            prop_assert!((e(&s1).trace() - s1.trace()).norm() <= 1e-10 * (1.0 + op_norm(&s1)));
        }

        #[test]
        fn polynomial_flag_diagonal_matches(seed in any::<u64>(), n in 1usize..4) {
            let t = random_commuting_tuple(6, n, seed, TupleStyle::ConjugatedTriangular).unwrap();
            let nu = joint_measure(&t, &tol()).unwrap();
            let flag = build_flag(&t, &assign_params(&curve_for(&t, 2).unwrap(), &nu, &tol()).unwrap(), &tol()).unwrap();
            let mut rng = random::rng(seed);
            let f = CommPolynomial::random(&mut rng, n, 3, false);
            let s = eval_poly(&f, &t).unwrap();
            let r = verify_simultut(&s, &f, &t, &flag, &tol()).unwrap();
            // Pointwise oracle for the diagonal.
            let n_mat = diag_expectation(&s, &flag, &tol()).unwrap();
            let nd = flag.unitary.adjoint() * n_mat * &flag.unitary;
            let mut pos = 0;
            for (a, &m) in flag.atoms.iter().zip(&flag.multiplicities) {
                let want = f.eval_point(a).unwrap();
                for _ in 0..m {
                    prop_assert!((nd[(pos, pos)] - want).norm() <= 1e-7 * (1.0 + want.norm()));
                    pos += 1;
                }
            }
            prop_assert!(r.passed(1e-7 * (1.0 + op_norm(&s))), "{:?}", r);
        }
    }
}
