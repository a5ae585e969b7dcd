//! Invariant projections attached to regions of `C^n`.
//!
//! For a single matrix the projection onto the sum of generalized
//! eigenspaces with eigenvalues in a region is read off a reordered Schur
//! form. Joint projections over rectangles are meets of single-operator
//! projections, unions are joins, and complements reorder a simultaneous
//! Schur form. These projections are generally not orthogonal to their
//! lattice complements.

use std::fmt;
use std::sync::Arc;

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::numcore::{
    self, check_finite, check_square, embed, schur_form, join, join_all, meet, meet_all, op_norm, projection_distance,
    CMatrix, Subspace, Tolerance, C64,
};
use crate::numcore::random::{self, SeededRng};
use crate::triangular::{
    joint_eigenvalues, measure_from_flag, point_distance, simultaneous_schur, JointSpectralMeasure, SchurFlag,
};
use crate::tuples::{certify_commuting_with, CommutingTuple, TupleId};

/// A subset of the complex plane.
#[derive(Debug, Clone, PartialEq)]
pub enum PlaneRegion {
    Disk { center: C64, radius: f64 },
    /// `{ z : Re(conj(normal) z) <= offset }`.
    HalfPlane { normal: C64, offset: f64 },
    Union(Vec<PlaneRegion>),
    Full,
}

/// Position of a point relative to a region, with an uncertainty band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    Inside,
    Outside,
    Ambiguous,
}

impl PlaneRegion {
    /// Signed distance to the boundary, negative inside.
    pub fn signed_distance(&self, z: C64) -> f64 {
        match self {
            PlaneRegion::Disk { center, radius } => (z - center).norm() - radius,
            PlaneRegion::HalfPlane { normal, offset } => {
                let nn = normal.norm();
                ((normal.conj() * z).re - offset) / nn
            }
            PlaneRegion::Union(parts) => parts.iter().map(|p| p.signed_distance(z)).fold(f64::INFINITY, f64::min),
            PlaneRegion::Full => f64::NEG_INFINITY,
        }
    }

    pub fn contains(&self, z: C64) -> bool {
        self.signed_distance(z) <= 0.0
    }

    pub fn classify(&self, z: C64, band: f64) -> Membership {
        let d = self.signed_distance(z);
        if d < -band {
            Membership::Inside
        } else if d > band {
            Membership::Outside
        } else {
            Membership::Ambiguous
        }
    }

    /// The mirror image `{ conj(z) : z in self }`.
    pub fn conjugate(&self) -> PlaneRegion {
        match self {
            PlaneRegion::Disk { center, radius } => PlaneRegion::Disk { center: center.conj(), radius: *radius },
            PlaneRegion::HalfPlane { normal, offset } => PlaneRegion::HalfPlane { normal: normal.conj(), offset: *offset },
            PlaneRegion::Union(parts) => PlaneRegion::Union(parts.iter().map(|p| p.conjugate()).collect()),
            PlaneRegion::Full => PlaneRegion::Full,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            PlaneRegion::Disk { center, radius } => {
                if !(center.re.is_finite() && center.im.is_finite() && radius.is_finite() && *radius >= 0.0) {
                    return Err(Error::InvalidArgument("disk needs a finite center and radius".into()));
                }
            }
            PlaneRegion::HalfPlane { normal, offset } => {
                if !(normal.norm() > 0.0 && normal.norm().is_finite() && offset.is_finite()) {
                    return Err(Error::InvalidArgument("half-plane needs a nonzero normal".into()));
                }
            }
            PlaneRegion::Union(parts) => parts.iter().try_for_each(|p| p.validate())?,
            PlaneRegion::Full => {}
        }
        Ok(())
    }
}

/// Membership test used only to check results, never to build projections.
#[derive(Clone)]
pub struct PredicateRegion {
    pub n: usize,
    pub label: String,
    pub test: Arc<dyn Fn(&[C64]) -> bool + Send + Sync>,
}

impl fmt::Debug for PredicateRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PredicateRegion").field("n", &self.n).field("label", &self.label).finish()
    }
}

impl PartialEq for PredicateRegion {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.label == other.label && Arc::ptr_eq(&self.test, &other.test)
    }
}

/// A subset of `C^n` built from rectangles of plane regions.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Rectangle(Vec<PlaneRegion>),
    Union(Vec<Region>),
    Complement(Box<Region>),
    Predicate(PredicateRegion),
}

impl Region {
    /// Rectangle of per-coordinate disks.
    pub fn polydisk(center: &[C64], radius: f64) -> Region {
        Region::Rectangle(center.iter().map(|&c| PlaneRegion::Disk { center: c, radius }).collect())
    }

    pub fn full(n: usize) -> Region {
        Region::Rectangle(vec![PlaneRegion::Full; n])
    }

    pub fn complement(self) -> Region {
        Region::Complement(Box::new(self))
    }

    /// Dimension of the ambient `C^n`, if the region is non-empty in structure.
    pub fn n(&self) -> Option<usize> {
        match self {
            Region::Rectangle(c) => Some(c.len()),
            Region::Union(parts) => parts.first().and_then(|p| p.n()),
            Region::Complement(inner) => inner.n(),
            Region::Predicate(p) => Some(p.n),
        }
    }

    /// Checks that every part lives in `C^n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            Region::Rectangle(c) => {
                if c.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, found: c.len() });
                }
                c.iter().try_for_each(|p| p.validate())
            }
            Region::Union(parts) => parts.iter().try_for_each(|p| p.validate(n)),
            Region::Complement(inner) => inner.validate(n),
            Region::Predicate(p) => {
                if p.n != n {
                    return Err(Error::DimensionMismatch { expected: n, found: p.n });
                }
                Ok(())
            }
        }
    }

    pub fn contains(&self, z: &[C64]) -> bool {
        self.classify(z, 0.0) != Membership::Outside
    }

    pub fn classify(&self, z: &[C64], band: f64) -> Membership {
        match self {
            Region::Rectangle(coords) => {
                let mut ambiguous = false;
                for (p, &zi) in coords.iter().zip(z) {
                    match p.classify(zi, band) {
                        Membership::Outside => return Membership::Outside,
                        Membership::Ambiguous => ambiguous = true,
                        Membership::Inside => {}
                    }
                }
                if ambiguous {
                    Membership::Ambiguous
                } else {
                    Membership::Inside
                }
            }
            Region::Union(parts) => {
                let mut ambiguous = false;
                for p in parts {
                    match p.classify(z, band) {
                        Membership::Inside => return Membership::Inside,
                        Membership::Ambiguous => ambiguous = true,
                        Membership::Outside => {}
                    }
                }
                if ambiguous {
                    Membership::Ambiguous
                } else {
                    Membership::Outside
                }
            }
            Region::Complement(inner) => match inner.classify(z, band) {
                Membership::Inside => Membership::Outside,
                Membership::Outside => Membership::Inside,
                Membership::Ambiguous => Membership::Ambiguous,
            },
            Region::Predicate(p) => {
                if (p.test)(z) {
                    Membership::Inside
                } else {
                    Membership::Outside
                }
            }
        }
    }

    /// The mirror image `{ conj(z) : z in self }`.
    pub fn conjugate(&self) -> Region {
        match self {
            Region::Rectangle(c) => Region::Rectangle(c.iter().map(|p| p.conjugate()).collect()),
            Region::Union(parts) => Region::Union(parts.iter().map(|p| p.conjugate()).collect()),
            Region::Complement(inner) => Region::Complement(Box::new(inner.conjugate())),
            Region::Predicate(p) => {
                let test = p.test.clone();
                Region::Predicate(PredicateRegion {
                    n: p.n,
                    label: format!("conj({})", p.label),
                    test: Arc::new(move |z: &[C64]| {
                        let w: Vec<C64> = z.iter().map(|x| x.conj()).collect();
                        test(&w)
                    }),
                })
            }
        }
    }
}

/// Invariant projection attached to a region.
#[derive(Debug, Clone)]
pub struct HSProjection {
    pub subspace: Subspace,
    pub region: Region,
    pub tuple_id: TupleId,
    /// `dim / k`, equal to the joint measure of the region.
    pub trace: Ratio<usize>,
}

fn boundary_error(z: &[C64]) -> Error {
    Error::BoundaryAmbiguous { point: z.iter().map(|w| (w.re, w.im)).collect() }
}

/// Band inside which an eigenvalue counts as lying on a region boundary.
pub fn boundary_band(t: &CommutingTuple, tol: &Tolerance) -> f64 {
    tol.threshold(t.scale())
}

fn rotate_pair(flag: &mut SchurFlag, p: usize) {
    let n = flag.triangulars.len();
    let coord = (0..n)
        .max_by(|&i, &j| {
            let gi = (flag.triangulars[i][(p, p)] - flag.triangulars[i][(p + 1, p + 1)]).norm();
            let gj = (flag.triangulars[j][(p, p)] - flag.triangulars[j][(p + 1, p + 1)]).norm();
            gi.total_cmp(&gj).then(j.cmp(&i))
        })
        .unwrap_or(0);
    let t = &flag.triangulars[coord];
    let (a, b, cc) = (t[(p, p)], t[(p, p + 1)], t[(p + 1, p + 1)]);
    let x0 = b;
    let x1 = cc - a;
    let nrm = (x0.norm_sqr() + x1.norm_sqr()).sqrt();
    if nrm == 0.0 {
        return;
    }
    let (x0, x1) = (x0 / nrm, x1 / nrm);
    // Columns of g: (x0, x1) and (-conj(x1), conj(x0)).
    let g = [[x0, -x1.conj()], [x1, x0.conj()]];
    let k = flag.unitary.nrows();
    for m in flag.triangulars.iter_mut() {
        for col in 0..k {
            let (u, v) = (m[(p, col)], m[(p + 1, col)]);
            m[(p, col)] = g[0][0].conj() * u + g[1][0].conj() * v;
            m[(p + 1, col)] = g[0][1].conj() * u + g[1][1].conj() * v;
        }
        for row in 0..k {
            let (u, v) = (m[(row, p)], m[(row, p + 1)]);
            m[(row, p)] = u * g[0][0] + v * g[1][0];
            m[(row, p + 1)] = u * g[0][1] + v * g[1][1];
        }
        m[(p + 1, p)] = C64::new(0.0, 0.0);
    }
    for row in 0..k {
        let (u, v) = (flag.unitary[(row, p)], flag.unitary[(row, p + 1)]);
        flag.unitary[(row, p)] = u * g[0][0] + v * g[1][0];
        flag.unitary[(row, p + 1)] = u * g[0][1] + v * g[1][1];
    }
}

/// Stable reordering of a joint triangular form by ascending `keys`.
///
/// Adjacent diagonal entries are exchanged with one Givens rotation that
/// serves every operator at once, since the 2x2 diagonal blocks of commuting
/// upper triangular matrices commute.
pub fn reorder_flag(flag: &mut SchurFlag, keys: &mut [usize]) {
    let k = keys.len();
    for pass in 0..k {
        let mut swapped = false;
        for p in 0..k.saturating_sub(1 + pass) {
            if keys[p] > keys[p + 1] {
                rotate_pair(flag, p);
                keys.swap(p, p + 1);
                swapped = true;
            }
        }
        if !swapped {
            break;
        }
    }
}

fn classify_points(points: &[Vec<C64>], region: &Region, band: f64) -> Result<Vec<bool>> {
    points
        .iter()
        .map(|p| match region.classify(p, band) {
            Membership::Inside => Ok(true),
            Membership::Outside => Ok(false),
            Membership::Ambiguous => Err(boundary_error(p)),
        })
        .collect()
}

/// Invariant subspace for one matrix and eigenvalues in `b`.
pub fn hs_single(a: &CMatrix, b: &PlaneRegion, tol: &Tolerance) -> Result<HSProjection> {
    let k = check_square(a)?;
    check_finite(a, "matrix")?;
    b.validate()?;
    let t = certify_commuting_with(vec![a.clone()], f64::INFINITY)?;
    let (q, tri) = schur_form(a)?;
    let band = tol.threshold(op_norm(a));
    let region = Region::Rectangle(vec![b.clone()]);
    let points: Vec<Vec<C64>> = (0..k).map(|p| vec![tri[(p, p)]]).collect();
    let inside = classify_points(&points, &region, band)?;
    let mut flag = SchurFlag { unitary: q, triangulars: vec![tri], residual: 0.0 };
    let dim = sorted_prefix(&mut flag, &inside);
    let frame = flag.unitary.columns(0, dim).into_owned();
    Ok(HSProjection {
        subspace: Subspace::from_orthonormal(frame, tol)?,
        region,
        tuple_id: t.id(),
        trace: Ratio::new(dim, k),
    })
}

fn sorted_prefix(flag: &mut SchurFlag, inside: &[bool]) -> usize {
    let mut keys: Vec<usize> = inside.iter().map(|&b| if b { 0 } else { 1 }).collect();
    reorder_flag(flag, &mut keys);
    inside.iter().filter(|&&b| b).count()
}

/// Joint projection from a reordered simultaneous Schur form.
pub fn hs_joint_sorted(t: &CommutingTuple, x: &Region, tol: &Tolerance) -> Result<HSProjection> {
    x.validate(t.n())?;
    let flag = simultaneous_schur(t, tol)?;
    sorted_from_flag(t, flag, x, tol)
}

fn sorted_from_flag(t: &CommutingTuple, mut flag: SchurFlag, x: &Region, tol: &Tolerance) -> Result<HSProjection> {
    let band = boundary_band(t, tol);
    let inside = classify_points(&joint_eigenvalues(&flag), x, band)?;
    let dim = sorted_prefix(&mut flag, &inside);
    let frame = flag.unitary.columns(0, dim).into_owned();
    Ok(HSProjection {
        subspace: Subspace::from_orthonormal(frame, tol)?,
        region: x.clone(),
        tuple_id: t.id(),
        trace: Ratio::new(dim, t.k()),
    })
}

fn lattice_subspace(t: &CommutingTuple, x: &Region, tol: &Tolerance, flag: &SchurFlag) -> Result<Subspace> {
    let k = t.k();
    match x {
        Region::Rectangle(coords) => {
            let parts = coords
                .iter()
                .enumerate()
                .filter(|(_, p)| **p != PlaneRegion::Full)
                .map(|(j, p)| hs_single(t.matrix(j), p, tol).map(|h| h.subspace))
                .collect::<Result<Vec<_>>>()?;
            meet_all(k, &parts, tol)
        }
        Region::Union(parts) => {
            let subs = parts.iter().map(|p| lattice_subspace(t, p, tol, flag)).collect::<Result<Vec<_>>>()?;
            join_all(k, &subs, tol)
        }
        Region::Complement(_) => Ok(sorted_from_flag(t, flag.clone(), x, tol)?.subspace),
        Region::Predicate(p) => {
            Err(Error::Unsupported(format!("predicate region '{}' cannot define a projection", p.label)))
        }
    }
}

/// Joint projection `P(T : X)`.
///
/// Rectangles are meets of single-operator projections, unions are joins
/// and complements come from a reordered simultaneous Schur form. The
/// dimension is checked against the number of joint eigenvalues in `X`.
pub fn hs_joint(t: &CommutingTuple, x: &Region, tol: &Tolerance) -> Result<HSProjection> {
    x.validate(t.n())?;
    let flag = simultaneous_schur(t, tol)?;
    let band = boundary_band(t, tol);
    let inside = classify_points(&joint_eigenvalues(&flag), x, band)?;
    let expected = inside.iter().filter(|&&b| b).count();
    let subspace = lattice_subspace(t, x, tol, &flag)?;
    if subspace.dim() != expected {
        return Err(Error::Numerical(format!(
            "projection has dimension {} but the region holds {expected} eigenvalues",
            subspace.dim()
        )));
    }
    Ok(HSProjection { trace: subspace.trace_ratio(), subspace, region: x.clone(), tuple_id: t.id() })
}

/// Largest `||(1 - P) T_i P|| / ||T_i||`.
pub fn invariance_residual(t: &CommutingTuple, p: &Subspace) -> Result<f64> {
    let mut worst = 0.0f64;
    for (m, s) in t.matrices().iter().zip(t.norms()) {
        let r = p.invariance_residual(m)?;
        worst = worst.max(if s > 0.0 { r / s } else { r });
    }
    Ok(worst)
}

/// Compression of a tuple to an invariant subspace and to its orthocomplement.
#[derive(Debug, Clone)]
pub struct Compression {
    pub q: Subspace,
    pub complement: Subspace,
    /// `Q T Q` in the frame of `Q`; `None` when `Q = 0`.
    pub inner: Option<CommutingTuple>,
    /// `(1-Q) T (1-Q)` in the frame of `1 - Q`; `None` when `Q = 1`.
    pub outer: Option<CommutingTuple>,
    pub invariance_residual: f64,
}

fn compress_onto(t: &CommutingTuple, s: &Subspace, tol: &Tolerance) -> Result<Option<CommutingTuple>> {
    if s.is_zero() {
        return Ok(None);
    }
    t.compress(s.frame(), tol.rel_eps).map(Some)
}

/// Compresses `T` to an invariant subspace `Q` and to `1 - Q`.
pub fn compress(t: &CommutingTuple, q: &Subspace, tol: &Tolerance) -> Result<Compression> {
    if q.ambient_dim() != t.k() {
        return Err(Error::DimensionMismatch { expected: t.k(), found: q.ambient_dim() });
    }
    let residual = invariance_residual(t, q)?;
    if residual > tol.rel_eps {
        return Err(Error::NotInvariant { residual });
    }
    let complement = q.complement(tol);
    Ok(Compression {
        inner: compress_onto(t, q, tol)?,
        outer: compress_onto(t, &complement, tol)?,
        q: q.clone(),
        complement,
        invariance_residual: residual,
    })
}

/// Compression to a subspace that need not be invariant, e.g. a difference
/// of nested invariant projections.
pub fn compress_corner(t: &CommutingTuple, p: &Subspace, tol: &Tolerance) -> Result<CommutingTuple> {
    t.compress(p.frame(), tol.rel_eps)
}

/// Result of comparing `ν_T` with `τ(Q) ν_{TQ} + τ(1-Q) ν_{(1-Q)T}`.
#[derive(Debug, Clone)]
pub struct MeasureSplit {
    pub whole: JointSpectralMeasure,
    pub combined: JointSpectralMeasure,
    pub weights_equal: bool,
    pub atom_distance: f64,
}

impl Compression {
    pub fn measure_split(&self, t: &CommutingTuple, tol: &Tolerance) -> Result<MeasureSplit> {
        let k = t.k();
        let whole = measure_from_flag(&simultaneous_schur(t, tol)?)?;
        let mut points = Vec::new();
        for part in [&self.inner, &self.outer].into_iter().flatten() {
            let nu = measure_from_flag(&simultaneous_schur(part, tol)?)?;
            let w = Ratio::new(part.k(), k);
            for (i, a) in nu.atoms().iter().enumerate() {
                points.push((a.clone(), w * nu.weight_ratio(i)));
            }
        }
        let combined = JointSpectralMeasure::from_ratios(t.n(), points)?;
        let weights_equal = whole.same_weights(&combined);
        let atom_distance = whole.distance(&combined);
        Ok(MeasureSplit { whole, combined, weights_equal, atom_distance })
    }

    /// Distance between `P^{(Q)}(TQ : X)` embedded in `C^k` and `P(T : X) ∧ Q`.
    pub fn inner_identity(&self, t: &CommutingTuple, x: &Region, tol: &Tolerance) -> Result<f64> {
        let p = hs_joint(t, x, tol)?.subspace;
        let rhs = meet(&p, &self.q, tol)?;
        let lhs = match &self.inner {
            Some(inner) => embed(&hs_joint(inner, x, tol)?.subspace, self.q.frame())?,
            None => Subspace::zero(t.k()),
        };
        projection_distance(&lhs, &rhs)
    }

    /// Distance between `P^{(1-Q)}((1-Q)T : X)` embedded in `C^k` and
    /// `(P(T : X) ∨ Q) ∧ (1 - Q)`.
    pub fn outer_identity(&self, t: &CommutingTuple, x: &Region, tol: &Tolerance) -> Result<f64> {
        let p = hs_joint(t, x, tol)?.subspace;
        let rhs = meet(&join(&p, &self.q, tol)?, &self.complement, tol)?;
        let lhs = match &self.outer {
            Some(outer) => embed(&hs_joint(outer, x, tol)?.subspace, self.complement.frame())?,
            None => Subspace::zero(t.k()),
        };
        projection_distance(&lhs, &rhs)
    }
}

/// Two independently computed subspaces and their projection distance.
#[derive(Debug, Clone)]
pub struct SubspacePair {
    pub lhs: Subspace,
    pub rhs: Subspace,
    pub distance: f64,
}

/// `P(T* : E)` against the orthocomplement of `P(T : C^n \ E*)`.
pub fn adjoint_dual(t: &CommutingTuple, e: &Region, tol: &Tolerance) -> Result<SubspacePair> {
    let lhs = hs_joint(&t.adjoint(), e, tol)?.subspace;
    let other = hs_joint(t, &e.conjugate().complement(), tol)?.subspace;
    let rhs = other.complement(tol);
    let distance = projection_distance(&lhs, &rhs)?;
    Ok(SubspacePair { lhs, rhs, distance })
}

/// Similarity transport check together with the condition number of `S`.
#[derive(Debug, Clone)]
pub struct TransportCheck {
    pub pair: SubspacePair,
    pub condition: f64,
}

/// `P(S T S^{-1} : X)` against the range projection of `S P(T : X)`.
pub fn similarity_transport(s: &CMatrix, t: &CommutingTuple, x: &Region, tol: &Tolerance) -> Result<TransportCheck> {
    let k = check_square(s)?;
    if k != t.k() {
        return Err(Error::DimensionMismatch { expected: t.k(), found: k });
    }
    let condition = numcore::condition_number(s);
    let moved = t.similar(s, tol, tol.rel_eps)?;
    let lhs = hs_joint(&moved, x, tol)?.subspace;
    let p = hs_joint(t, x, tol)?.subspace;
    let rhs = numcore::range_projection(&(s * p.projector()), tol)?;
    let distance = projection_distance(&lhs, &rhs)?;
    Ok(TransportCheck { pair: SubspacePair { lhs, rhs, distance }, condition })
}

/// Smallest coordinate-wise separation `min_{a != b} max_j |a_j - b_j|`.
pub fn atom_separation(atoms: &[Vec<C64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..atoms.len() {
        for j in (i + 1)..atoms.len() {
            let d = atoms[i].iter().zip(&atoms[j]).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            best = best.min(d);
        }
    }
    best
}

/// Union of polydisks around the selected atoms, each of radius half the
/// atom separation, so that no other atom is near a boundary.
pub fn atom_region(atoms: &[Vec<C64>], selected: &[usize]) -> Region {
    let sep = atom_separation(atoms);
    let radius = if sep.is_finite() {
        sep / 2.0
    } else {
        1.0 + atoms.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    };
    Region::Union(selected.iter().map(|&i| Region::polydisk(&atoms[i], radius)).collect())
}

/// Smallest distance from the points to the boundary of a plane region.
fn plane_margin(r: &PlaneRegion, values: &[C64]) -> f64 {
    values.iter().map(|&z| r.signed_distance(z).abs()).fold(f64::INFINITY, f64::min)
}

/// Random plane region whose boundary stays at least `margin` away from
/// every value in `values`.
pub fn random_plane_region(rng: &mut SeededRng, values: &[C64], margin: f64) -> PlaneRegion {
    let scale = 1.0 + values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for _ in 0..200 {
        let kind = random::int_in(rng, 0, 2);
        let r = match kind {
            0 => {
                let anchor = values[random::int_in(rng, 0, values.len() - 1)];
                let center = anchor + random::complex_normal(rng) * 0.3;
                PlaneRegion::Disk { center, radius: random::uniform(rng, 0.1, 1.2) * scale * 0.5 }
            }
            1 => {
                let normal = random::complex_normal(rng);
                let offset = random::uniform(rng, -0.8, 0.8) * scale * normal.norm();
                PlaneRegion::HalfPlane { normal, offset }
            }
            _ => {
                let a = values[random::int_in(rng, 0, values.len() - 1)];
                let b = values[random::int_in(rng, 0, values.len() - 1)];
                PlaneRegion::Union(vec![
                    PlaneRegion::Disk { center: a, radius: random::uniform(rng, 0.1, 0.6) },
                    PlaneRegion::Disk { center: b, radius: random::uniform(rng, 0.1, 0.6) },
                ])
            }
        };
        if plane_margin(&r, values) >= margin {
            return r;
        }
    }
    PlaneRegion::Full
}

/// Random rectangle avoiding the given points by `margin` in each coordinate.
pub fn random_rectangle(rng: &mut SeededRng, points: &[Vec<C64>], margin: f64) -> Region {
    let n = points[0].len();
    Region::Rectangle(
        (0..n)
            .map(|j| {
                if random::int_in(rng, 0, 3) == 0 {
                    PlaneRegion::Full
                } else {
                    let vals: Vec<C64> = points.iter().map(|p| p[j]).collect();
                    random_plane_region(rng, &vals, margin)
                }
            })
            .collect(),
    )
}

/// Random finite union of rectangles avoiding the given points by `margin`.
pub fn random_rectangle_union(rng: &mut SeededRng, points: &[Vec<C64>], margin: f64) -> Region {
    let count = random::int_in(rng, 1, 3);
    Region::Union((0..count).map(|_| random_rectangle(rng, points, margin)).collect())
}

/// Largest invariant check: whether `q` lies below `P(T : X)`.
pub fn dominated_by_projection(t: &CommutingTuple, q: &Subspace, x: &Region, tol: &Tolerance) -> Result<bool> {
    let p = hs_joint(t, x, tol)?.subspace;
    let m = meet(q, &p, tol)?;
    Ok(projection_distance(&m, q)? <= 1e-7)
}

/// Distance of each atom to the nearest other atom, for diagnostics.
pub fn nearest_atom_distance(atoms: &[Vec<C64>]) -> Vec<f64> {
    atoms
        .iter()
        .enumerate()
        .map(|(i, a)| {
            atoms
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| point_distance(a, b))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{c, CVector};
    use crate::triangular::joint_measure;
    use crate::tuples::{certify_commuting, planted_tuple, random_commuting_tuple, Conjugation, PlantedSpec, TupleStyle};
    use proptest::prelude::*;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn m2(a: [[f64; 2]; 2]) -> CMatrix {
        CMatrix::from_fn(2, 2, |i, j| c(a[i][j], 0.0))
    }

    fn disk(re: f64, r: f64) -> PlaneRegion {
        PlaneRegion::Disk { center: c(re, 0.0), radius: r }
    }

    fn line(v: &[f64]) -> Subspace {
        let vec = CVector::from_iterator(v.len(), v.iter().map(|&x| c(x, 0.0)));
        Subspace::span_of(v.len(), &[vec], &tol()).unwrap()
    }

    #[test]
    fn single_examples() {
        let a = m2([[0.0, 0.0], [0.0, 5.0]]);
        let h = hs_single(&a, &disk(0.0, 1.0), &tol()).unwrap();
        assert_eq!(h.trace, Ratio::new(1, 2));
        assert!(projection_distance(&h.subspace, &line(&[1.0, 0.0])).unwrap() < 1e-14);

        let j = m2([[0.0, 1.0], [0.0, 0.0]]);
        let h = hs_single(&j, &disk(0.0, 1.0), &tol()).unwrap();
        assert_eq!(h.trace, Ratio::new(1, 1));
    }

    #[test]
    fn non_orthogonal_pair() {
        let a = m2([[0.0, 1.0], [0.0, 5.0]]);
        let five = hs_single(&a, &disk(5.0, 1.0), &tol()).unwrap().subspace;
        let zero = hs_single(&a, &disk(0.0, 1.0), &tol()).unwrap().subspace;
        // Oracle: eigenvector of eigenvalue 5 solved by hand, (1, 5).
        assert!(projection_distance(&five, &line(&[1.0, 5.0])).unwrap() < 1e-12);
        assert!(projection_distance(&zero, &line(&[1.0, 0.0])).unwrap() < 1e-12);
        assert_eq!(meet(&five, &zero, &tol()).unwrap().dim(), 0);
        assert_eq!(join(&five, &zero, &tol()).unwrap().dim(), 2);
    }

    #[test]
    fn boundary_eigenvalue_is_refused() {
        let a = m2([[1.0, 0.0], [0.0, 3.0]]);
        let e = hs_single(&a, &disk(0.0, 1.0), &tol());
        assert!(matches!(e, Err(Error::BoundaryAmbiguous { .. })));
    }

    #[test]
    fn joint_examples() {
        let d = |a: f64, b: f64| CMatrix::from_fn(2, 2, |i, j| if i == j { c(if i == 0 { a } else { b }, 0.0) } else { c(0.0, 0.0) });
        let t = certify_commuting(vec![d(1.0, 2.0), d(3.0, 4.0)], &tol()).unwrap();
        let x = Region::Rectangle(vec![disk(1.0, 0.5), disk(3.0, 0.5)]);
        let h = hs_joint(&t, &x, &tol()).unwrap();
        assert_eq!(h.trace, Ratio::new(1, 2));
        assert!(projection_distance(&h.subspace, &line(&[1.0, 0.0])).unwrap() < 1e-14);
        let full = hs_joint(&t, &Region::full(2), &tol()).unwrap();
        assert_eq!(full.trace, Ratio::new(1, 1));
    }

    #[test]
    fn predicate_cannot_build_projection() {
        let t = random_commuting_tuple(3, 1, 1, TupleStyle::PolyOfOne).unwrap();
        let pred = Region::Predicate(PredicateRegion { n: 1, label: "all".into(), test: Arc::new(|_| true) });
        assert!(matches!(hs_joint(&t, &pred, &tol()), Err(Error::Unsupported(_))));
    }

    #[test]
    fn complement_route_matches_lattice_route() {
        for seed in 0..10 {
            let t = random_commuting_tuple(6, 2, seed, TupleStyle::ConjugatedTriangular).unwrap();
            let nu = joint_measure(&t, &tol()).unwrap();
            let mut rng = random::rng(seed);
            let x = random_rectangle_union(&mut rng, nu.atoms(), 1e-3);
            let a = hs_joint(&t, &x, &tol()).unwrap();
            let b = hs_joint_sorted(&t, &x, &tol()).unwrap();
            assert!(projection_distance(&a.subspace, &b.subspace).unwrap() < 1e-7);
            let nx = hs_joint(&t, &x.clone().complement(), &tol()).unwrap();
            assert_eq!(a.subspace.dim() + nx.subspace.dim(), 6);
            assert_eq!(meet(&a.subspace, &nx.subspace, &tol()).unwrap().dim(), 0);
        }
    }

    #[test]
    fn compression_by_identity_is_the_tuple() {
        let t = random_commuting_tuple(4, 2, 3, TupleStyle::ConjugatedTriangular).unwrap();
        let comp = compress(&t, &Subspace::full(4), &tol()).unwrap();
        let inner = comp.inner.unwrap();
        assert!(comp.outer.is_none());
        for (a, b) in inner.matrices().iter().zip(t.matrices()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn compression_to_half_the_atoms_is_renormalized_restriction() {
        let spec = PlantedSpec { conjugation: Conjugation::Invertible { cond_cap: 10.0 }, ..PlantedSpec::new(4, 2) };
        let p = planted_tuple(&spec, 8).unwrap();
        let nu = joint_measure(&p.tuple, &tol()).unwrap();
        let x = atom_region(nu.atoms(), &[0, 1]);
        let q = hs_joint(&p.tuple, &x, &tol()).unwrap();
        let comp = compress(&p.tuple, &q.subspace, &tol()).unwrap();
        let inner = joint_measure(comp.inner.as_ref().unwrap(), &tol()).unwrap();
        let restricted: Vec<(Vec<C64>, usize)> =
            nu.atoms()[..2].iter().cloned().zip(nu.counts()[..2].iter().copied()).collect();
        let total = restricted.iter().map(|r| r.1).sum();
        let oracle = JointSpectralMeasure::from_counts(2, restricted, total).unwrap();
        assert!(inner.distance(&oracle) < 1e-8);
        let split = comp.measure_split(&p.tuple, &tol()).unwrap();
        assert!(split.weights_equal);
        assert!(comp.inner_identity(&p.tuple, &atom_region(nu.atoms(), &[1, 2]), &tol()).unwrap() < 1e-7);
        assert!(comp.outer_identity(&p.tuple, &atom_region(nu.atoms(), &[1, 2]), &tol()).unwrap() < 1e-7);
    }

    #[test]
    fn middle_corner_is_restriction_to_difference() {
        let spec = PlantedSpec { conjugation: Conjugation::Invertible { cond_cap: 10.0 }, ..PlantedSpec::new(5, 2) };
        let p = planted_tuple(&spec, 4).unwrap();
        let nu = joint_measure(&p.tuple, &tol()).unwrap();
        let x1 = atom_region(nu.atoms(), &[0]);
        let x2 = atom_region(nu.atoms(), &[0, 2, 3]);
        let p1 = hs_joint(&p.tuple, &x1, &tol()).unwrap().subspace;
        let p2 = hs_joint(&p.tuple, &x2, &tol()).unwrap().subspace;
        let corner = meet(&p2, &p1.complement(&tol()), &tol()).unwrap();
        let ct = compress_corner(&p.tuple, &corner, &tol()).unwrap();
        let got = joint_measure(&ct, &tol()).unwrap();
        let pts: Vec<(Vec<C64>, usize)> = [2, 3].iter().map(|&i| (nu.atoms()[i].clone(), nu.counts()[i])).collect();
        let total = pts.iter().map(|r| r.1).sum();
        let oracle = JointSpectralMeasure::from_counts(2, pts, total).unwrap();
        assert!(got.distance(&oracle) < 1e-8);
    }

    #[test]
    fn non_invariant_subspace_rejected() {
        let t = certify_commuting(vec![m2([[0.0, 1.0], [0.0, 5.0]])], &tol()).unwrap();
        assert!(matches!(compress(&t, &line(&[0.0, 1.0]), &tol()), Err(Error::NotInvariant { .. })));
    }

    #[test]
    fn adjoint_examples() {
        let t = certify_commuting(vec![m2([[0.0, 1.0], [0.0, 5.0]])], &tol()).unwrap();
        let e = Region::Rectangle(vec![disk(0.0, 1.0)]);
        let pair = adjoint_dual(&t, &e, &tol()).unwrap();
        // Oracle: the kernel of A* is spanned by (5, -1).
        assert!(projection_distance(&pair.lhs, &line(&[5.0, -1.0])).unwrap() < 1e-10);
        assert!(pair.distance < 1e-10);

        let mut rng = random::rng(2);
        let u = random::unitary(&mut rng, 4);
        let d = CMatrix::from_fn(4, 4, |i, j| if i == j { c(i as f64, 0.5 * i as f64) } else { c(0.0, 0.0) });
        let normal = certify_commuting(vec![&u * d * u.adjoint()], &tol()).unwrap();
        let pair = adjoint_dual(&normal, &Region::Rectangle(vec![disk(1.0, 0.9)]), &tol()).unwrap();
        assert!(pair.distance < 1e-10);
    }

    #[test]
    fn similarity_examples() {
        let t = certify_commuting(vec![m2([[0.0, 1.0], [0.0, 5.0]])], &tol()).unwrap();
        let x = Region::Rectangle(vec![disk(5.0, 1.0)]);
        let s = m2([[1.0, 0.0], [0.0, 10.0]]);
        assert!(similarity_transport(&s, &t, &x, &tol()).unwrap().pair.distance <= 1e-8);
        let mut rng = random::rng(9);
        let u = random::unitary(&mut rng, 2);
        assert!(similarity_transport(&u, &t, &x, &tol()).unwrap().pair.distance <= 1e-12);
    }

    #[test]
    fn projections_are_hyperinvariant() {
        let mut rng = random::rng(21);
        let m = 3;
        let x = random::invertible(&mut rng, 2 * m, 20.0);
        let xinv = numcore::inverse(&x, &tol()).unwrap();
        let diag = |vals: &[C64]| CMatrix::from_fn(2 * m, 2 * m, |i, j| if i == j { vals[i / 2] } else { c(0.0, 0.0) });
        let d1: Vec<C64> = (0..m).map(|i| c(i as f64, 0.0)).collect();
        let d2: Vec<C64> = (0..m).map(|i| c(0.0, (i % 2) as f64)).collect();
        let t = certify_commuting(vec![&x * diag(&d1) * &xinv, &x * diag(&d2) * &xinv], &tol()).unwrap();
        let mut blocks = CMatrix::zeros(2 * m, 2 * m);
        for b in 0..m {
            blocks.view_mut((2 * b, 2 * b), (2, 2)).copy_from(&random::gaussian(&mut rng, 2, 2));
        }
        let comm = &x * blocks * &xinv;
        let nu = joint_measure(&t, &tol()).unwrap();
        for sel in [vec![0], vec![1, 2], vec![0, 2]] {
            let p = hs_joint(&t, &atom_region(nu.atoms(), &sel), &tol()).unwrap().subspace;
            assert!(p.invariance_residual(&comm).unwrap() <= 1e-7 * op_norm(&comm));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn disjoint_rectangles(seed in any::<u64>()) {
            let t = random_commuting_tuple(6, 2, seed, TupleStyle::ConjugatedTriangular).unwrap();
            let nu = joint_measure(&t, &tol()).unwrap();
            let k = nu.atoms().len();
            let x1 = atom_region(nu.atoms(), &(0..k / 2).collect::<Vec<_>>());
            let x2 = atom_region(nu.atoms(), &(k / 2..k).collect::<Vec<_>>());
            let p1 = hs_joint(&t, &x1, &tol()).unwrap().subspace;
            let p2 = hs_joint(&t, &x2, &tol()).unwrap().subspace;
            prop_assert_eq!(meet(&p1, &p2, &tol()).unwrap().dim(), 0);
            let both = hs_joint(&t, &Region::Union(vec![x1, x2]), &tol()).unwrap().subspace;
            prop_assert!(projection_distance(&both, &join(&p1, &p2, &tol()).unwrap()).unwrap() <= 1e-7);
        }

        #[test]
        fn trace_is_measure_and_invariant(seed in any::<u64>()) {
            let t = random_commuting_tuple(7, 2, seed, TupleStyle::ConjugatedTriangular).unwrap();
            let nu = joint_measure(&t, &tol()).unwrap();
            let mut rng = random::rng(seed);
            let x = random_rectangle_union(&mut rng, nu.atoms(), 1e-3);
            let h = hs_joint(&t, &x, &tol()).unwrap();
            prop_assert_eq!(h.trace, nu.mass_where(|a| x.contains(a)));
            prop_assert!(invariance_residual(&t, &h.subspace).unwrap() <= 1e-8);
        }

        #[test]
        fn monotone_in_region(seed in any::<u64>()) {
            let t = random_commuting_tuple(6, 2, seed, TupleStyle::ConjugatedTriangular).unwrap();
            let nu = joint_measure(&t, &tol()).unwrap();
            let k = nu.atoms().len();
            let small = atom_region(nu.atoms(), &[0]);
            let big = atom_region(nu.atoms(), &(0..k.min(3)).collect::<Vec<_>>());
            let p1 = hs_joint(&t, &small, &tol()).unwrap().subspace;
            let p2 = hs_joint(&t, &big, &tol()).unwrap().subspace;
            prop_assert!(p2.contains(&p1, &tol()).unwrap());
        }

        #[test]
        fn adjoint_duality_random(seed in any::<u64>()) {
            let t = random_commuting_tuple(5, 2, seed, TupleStyle::ConjugatedTriangular).unwrap();
            let nu = joint_measure(&t.adjoint(), &tol()).unwrap();
            let mut rng = random::rng(seed);
            let e = random_rectangle_union(&mut rng, nu.atoms(), 1e-3);
            prop_assert!(adjoint_dual(&t, &e, &tol()).unwrap().distance <= 1e-8);
        }
    }
}
