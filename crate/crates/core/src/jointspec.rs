//! Joint spectra of commuting tuples.
//!
//! Left and right Harte membership is read from the smallest eigenvalue of
//! `Σ (T_i - λ_i)*(T_i - λ_i)` and its right-hand twin. Taylor membership is
//! read from the self-adjoint Koszul operator `α_{T-w} = δ + δ*` acting on
//! `Λ[s] ⊗ C^k`, where `δ = Σ L(s_j) ⊗ (T_j - w_j)` and `L(s_j)` wedges by
//! `s_j` on the left.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numcore::{c, hermitian_eigen, op_norm, singular_values, CMatrix, Tolerance, C64};
use crate::tuples::CommutingTuple;

/// Largest supported number of exterior generators.
pub const MAX_GENERATORS: usize = 6;

/// Exterior algebra on `n` generators with its left wedge operators.
///
/// Basis element `m` is the wedge of the generators whose bits are set in
/// `m`, taken in increasing order; `m = 0` is the vacuum `Ω`.
#[derive(Debug, Clone)]
pub struct ExteriorAlgebra {
    n: usize,
    wedges: Vec<CMatrix>,
}

/// Sign and target of `s_j ∧ e_m`, or `None` when `j` is already in `m`.
pub fn wedge_basis(j: usize, m: usize) -> Option<(f64, usize)> {
    if m & (1 << j) != 0 {
        return None;
    }
    let below = (m & ((1 << j) - 1)).count_ones();
    Some((if below % 2 == 0 { 1.0 } else { -1.0 }, m | (1 << j)))
}

impl ExteriorAlgebra {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_GENERATORS {
            return Err(Error::InvalidArgument(format!("exterior algebra needs 1..={MAX_GENERATORS} generators, got {n}")));
        }
        let dim = 1 << n;
        let wedges = (0..n)
            .map(|j| {
                let mut l = CMatrix::zeros(dim, dim);
                for m in 0..dim {
                    if let Some((sign, target)) = wedge_basis(j, m) {
                        l[(target, m)] = c(sign, 0.0);
                    }
                }
                l
            })
            .collect();
        Ok(ExteriorAlgebra { n, wedges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    /// `L(s_j)` for a 0-based generator index.
    pub fn wedge(&self, j: usize) -> &CMatrix {
        &self.wedges[j]
    }

    pub fn wedges(&self) -> &[CMatrix] {
        &self.wedges
    }

    /// Degree of each basis element.
    pub fn grades(&self) -> Vec<u32> {
        (0..self.dim()).map(|m| (m as u32).count_ones()).collect()
    }
}

fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// `Σ_j L(s_j) ⊗ M_j` on `Λ[s] ⊗ C^k`.
pub fn koszul_delta(ext: &ExteriorAlgebra, mats: &[CMatrix]) -> Result<CMatrix> {
    if mats.len() != ext.n() {
        return Err(Error::DimensionMismatch { expected: ext.n(), found: mats.len() });
    }
    let k = mats[0].nrows();
    let mut d = CMatrix::zeros(ext.dim() * k, ext.dim() * k);
    for (l, m) in ext.wedges().iter().zip(mats) {
        d += kron(l, m);
    }
    Ok(d)
}

/// Koszul operator `α_{T-w}` with its smallest singular value.
#[derive(Debug, Clone)]
pub struct KoszulOperator {
    pub n: usize,
    pub k: usize,
    pub matrix: CMatrix,
    pub sigma_min: f64,
}

/// Self-adjoint `δ + δ*` for the matrices given.
pub fn alpha_matrix(ext: &ExteriorAlgebra, mats: &[CMatrix]) -> Result<CMatrix> {
    let d = koszul_delta(ext, mats)?;
    let a = &d + d.adjoint();
    Ok(a)
}

/// Smallest absolute eigenvalue of a Hermitian matrix.
pub fn hermitian_sigma_min(a: &CMatrix) -> Result<f64> {
    let (vals, _) = hermitian_eigen(a)?;
    Ok(vals.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min))
}

fn check_point(t: &CommutingTuple, w: &[C64]) -> Result<()> {
    if w.len() != t.n() {
        return Err(Error::DimensionMismatch { expected: t.n(), found: w.len() });
    }
    if w.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::NonFinite("point"));
    }
    Ok(())
}

/// `α_{T-w}`.
pub fn alpha(t: &CommutingTuple, w: &[C64]) -> Result<KoszulOperator> {
    check_point(t, w)?;
    let ext = ExteriorAlgebra::new(t.n())?;
    alpha_with(&ext, t, w)
}

fn alpha_with(ext: &ExteriorAlgebra, t: &CommutingTuple, w: &[C64]) -> Result<KoszulOperator> {
    let matrix = alpha_matrix(ext, &t.shifted(w)?)?;
    let sigma_min = hermitian_sigma_min(&matrix)?;
    Ok(KoszulOperator { n: t.n(), k: t.k(), matrix, sigma_min })
}

/// Membership threshold for the Taylor criterion.
pub fn alpha_threshold(t: &CommutingTuple, tol: &Tolerance) -> f64 {
    tol.abs_eps + tol.rel_eps * (1.0 + t.norms().iter().sum::<f64>())
}

/// Membership threshold for the Harte criterion, on the quadratic scale.
pub fn harte_threshold(t: &CommutingTuple, tol: &Tolerance) -> f64 {
    tol.abs_eps + tol.rel_eps * (1.0 + t.norms().iter().map(|s| s * s).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

/// Harte membership verdict with the smallest eigenvalue of the positive element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Membership {
    pub member: bool,
    pub margin: f64,
}

/// Smallest eigenvalue of `Σ (T_i-λ_i)*(T_i-λ_i)` (left) or
/// `Σ (T_i-λ_i)(T_i-λ_i)*` (right), clamped at zero.
pub fn harte_margin(t: &CommutingTuple, lambda: &[C64], side: Side) -> Result<f64> {
    check_point(t, lambda)?;
    let k = t.k();
    let mut p = CMatrix::zeros(k, k);
    for m in t.shifted(lambda)? {
        p += match side {
            Side::Left => m.adjoint() * &m,
            Side::Right => &m * m.adjoint(),
        };
    }
    let (vals, _) = hermitian_eigen(&p)?;
    Ok(vals.first().copied().unwrap_or(0.0).max(0.0))
}

pub fn harte_member(t: &CommutingTuple, lambda: &[C64], side: Side, tol: &Tolerance) -> Result<Membership> {
    let margin = harte_margin(t, lambda, side)?;
    Ok(Membership { member: margin <= harte_threshold(t, tol), margin })
}

pub fn taylor_member(t: &CommutingTuple, w: &[C64], tol: &Tolerance) -> Result<Membership> {
    let margin = alpha(t, w)?.sigma_min;
    Ok(Membership { member: margin <= alpha_threshold(t, tol), margin })
}

/// Solvability of `Σ T_i B_i = 1` and `Σ S_i T_i = 1`.
#[derive(Debug, Clone)]
pub struct KoszulEndReport {
    /// Smallest singular value of the row `[T_1 ... T_n]`.
    pub row_sigma_min: f64,
    pub surjective: bool,
    pub b: Option<Vec<CMatrix>>,
    pub b_residual: Option<f64>,
    /// Smallest singular value of the column `[T_1; ...; T_n]`.
    pub column_sigma_min: f64,
    pub bounded_below: bool,
    pub s: Option<Vec<CMatrix>>,
    pub s_residual: Option<f64>,
}

/// Checks the two ends of the Koszul complex, with least-squares witnesses.
pub fn koszul_end_checks(t: &CommutingTuple, tol: &Tolerance) -> Result<KoszulEndReport> {
    let (k, n) = (t.k(), t.n());
    let mut row = CMatrix::zeros(k, n * k);
    for (j, m) in t.matrices().iter().enumerate() {
        row.view_mut((0, j * k), (k, k)).copy_from(m);
    }
    let col = row.adjoint();
    let row_sv = singular_values(&row);
    let row_sigma_min = row_sv.get(k - 1).copied().unwrap_or(0.0);
    let cutoff = tol.threshold(op_norm(&row));
    let eye = CMatrix::identity(k, k);

    let surjective = row_sigma_min > cutoff;
    let (b, b_residual) = if surjective {
        let gram = crate::numcore::inverse(&(&row * &col), tol)?;
        let bs = &col * gram;
        let blocks: Vec<CMatrix> = (0..n).map(|j| bs.rows(j * k, k).into_owned()).collect();
        let sum = t.matrices().iter().zip(&blocks).fold(CMatrix::zeros(k, k), |acc, (m, bj)| acc + m * bj);
        (Some(blocks), Some((sum - &eye).norm()))
    } else {
        (None, None)
    };

    let stacked = CMatrix::from_fn(n * k, k, |i, j| t.matrix(i / k)[(i % k, j)]);
    let col_sv = singular_values(&stacked);
    let column_sigma_min = col_sv.get(k - 1).copied().unwrap_or(0.0);
    let bounded_below = column_sigma_min > cutoff;
    let (s, s_residual) = if bounded_below {
        let gram = crate::numcore::inverse(&(stacked.adjoint() * &stacked), tol)?;
        let ss = gram * stacked.adjoint();
        let blocks: Vec<CMatrix> = (0..n).map(|j| ss.columns(j * k, k).into_owned()).collect();
        let sum = t.matrices().iter().zip(&blocks).fold(CMatrix::zeros(k, k), |acc, (m, sj)| acc + sj * m);
        (Some(blocks), Some((sum - &eye).norm()))
    } else {
        (None, None)
    };
    Ok(KoszulEndReport { row_sigma_min, surjective, b, b_residual, column_sigma_min, bounded_below, s, s_residual })
}

/// Points at which spectra are sampled.
#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    /// `steps × steps` points in each coordinate rectangle, product over coordinates.
    Box { lower: Vec<C64>, upper: Vec<C64>, steps: usize },
    Points(Vec<Vec<C64>>),
}

impl GridSpec {
    /// Box covering the polydisk of operator norms with a 10% margin.
    pub fn around(t: &CommutingTuple, steps: usize) -> GridSpec {
        let r: Vec<f64> = t.norms().iter().map(|s| 1.1 * s.max(1e-3)).collect();
        GridSpec::Box {
            lower: r.iter().map(|&x| c(-x, -x)).collect(),
            upper: r.iter().map(|&x| c(x, x)).collect(),
            steps,
        }
    }

    pub fn points(&self) -> Result<Vec<Vec<C64>>> {
        match self {
            GridSpec::Points(p) => Ok(p.clone()),
            GridSpec::Box { lower, upper, steps } => {
                if lower.len() != upper.len() {
                    return Err(Error::DimensionMismatch { expected: lower.len(), found: upper.len() });
                }
                if *steps == 0 {
                    return Err(Error::InvalidArgument("grid needs at least one step".into()));
                }
                let axis = |lo: f64, hi: f64| -> Vec<f64> {
                    if *steps == 1 {
                        vec![(lo + hi) / 2.0]
                    } else {
                        (0..*steps).map(|i| lo + (hi - lo) * i as f64 / (*steps - 1) as f64).collect()
                    }
                };
                let per: Vec<Vec<C64>> = lower
                    .iter()
                    .zip(upper)
                    .map(|(lo, hi)| {
                        let re = axis(lo.re, hi.re);
                        let im = axis(lo.im, hi.im);
                        im.iter().flat_map(|&y| re.iter().map(move |&x| c(x, y))).collect()
                    })
                    .collect();
                let mut out: Vec<Vec<C64>> = vec![vec![]];
                for coord in &per {
                    out = out.iter().flat_map(|p| coord.iter().map(move |&z| [p.clone(), vec![z]].concat())).collect();
                }
                Ok(out)
            }
        }
    }
}

/// Both margins at every grid point, in grid order.
#[derive(Debug, Clone)]
pub struct SpectrumScan {
    pub points: Vec<Vec<C64>>,
    pub harte_margins: Vec<f64>,
    pub alpha_margins: Vec<f64>,
    pub harte_threshold: f64,
    pub alpha_threshold: f64,
}

/// Evaluates left Harte and Taylor margins over a grid.
pub fn scan(t: &CommutingTuple, grid: &GridSpec, tol: &Tolerance) -> Result<SpectrumScan> {
    let points = grid.points()?;
    let ext = ExteriorAlgebra::new(t.n())?;
    let rows = points
        .par_iter()
        .map(|w| {
            check_point(t, w)?;
            Ok((harte_margin(t, w, Side::Left)?, alpha_with(&ext, t, w)?.sigma_min))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let (harte_margins, alpha_margins) = rows.into_iter().unzip();
    Ok(SpectrumScan {
        points,
        harte_margins,
        alpha_margins,
        harte_threshold: harte_threshold(t, tol),
        alpha_threshold: alpha_threshold(t, tol),
    })
}

/// `‖α_{z-w}‖` for the scalar tuple `z - w`; bounded by `‖z - w‖_1`.
pub fn scalar_alpha_norm(z: &[C64], w: &[C64]) -> Result<f64> {
    if z.len() != w.len() {
        return Err(Error::DimensionMismatch { expected: z.len(), found: w.len() });
    }
    let ext = ExteriorAlgebra::new(z.len())?;
    let mats: Vec<CMatrix> = z.iter().zip(w).map(|(a, b)| CMatrix::from_element(1, 1, a - b)).collect();
    Ok(op_norm(&alpha_matrix(&ext, &mats)?))
}
