//! The `verify-all` table: every identity of the toolkit checked on one tuple.
//!
//! Random regions, polynomials and similarities are drawn from the run seed,
//! so the table is a pure function of the input file and the configuration.

use serde_json::{json, Value};
use specflag_core::holocalc::{
    apply_map, apply_series, vasilescu_integrals, verify_pushforward, HoloFunction, HoloMap, PowerSeries,
    QuadratureSpec,
};
use specflag_core::hsproj::{
    adjoint_dual, boundary_band, compress, dominated_by_projection, hs_joint, random_rectangle_union,
    reorder_flag, similarity_transport, Region,
};
use specflag_core::jointspec::{alpha, alpha_threshold, harte_margin, harte_threshold, Side};
use specflag_core::numcore::random::{self, SeededRng};
use specflag_core::numcore::{c, join, meet, op_norm, projection_distance, strict_lower_norm, Subspace, C64};
use specflag_core::ordering::{assign_params, build_flag, curve_for, verify_simultut};
use specflag_core::triangular::{joint_eigenvalues, joint_measure, simultaneous_schur};
use specflag_core::tuples::{eval_poly, CommPolynomial};
use specflag_core::{CMatrix, CommutingTuple, Error};

use crate::io::{exit, render, CliResult};
use crate::tasks::{Artifact, Outcome, RunConfig};

/// Random regions drawn per family of checks.
pub const REGIONS_PER_CHECK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl Status {
    fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Skip => "skip",
        }
    }
}

/// One line of the table: the worst value observed against its limit.
#[derive(Debug, Clone)]
pub struct Row {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
    pub status: Status,
    pub note: String,
}

impl Row {
    fn bound(name: &'static str, value: f64, limit: f64) -> Row {
        let status = if value <= limit { Status::Pass } else { Status::Fail };
        Row { name, value, limit, status, note: String::new() }
    }

    fn flag(name: &'static str, ok: bool, note: impl Into<String>) -> Row {
        let status = if ok { Status::Pass } else { Status::Fail };
        Row { name, value: if ok { 0.0 } else { 1.0 }, limit: 0.0, status, note: note.into() }
    }

    fn skip(name: &'static str, note: impl Into<String>) -> Row {
        Row { name, value: 0.0, limit: 0.0, status: Status::Skip, note: note.into() }
    }

    fn failed(name: &'static str, e: &Error) -> Row {
        Row { name, value: f64::INFINITY, limit: 0.0, status: Status::Fail, note: e.to_string() }
    }

    fn with_note(mut self, note: impl Into<String>) -> Row {
        self.note = note.into();
        self
    }

    pub fn json(&self) -> Value {
        json!({
            "name": self.name,
            "status": self.status.as_str(),
            "value": if self.value.is_finite() { json!(self.value) } else { json!(null) },
            "limit": self.limit,
            "note": self.note,
        })
    }
}

struct Context<'a> {
    t: &'a CommutingTuple,
    cfg: &'a RunConfig,
    atoms: Vec<Vec<C64>>,
    margin: f64,
}

impl Context<'_> {
    fn regions(&self, rng: &mut SeededRng) -> Vec<Region> {
        (0..REGIONS_PER_CHECK).map(|_| random_rectangle_union(rng, &self.atoms, self.margin)).collect()
    }

    fn projection(&self, x: &Region) -> specflag_core::Result<Subspace> {
        Ok(hs_joint(self.t, x, &self.cfg.tol)?.subspace)
    }
}

fn worst<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

/// Turns an error inside a check into a failing row.
fn guard(name: &'static str, f: impl FnOnce() -> specflag_core::Result<Row>) -> Row {
    f().unwrap_or_else(|e| Row::failed(name, &e))
}

fn intersection(x: &Region, y: &Region) -> Region {
    Region::Union(vec![x.clone().complement(), y.clone().complement()]).complement()
}

fn triangularization(cx: &Context) -> Vec<Row> {
    vec![guard("simultaneous_triangularization", || {
        let flag = simultaneous_schur(cx.t, &cx.cfg.tol)?;
        let value = worst(
            flag.triangulars.iter().zip(cx.t.matrices()).map(|(b, a)| strict_lower_norm(b) / op_norm(a).max(f64::MIN_POSITIVE)),
        );
        Ok(Row::bound("simultaneous_triangularization", value, 1e-8))
    })]
}

fn trace_and_lattice(cx: &Context, rng: &mut SeededRng) -> Vec<Row> {
    let xs = cx.regions(rng);
    let ys = cx.regions(rng);
    let nu = joint_measure(cx.t, &cx.cfg.tol);
    let trace = guard("trace_equals_measure", || {
        let nu = nu.clone()?;
        let mismatches = xs
            .iter()
            .map(|x| Ok(hs_joint(cx.t, x, &cx.cfg.tol)?.trace != nu.mass_where(|a| x.contains(a))))
            .collect::<specflag_core::Result<Vec<bool>>>()?;
        let bad = mismatches.iter().filter(|&&m| m).count();
        Ok(Row::flag("trace_equals_measure", bad == 0, format!("{bad} of {} regions differ", xs.len())))
    });
    let tol = &cx.cfg.tol;
    let join_row = guard("lattice_union_is_join", || {
        let mut d = Vec::new();
        for (x, y) in xs.iter().zip(&ys) {
            let lhs = cx.projection(&Region::Union(vec![x.clone(), y.clone()]))?;
            let rhs = join(&cx.projection(x)?, &cx.projection(y)?, tol)?;
            d.push(projection_distance(&lhs, &rhs)?);
        }
        Ok(Row::bound("lattice_union_is_join", worst(d), 1e-7))
    });
    let meet_row = guard("lattice_intersection_is_meet", || {
        let mut d = Vec::new();
        for (x, y) in xs.iter().zip(&ys) {
            let lhs = cx.projection(&intersection(x, y))?;
            let rhs = meet(&cx.projection(x)?, &cx.projection(y)?, tol)?;
            d.push(projection_distance(&lhs, &rhs)?);
        }
        Ok(Row::bound("lattice_intersection_is_meet", worst(d), 1e-7))
    });
    let disjoint_row = guard("complement_is_disjoint_and_spanning", || {
        let mut d = Vec::new();
        for x in &xs {
            let p = cx.projection(x)?;
            let q = cx.projection(&x.clone().complement())?;
            d.push(meet(&p, &q, tol)?.dim() as f64);
            d.push(projection_distance(&join(&p, &q, tol)?, &Subspace::full(cx.t.k()))?);
        }
        Ok(Row::bound("complement_is_disjoint_and_spanning", worst(d), 1e-7))
    });
    vec![trace, join_row, meet_row, disjoint_row]
}

/// Invariant subspace spanned by the first `m` Schur vectors after moving
/// the eigenvalues inside `x` to the front, with `m` at most their number.
fn planted_subinvariant(cx: &Context, x: &Region, rng: &mut SeededRng) -> specflag_core::Result<Option<Subspace>> {
    let mut flag = simultaneous_schur(cx.t, &cx.cfg.tol)?;
    let inside: Vec<bool> = joint_eigenvalues(&flag).iter().map(|p| x.contains(p)).collect();
    let count = inside.iter().filter(|&&b| b).count();
    if count == 0 {
        return Ok(None);
    }
    let mut keys: Vec<usize> = inside.iter().map(|&b| usize::from(!b)).collect();
    reorder_flag(&mut flag, &mut keys);
    let m = random::int_in(rng, 1, count);
    let frame = flag.unitary.columns(0, m).into_owned();
    Ok(Some(Subspace::from_orthonormal(frame, &cx.cfg.tol)?))
}

fn compression(cx: &Context, rng: &mut SeededRng) -> Vec<Row> {
    let xs = cx.regions(rng);
    let ys = cx.regions(rng);
    let tol = &cx.cfg.tol;
    let split = guard("compression_measure_split", || {
        let mut bad = 0;
        for x in &xs {
            let c = compress(cx.t, &cx.projection(x)?, tol)?;
            if !c.measure_split(cx.t, tol)?.weights_equal {
                bad += 1;
            }
        }
        Ok(Row::flag("compression_measure_split", bad == 0, format!("{bad} of {} splits differ", xs.len())))
    });
    let identities = guard("compression_projection_identities", || {
        let mut d = Vec::new();
        for (x, y) in xs.iter().zip(&ys) {
            let c = compress(cx.t, &cx.projection(x)?, tol)?;
            d.push(c.inner_identity(cx.t, y, tol)?);
            d.push(c.outer_identity(cx.t, y, tol)?);
        }
        Ok(Row::bound("compression_projection_identities", worst(d), 1e-7))
    });
    let dominance = guard("largest_invariant_dominance", || {
        let mut checked = 0;
        let mut bad = 0;
        for x in &xs {
            if let Some(q) = planted_subinvariant(cx, x, rng)? {
                checked += 1;
                if !dominated_by_projection(cx.t, &q, x, tol)? {
                    bad += 1;
                }
            }
        }
        Ok(Row::flag("largest_invariant_dominance", bad == 0, format!("{bad} of {checked} planted subspaces escape")))
    });
    vec![split, identities, dominance]
}

fn duality(cx: &Context, rng: &mut SeededRng) -> Vec<Row> {
    let xs = cx.regions(rng);
    let tol = &cx.cfg.tol;
    let adjoint = guard("adjoint_duality", || {
        let conj: Vec<Vec<C64>> = cx.atoms.iter().map(|a| a.iter().map(|z| z.conj()).collect()).collect();
        let mut d = Vec::new();
        for _ in 0..REGIONS_PER_CHECK {
            let e = random_rectangle_union(rng, &conj, cx.margin);
            d.push(adjoint_dual(cx.t, &e, tol)?.distance);
        }
        Ok(Row::bound("adjoint_duality", worst(d), 1e-6))
    });
    let transport = guard("similarity_transport", || {
        let mut d = Vec::new();
        let mut cond: f64 = 0.0;
        for x in &xs {
            let s: CMatrix = random::invertible(rng, cx.t.k(), 1e3);
            let check = similarity_transport(&s, cx.t, x, tol)?;
            cond = cond.max(check.condition);
            d.push(check.pair.distance);
        }
        Ok(Row::bound("similarity_transport", worst(d), 1e-6).with_note(format!("largest cond(S) {cond:.3e}")))
    });
    vec![adjoint, transport]
}

fn spectra(cx: &Context) -> Vec<Row> {
    let tol = &cx.cfg.tol;
    let harte = guard("eigenvalues_in_harte_spectrum", || {
        let scale = harte_threshold(cx.t, tol) / tol.rel_eps;
        let m = cx.atoms.iter().map(|a| harte_margin(cx.t, a, Side::Left)).collect::<specflag_core::Result<Vec<_>>>()?;
        Ok(Row::bound("eigenvalues_in_harte_spectrum", worst(m) / scale, 1e-7))
    });
    let taylor = guard("eigenvalues_in_taylor_spectrum", || {
        if (1usize << cx.t.n()) * cx.t.k() > 256 {
            return Ok(Row::skip("eigenvalues_in_taylor_spectrum", "Koszul complex larger than 256"));
        }
        let scale = alpha_threshold(cx.t, tol) / tol.rel_eps;
        let m = cx.atoms.iter().map(|a| Ok(alpha(cx.t, a)?.sigma_min)).collect::<specflag_core::Result<Vec<_>>>()?;
        Ok(Row::bound("eigenvalues_in_taylor_spectrum", worst(m) / scale, 1e-7))
    });
    vec![harte, taylor]
}

fn flag_checks(cx: &Context, rng: &mut SeededRng) -> Vec<Row> {
    vec![guard("flag_diagonal_and_nilpotent_part", || {
        let tol = &cx.cfg.tol;
        let nu = joint_measure(cx.t, tol)?;
        let ordering = assign_params(&curve_for(cx.t, cx.cfg.depth)?, &nu, tol)?;
        let flag = build_flag(cx.t, &ordering, tol)?;
        let mut d = Vec::new();
        let mut nilpotent = true;
        for _ in 0..REGIONS_PER_CHECK {
            let p = CommPolynomial::random(rng, cx.t.n(), 3, false);
            let s = eval_poly(&p, cx.t)?;
            let report = verify_simultut(&s, &HoloFunction::Polynomial(p), cx.t, &flag, tol)?;
            d.push(report.eigen_distance.max(report.diagonal_distance));
            nilpotent &= report.nilpotency.nilpotent;
        }
        let row = Row::bound("flag_diagonal_and_nilpotent_part", worst(d), 1e-7);
        Ok(if nilpotent { row } else { Row { status: Status::Fail, note: "remainder not nilpotent".into(), ..row } })
    })]
}

fn calculus(cx: &Context) -> Vec<Row> {
    let n = cx.t.n();
    const NAMES: [&str; 4] = ["calculus_unit", "calculus_coordinates", "calculus_product", "calculus_exp_against_series"];
    if n > 2 {
        return NAMES.iter().map(|name| Row::skip(name, "boundary quadrature needs n <= 2")).collect();
    }
    let tol = &cx.cfg.tol;
    let (unit_limit, limit) = if n == 1 { (1e-10, 1e-8) } else { (1e-4, 1e-4) };
    let k = cx.t.k();
    let scale = 1.0 + cx.t.scale();
    let exp = HoloFunction::Series(PowerSeries::exp_linear(vec![c(1.0, 0.0); n]));
    let computed = (|| -> specflag_core::Result<(Vec<CMatrix>, Vec<CMatrix>)> {
        let product = CommPolynomial::from_terms(n, [(vec![1; n], c(1.0, 0.0))])?;
        let mut fs = vec![HoloFunction::Polynomial(CommPolynomial::constant(n, c(1.0, 0.0)))];
        for j in 0..n {
            fs.push(HoloFunction::Polynomial(CommPolynomial::coordinate(n, j)?));
        }
        fs.push(HoloFunction::Polynomial(product.clone()));
        fs.push(exp.clone());
        let quad = QuadratureSpec::around(cx.t, tol, cx.cfg.angular_for(n), cx.cfg.radial_for())?;
        let got = vasilescu_integrals(cx.t, &fs, &quad, tol)?;
        let mut want = vec![CMatrix::identity(k, k)];
        want.extend(cx.t.matrices().iter().cloned());
        want.push(eval_poly(&product, cx.t)?);
        want.push(apply_series(&exp, cx.t, tol)?);
        Ok((got, want))
    })();
    let (got, want) = match computed {
        Ok(v) => v,
        Err(e) => return NAMES.iter().map(|name| Row::failed(name, &e)).collect(),
    };
    let coords = worst((1..=n).map(|j| (&got[j] - &want[j]).norm() / scale));
    let rel = |i: usize| (&got[i] - &want[i]).norm() / (1.0 + want[i].norm());
    vec![
        Row::bound(NAMES[0], (&got[0] - &want[0]).norm(), unit_limit),
        Row::bound(NAMES[1], coords, limit),
        Row::bound(NAMES[2], rel(n + 1), limit),
        Row::bound(NAMES[3], rel(n + 2), limit),
    ]
}

fn pushforward(cx: &Context, rng: &mut SeededRng) -> Vec<Row> {
    let n = cx.t.n();
    let tol = &cx.cfg.tol;
    let sum = CommPolynomial::from_terms(n, (0..n).map(|j| {
        let mut e = vec![0; n];
        e[j] = 1;
        (e, c(1.0, 0.0))
    }));
    let product = CommPolynomial::from_terms(n, [(vec![1; n], c(1.0, 0.0))]);
    let maps = match (sum, product) {
        (Ok(s), Ok(p)) => vec![
            HoloMap(vec![HoloFunction::Polynomial(s), HoloFunction::Polynomial(p)]),
            HoloMap(vec![HoloFunction::Series(PowerSeries::exp_linear(vec![c(0.5, 0.0); n]))]),
        ],
        (Err(e), _) | (_, Err(e)) => return vec![Row::failed("pushforward_measure", &e)],
    };
    let mut atom_d = Vec::new();
    let mut proj_d = Vec::new();
    for h in &maps {
        let outcome = (|| -> specflag_core::Result<()> {
            let ht = apply_map(h, cx.t, tol)?;
            let image_atoms = joint_measure(&ht, tol)?.atoms().to_vec();
            let margin = cx.margin.max(1e3 * boundary_band(&ht, tol));
            let regions: Vec<Region> =
                (0..REGIONS_PER_CHECK).map(|_| random_rectangle_union(rng, &image_atoms, margin)).collect();
            let report = verify_pushforward(h, cx.t, &regions, tol)?;
            atom_d.push(report.atom_distance);
            proj_d.extend(report.projection_distances);
            Ok(())
        })();
        if let Err(e) = outcome {
            return vec![Row::failed("pushforward_measure", &e), Row::failed("pushforward_projection", &e)];
        }
    }
    vec![Row::bound("pushforward_measure", worst(atom_d), 1e-7), Row::bound("pushforward_projection", worst(proj_d), 1e-7)]
}

/// Runs every check in a fixed order.
pub fn rows(t: &CommutingTuple, cfg: &RunConfig) -> CliResult<Vec<Row>> {
    let tol = &cfg.tol;
    let atoms = joint_measure(t, tol)?.atoms().to_vec();
    let margin = (1e3 * boundary_band(t, tol)).max(1e-3);
    let cx = Context { t, cfg, atoms, margin };
    let mut rng = random::rng(cfg.seed);
    let mut out = triangularization(&cx);
    out.extend(trace_and_lattice(&cx, &mut rng));
    out.extend(compression(&cx, &mut rng));
    out.extend(duality(&cx, &mut rng));
    out.extend(spectra(&cx));
    out.extend(flag_checks(&cx, &mut rng));
    out.extend(calculus(&cx));
    out.extend(pushforward(&cx, &mut rng));
    Ok(out)
}

/// Plain-text table, one row per check.
pub fn table(rows: &[Row]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(4);
    let mut s = format!("{:<width$}  {:<6}  {:>12}  {:>12}  note\n", "check", "status", "value", "limit");
    for r in rows {
        let value = if r.value.is_finite() { format!("{:.3e}", r.value) } else { "-".into() };
        s.push_str(&format!("{:<width$}  {:<6}  {:>12}  {:>12.3e}  {}\n", r.name, r.status.as_str(), value, r.limit, r.note));
    }
    s
}

pub fn verify_all(t: &CommutingTuple, cfg: &RunConfig) -> CliResult<Outcome> {
    let rows = rows(t, cfg)?;
    let failed = rows.iter().filter(|r| r.status == Status::Fail).count();
    let doc = json!({
        "task": "verify-all",
        "k": t.k(),
        "n": t.n(),
        "seed": cfg.seed,
        "passed": failed == 0,
        "rows": rows.iter().map(Row::json).collect::<Vec<_>>(),
    });
    let text = table(&rows);
    Ok(Outcome {
        artifacts: vec![
            Artifact { name: "verify-all.json".into(), contents: render(&doc) },
            Artifact { name: "verify-all.txt".into(), contents: text.clone() },
        ],
        summary: format!("{text}{} of {} checks failed", failed, rows.len()),
        code: if failed == 0 { exit::SUCCESS } else { exit::NUMERICAL },
    })
}
