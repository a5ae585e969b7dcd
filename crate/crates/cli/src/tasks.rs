//! One runner per `run --task` value.

use clap::ValueEnum;
use serde_json::{json, Value};
use specflag_core::holocalc::{apply_series, vasilescu_integral, HoloFunction, PowerSeries, QuadratureSpec};
use specflag_core::hsproj::{atom_region, hs_joint, invariance_residual, Region};
use specflag_core::jointspec::{scan, GridSpec};
use specflag_core::numcore::{c, op_norm, strict_lower_norm, C64};
use specflag_core::ordering::{assign_params, build_flag, curve_for, triangularize_by_flag};
use specflag_core::triangular::{joint_eigenvalues, joint_measure, simultaneous_schur};
use specflag_core::tuples::CommPolynomial;
use specflag_core::{CommutingTuple, Tolerance};

use crate::io::{exit, matrix_json, point_json, ratio_json, ratio_value, render, subspace_json, CliError, CliResult};
use crate::regions::region_json;
use crate::svg::{self, HeatGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Triangularize,
    Measure,
    Project,
    Order,
    SpectrumScan,
    Calc,
    VerifyAll,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Triangularize => "triangularize",
            Task::Measure => "measure",
            Task::Project => "project",
            Task::Order => "order",
            Task::SpectrumScan => "spectrum-scan",
            Task::Calc => "calc",
            Task::VerifyAll => "verify-all",
        }
    }
}

/// Settings shared by all tasks.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub tol: Tolerance,
    pub seed: u64,
    /// Depth of the space-filling curve.
    pub depth: usize,
    /// Grid points per real axis in the spectrum scan.
    pub grid_steps: usize,
    /// Coordinate swept by the scan when `n > 1`.
    pub axis: usize,
    /// Angular nodes; defaults to 256 for one variable and 64 for two.
    pub angular: Option<usize>,
    /// Radial nodes for two variables; defaults to 16.
    pub radial: Option<usize>,
    /// Regions for `project`; empty means one polydisk per atom.
    pub regions: Vec<Region>,
    /// Function for `calc`.
    pub function: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tol: Tolerance::default(),
            seed: 7,
            depth: 6,
            grid_steps: 41,
            axis: 0,
            angular: None,
            radial: None,
            regions: Vec::new(),
            function: "exp".into(),
        }
    }
}

impl RunConfig {
    pub fn angular_for(&self, n: usize) -> usize {
        self.angular.unwrap_or(if n == 1 { 256 } else { 64 })
    }

    pub fn radial_for(&self) -> usize {
        self.radial.unwrap_or(16)
    }
}

/// A file written to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

/// Files to write, a short report for stdout, and the exit code.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub summary: String,
    pub code: u8,
}

fn json_outcome(task: Task, doc: Value, summary: String) -> Outcome {
    Outcome {
        artifacts: vec![Artifact { name: format!("{}.json", task.name()), contents: render(&doc) }],
        summary,
        code: exit::SUCCESS,
    }
}

pub fn run(task: Task, t: &CommutingTuple, cfg: &RunConfig) -> CliResult<Outcome> {
    match task {
        Task::Triangularize => triangularize(t, cfg),
        Task::Measure => measure(t, cfg),
        Task::Project => project(t, cfg),
        Task::Order => order(t, cfg),
        Task::SpectrumScan => spectrum_scan(t, cfg),
        Task::Calc => calc(t, cfg),
        Task::VerifyAll => crate::suite::verify_all(t, cfg),
    }
}

fn triangularize(t: &CommutingTuple, cfg: &RunConfig) -> CliResult<Outcome> {
    let flag = simultaneous_schur(t, &cfg.tol)?;
    let residuals: Vec<f64> = flag
        .triangulars
        .iter()
        .zip(t.matrices())
        .map(|(b, a)| strict_lower_norm(b) / op_norm(a).max(f64::MIN_POSITIVE))
        .collect();
    let diagonal: Vec<Value> = joint_eigenvalues(&flag).iter().map(|p| point_json(p)).collect();
    let doc = json!({
        "task": "triangularize",
        "k": t.k(),
        "n": t.n(),
        "unitary": matrix_json(&flag.unitary),
        "triangulars": flag.triangulars.iter().map(matrix_json).collect::<Vec<_>>(),
        "strict_lower_relative": residuals,
        "diagonal": diagonal,
    });
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    Ok(json_outcome(Task::Triangularize, doc, format!("triangularized; largest relative strictly-lower norm {worst:e}")))
}

fn measure_doc(t: &CommutingTuple, cfg: &RunConfig) -> CliResult<Value> {
    let nu = joint_measure(t, &cfg.tol)?;
    let atoms: Vec<Value> = nu
        .atoms()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            json!({
                "point": point_json(a),
                "count": nu.counts()[i],
                "weight": ratio_value(nu.weight_ratio(i)),
                "weight_exact": ratio_json(nu.weight_ratio(i)),
            })
        })
        .collect();
    Ok(json!({ "task": "measure", "k": t.k(), "n": t.n(), "total": nu.total(), "atoms": atoms }))
}

fn measure(t: &CommutingTuple, cfg: &RunConfig) -> CliResult<Outcome> {
    let doc = measure_doc(t, cfg)?;
    let count = doc["atoms"].as_array().map(Vec::len).unwrap_or(0);
    Ok(json_outcome(Task::Measure, doc, format!("{count} distinct joint eigenvalues")))
}

fn project(t: &CommutingTuple, cfg: &RunConfig) -> CliResult<Outcome> {
    let nu = joint_measure(t, &cfg.tol)?;
    let regions: Vec<Region> = if cfg.regions.is_empty() {
        (0..nu.atoms().len()).map(|i| atom_region(nu.atoms(), &[i])).collect()
    } else {
        cfg.regions.clone()
    };
    let mut rows = Vec::with_capacity(regions.len());
    for x in &regions {
        x.validate(t.n())?;
        let p = hs_joint(t, x, &cfg.tol)?;
        let mass = nu.mass_where(|a| x.contains(a));
        rows.push(json!({
            "region": region_json(x),
            "trace": ratio_json(p.trace),
            "measure": ratio_json(mass),
            "trace_equals_measure": p.trace == mass,
            "invariance_residual": invariance_residual(t, &p.subspace)?,
            "subspace": subspace_json(&p.subspace),
        }));
    }
    let doc = json!({ "task": "project", "k": t.k(), "n": t.n(), "projections": rows });
    Ok(json_outcome(Task::Project, doc, format!("{} projections", regions.len())))
}

fn order(t: &CommutingTuple, cfg: &RunConfig) -> CliResult<Outcome> {
    let nu = joint_measure(t, &cfg.tol)?;
    let curve = curve_for(t, cfg.depth)?;
    let ordering = assign_params(&curve, &nu, &cfg.tol)?;
    let flag = build_flag(t, &ordering, &cfg.tol)?;
    let (_, triangulars) = triangularize_by_flag(t, &flag, &cfg.tol)?;
    let residual = triangulars
        .iter()
        .zip(t.matrices())
        .map(|(b, a)| strict_lower_norm(b) / op_norm(a).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    let atoms: Vec<Value> = ordering
        .order
        .iter()
        .map(|&i| {
            json!({
                "point": point_json(&ordering.atoms[i]),
                "count": ordering.counts[i],
                "param": ordering.params[i],
                "cell": ordering.keys[i].iter().map(|d| char::from(b'0' + d)).collect::<String>(),
            })
        })
        .collect();
    let doc = json!({
        "task": "order",
        "k": t.k(),
        "n": t.n(),
        "depth": cfg.depth,
        "radii": curve.radii(),
        "atoms": atoms,
        "breakpoints": flag.breakpoints,
        "flag_dims": flag.dims(),
        "unitary": matrix_json(&flag.unitary),
        "strict_lower_relative": residual,
    });
    Ok(json_outcome(Task::Order, doc, format!("{} atoms ordered; flag residual {residual:e}", flag.k())))
}

fn spectrum_scan(t: &CommutingTuple, cfg: &RunConfig) -> CliResult<Outcome> {
    let n = t.n();
    if cfg.axis >= n {
        return Err(CliError::format(format!("axis {} out of range for n = {n}", cfg.axis)));
    }
    let nu = joint_measure(t, &cfg.tol)?;
    let anchor = nu.atoms()[0].clone();
    let r = 1.1 * op_norm(t.matrix(cfg.axis)).max(1e-3);
    let (lower, upper) = (c(-r, -r), c(r, r));
    let axis_points = GridSpec::Box { lower: vec![lower], upper: vec![upper], steps: cfg.grid_steps }.points()?;
    let points: Vec<Vec<C64>> = axis_points
        .iter()
        .map(|p| {
            let mut w = anchor.clone();
            w[cfg.axis] = p[0];
            w
        })
        .collect();
    let result = scan(t, &GridSpec::Points(points), &cfg.tol)?;
    let mut csv = String::new();
    for j in 0..n {
        csv.push_str(&format!("w{j}_re,w{j}_im,"));
    }
    csv.push_str("harte_margin,alpha_margin\n");
    for (i, w) in result.points.iter().enumerate() {
        for z in w {
            csv.push_str(&format!("{:?},{:?},", z.re, z.im));
        }
        csv.push_str(&format!("{:?},{:?}\n", result.harte_margins[i], result.alpha_margins[i]));
    }
    let in_slice: Vec<C64> = nu
        .atoms()
        .iter()
        .filter(|a| (0..n).filter(|&j| j != cfg.axis).all(|j| (a[j] - anchor[j]).norm() <= 1e-9))
        .map(|a| a[cfg.axis])
        .collect();
    let grid = HeatGrid { lower, upper, steps: cfg.grid_steps, values: result.alpha_margins.clone() };
    let plot = svg::render(&grid, &in_slice, "Taylor margin and joint eigenvalues");
    let fold_min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let doc = json!({
        "task": "spectrum-scan",
        "k": t.k(),
        "n": n,
        "axis": cfg.axis,
        "anchor": point_json(&anchor),
        "lower": [lower.re, lower.im],
        "upper": [upper.re, upper.im],
        "steps": cfg.grid_steps,
        "points": result.points.len(),
        "harte_threshold": result.harte_threshold,
        "alpha_threshold": result.alpha_threshold,
        "min_harte_margin": fold_min(&result.harte_margins),
        "min_alpha_margin": fold_min(&result.alpha_margins),
        "csv": "spectrum-scan.csv",
        "svg": "spectrum-scan.svg",
    });
    let summary = format!("{} grid points scanned", result.points.len());
    let mut out = json_outcome(Task::SpectrumScan, doc, summary);
    out.artifacts.push(Artifact { name: "spectrum-scan.csv".into(), contents: csv });
    out.artifacts.push(Artifact { name: "spectrum-scan.svg".into(), contents: plot });
    Ok(out)
}

/// Parses `exp`, `exp:J`, `coord:J`, `product`, `unit` or `resolvent:J:RE,IM`.
/// Coordinate indices are 0-based.
pub fn parse_function(spec: &str, n: usize) -> CliResult<HoloFunction> {
    let bad = || CliError::format(format!("unknown function \"{spec}\""));
    let index = |s: &str| -> CliResult<usize> {
        let j: usize = s.parse().map_err(|_| bad())?;
        if j >= n {
            return Err(CliError::format(format!("coordinate {j} out of range for n = {n}")));
        }
        Ok(j)
    };
    let parts: Vec<&str> = spec.split(':').collect();
    let poly = |p: CommPolynomial| HoloFunction::Polynomial(p);
    match parts.as_slice() {
        ["exp"] => Ok(HoloFunction::Series(PowerSeries::exp_linear(vec![c(1.0, 0.0); n]))),
        ["exp", j] => {
            let j = index(j)?;
            let a = (0..n).map(|i| c(if i == j { 1.0 } else { 0.0 }, 0.0)).collect();
            Ok(HoloFunction::Series(PowerSeries::exp_linear(a)))
        }
        ["coord", j] => Ok(poly(CommPolynomial::coordinate(n, index(j)?)?)),
        ["product"] => {
            let p = CommPolynomial::from_terms(n, [(vec![1; n], c(1.0, 0.0))])?;
            Ok(poly(p))
        }
        ["unit"] => Ok(poly(CommPolynomial::constant(n, c(1.0, 0.0)))),
        ["resolvent", j, w] => {
            let (re, im) = w.split_once(',').ok_or_else(bad)?;
            let w = c(re.parse().map_err(|_| bad())?, im.parse().map_err(|_| bad())?);
            Ok(HoloFunction::Series(PowerSeries::inverse_shift(n, index(j)?, w)?))
        }
        _ => Err(bad()),
    }
}

fn quadrature(t: &CommutingTuple, f: &HoloFunction, cfg: &RunConfig, angular: usize) -> CliResult<(QuadratureSpec, specflag_core::CMatrix)> {
    let quad = QuadratureSpec::around(t, &cfg.tol, angular, cfg.radial_for())?;
    let m = vasilescu_integral(t, f, &quad, &cfg.tol)?;
    Ok((quad, m))
}

fn calc(t: &CommutingTuple, cfg: &RunConfig) -> CliResult<Outcome> {
    let f = parse_function(&cfg.function, t.n())?;
    let series = apply_series(&f, t, &cfg.tol)?;
    let mut doc = json!({
        "task": "calc",
        "k": t.k(),
        "n": t.n(),
        "function": cfg.function,
        "series": matrix_json(&series),
    });
    let summary;
    if t.n() <= 2 {
        let angular = cfg.angular_for(t.n());
        let (quad, fine) = quadrature(t, &f, cfg, angular)?;
        let (_, coarse) = quadrature(t, &f, cfg, (angular / 2).max(2))?;
        let diff = (&fine - &series).norm();
        doc["quadrature"] = json!({
            "center": point_json(&quad.center),
            "radii": quad.radii,
            "angular": quad.angular,
            "radial": if t.n() == 2 { Some(quad.radial) } else { None },
            "result": matrix_json(&fine),
            "difference_from_series": diff,
            "difference_from_half_nodes": (&fine - &coarse).norm(),
        });
        summary = format!("f(T) by series and quadrature; difference {diff:e}");
    } else {
        doc["quadrature"] = Value::Null;
        summary = "f(T) by series; quadrature needs n <= 2".into();
    }
    Ok(json_outcome(Task::Calc, doc, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use specflag_core::numcore::CMatrix;
    use specflag_core::tuples::certify_commuting;

    fn diag_pair() -> CommutingTuple {
        let d = |a: f64, b: f64| CMatrix::from_fn(2, 2, |i, j| if i != j { c(0.0, 0.0) } else if i == 0 { c(a, 0.0) } else { c(b, 0.0) });
        certify_commuting(vec![d(1.0, 2.0), d(3.0, 4.0)], &Tolerance::default()).unwrap()
    }

    #[test]
    fn measure_of_diagonal_pair() {
        let doc = measure_doc(&diag_pair(), &RunConfig::default()).unwrap();
        let atoms = doc["atoms"].as_array().unwrap();
        assert_eq!(atoms.len(), 2);
        let mut seen: Vec<(Value, f64)> = atoms.iter().map(|a| (a["point"].clone(), a["weight"].as_f64().unwrap())).collect();
        seen.sort_by(|a, b| a.0.to_string().cmp(&b.0.to_string()));
        assert_eq!(seen[0], (json!([[1.0, 0.0], [3.0, 0.0]]), 0.5));
        assert_eq!(seen[1], (json!([[2.0, 0.0], [4.0, 0.0]]), 0.5));
    }

    #[test]
    fn scan_shape() {
        let t = certify_commuting(vec![CMatrix::from_fn(2, 2, |i, j| c((i + j) as f64, 0.0))], &Tolerance::default()).unwrap();
        let out = spectrum_scan(&t, &RunConfig::default()).unwrap();
        let csv = &out.artifacts[1].contents;
        assert_eq!(csv.lines().count(), 1 + 1681);
        for line in csv.lines().skip(1) {
            let cols: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
            assert!(cols[2] >= 0.0 && cols[3] >= 0.0);
        }
    }

    #[test]
    fn function_specs() {
        assert!(parse_function("exp", 2).is_ok());
        assert!(parse_function("coord:1", 2).is_ok());
        assert!(parse_function("resolvent:0:3,0", 1).is_ok());
        assert_eq!(parse_function("coord:2", 2).unwrap_err().code, exit::FORMAT);
        assert_eq!(parse_function("sin", 2).unwrap_err().code, exit::FORMAT);
    }
}
