//! `specflag` command-line tool.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use specflag_cli::io::{exit, parse_tuple_file, render, tuple_json, CliError, CliResult};
use specflag_cli::regions::parse_region;
use specflag_cli::tasks::{run, RunConfig, Task};
use specflag_core::tuples::{certify_commuting, planted_tuple, Conjugation, PlantedSpec};
use specflag_core::{CommutingTuple, Error, Tolerance};

#[derive(Parser, Debug)]
#[command(name = "specflag", version, about = "Joint spectral toolkit for commuting matrix tuples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Certify that the matrices of a tuple file commute.
    Check {
        /// Tuple file in JSON.
        #[arg(long)]
        input: PathBuf,
        /// Tolerances as ABS or ABS,REL.
        #[arg(long, value_parser = parse_tol)]
        tol: Option<Tolerance>,
    },
    /// Run one task and write its artifacts to the output directory.
    Run(RunArgs),
    /// Write a seeded planted tuple file.
    Generate(GenerateArgs),
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    #[arg(long, value_enum)]
    task: Task,
    /// Tuple file in JSON.
    #[arg(long)]
    input: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Seed for random regions and test data.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Depth of the space-filling curve.
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u64).range(1..=20))]
    depth: u64,
    /// Grid points per real axis for the spectrum scan, e.g. 41 or 41x41.
    #[arg(long, default_value = "41", value_parser = parse_grid)]
    grid: usize,
    /// Tolerances as ABS or ABS,REL.
    #[arg(long, value_parser = parse_tol)]
    tol: Option<Tolerance>,
    /// Coordinate swept by the spectrum scan (0-based).
    #[arg(long, default_value_t = 0)]
    axis: usize,
    /// Angular quadrature nodes.
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..=4096))]
    angular: Option<u64>,
    /// Radial quadrature nodes.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=512))]
    radial: Option<u64>,
    /// Region as JSON text or a path to a JSON file; repeatable.
    #[arg(long)]
    region: Vec<String>,
    /// Function for the calc task: exp, exp:J, coord:J, product, unit, resolvent:J:RE,IM.
    #[arg(long, default_value = "exp")]
    function: String,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ConjugationArg {
    None,
    Unitary,
    Invertible,
}

#[derive(clap::Args, Debug)]
struct GenerateArgs {
    /// Matrix size.
    #[arg(long)]
    k: usize,
    /// Number of matrices.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Largest number of repeated joint eigenvalues.
    #[arg(long, default_value_t = 1)]
    cluster: usize,
    /// Draw coordinates from a coarse lattice so that they repeat.
    #[arg(long)]
    collisions: bool,
    #[arg(long, value_enum, default_value_t = ConjugationArg::Unitary)]
    conjugation: ConjugationArg,
    /// Condition number cap for invertible conjugation.
    #[arg(long, default_value_t = 10.0)]
    cond: f64,
    /// Tuple file to write.
    #[arg(long)]
    out: PathBuf,
}

fn parse_tol(s: &str) -> Result<Tolerance, String> {
    let mut parts = s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p}: {e}")));
    let abs = parts.next().ok_or("empty tolerance")??;
    let rel = match parts.next() {
        Some(r) => r?,
        None => Tolerance::default().rel_eps,
    };
    if parts.next().is_some() {
        return Err("expected ABS or ABS,REL".into());
    }
    Tolerance::new(abs, rel).map_err(|e| e.to_string())
}

fn parse_grid(s: &str) -> Result<usize, String> {
    let (a, b) = s.split_once('x').unwrap_or((s, s));
    let (a, b): (usize, usize) = (a.parse().map_err(|_| "bad grid")?, b.parse().map_err(|_| "bad grid")?);
    if a != b || a == 0 || a > 2001 {
        return Err("grid must be N or NxN with 1 <= N <= 2001".into());
    }
    Ok(a)
}

fn read_input(path: &Path) -> CliResult<specflag_cli::io::TupleFile> {
    let text = fs::read_to_string(path).map_err(|e| CliError::format(format!("{}: {e}", path.display())))?;
    parse_tuple_file(&text)
}

fn certify(file: &specflag_cli::io::TupleFile, tol: &Tolerance) -> CliResult<CommutingTuple> {
    Ok(certify_commuting(file.matrices.clone(), tol)?)
}

fn check(input: &Path, tol: Tolerance) -> CliResult<u8> {
    let file = read_input(input)?;
    let report = match certify(&file, &tol) {
        Ok(t) => json!({ "certified": true, "k": t.k(), "n": t.n(), "residual": t.comm_residual(), "threshold": tol.abs_eps }),
        Err(CliError { code: exit::CERTIFICATION, .. }) => {
            let Err(Error::NonCommuting { i, j, residual }) = certify_commuting(file.matrices, &tol) else {
                unreachable!("certification failed above")
            };
            print!("{}", render(&json!({ "certified": false, "pair": [i, j], "residual": residual, "threshold": tol.abs_eps })));
            return Ok(exit::CERTIFICATION);
        }
        Err(e) => return Err(e),
    };
    print!("{}", render(&report));
    Ok(exit::SUCCESS)
}

fn region_arg(text: &str, n: usize) -> CliResult<specflag_core::hsproj::Region> {
    let trimmed = text.trim_start();
    let source = if trimmed.starts_with('{') {
        text.to_string()
    } else {
        fs::read_to_string(text).map_err(|e| CliError::format(format!("{text}: {e}")))?
    };
    let v: Value = serde_json::from_str(&source)
        .map_err(|e| CliError::format(format!("region at line {}, column {}: {e}", e.line(), e.column())))?;
    parse_region(&v, n)
}

fn run_task(args: RunArgs) -> CliResult<u8> {
    let file = read_input(&args.input)?;
    let tol = args.tol.unwrap_or_default();
    let t = certify(&file, &tol)?;
    let cfg = RunConfig {
        tol,
        seed: args.seed,
        depth: args.depth as usize,
        grid_steps: args.grid,
        axis: args.axis,
        angular: args.angular.map(|a| a as usize),
        radial: args.radial.map(|r| r as usize),
        regions: args.region.iter().map(|r| region_arg(r, t.n())).collect::<CliResult<_>>()?,
        function: args.function,
    };
    let outcome = run(args.task, &t, &cfg)?;
    fs::create_dir_all(&args.out).map_err(|e| CliError::format(format!("{}: {e}", args.out.display())))?;
    for a in &outcome.artifacts {
        let path = args.out.join(&a.name);
        fs::write(&path, &a.contents).map_err(|e| CliError::numerical(format!("{}: {e}", path.display())))?;
    }
    println!("{}", outcome.summary);
    Ok(outcome.code)
}

fn generate(args: GenerateArgs) -> CliResult<u8> {
    let conjugation = match args.conjugation {
        ConjugationArg::None => Conjugation::None,
        ConjugationArg::Unitary => Conjugation::Unitary,
        ConjugationArg::Invertible => Conjugation::Invertible { cond_cap: args.cond },
    };
    let spec = PlantedSpec {
        max_cluster: args.cluster,
        collisions: args.collisions,
        conjugation,
        ..PlantedSpec::new(args.k, args.n)
    };
    let p = planted_tuple(&spec, args.seed)?;
    let doc = tuple_json(p.tuple.matrices(), None);
    fs::write(&args.out, render(&doc)).map_err(|e| CliError::format(format!("{}: {e}", args.out.display())))?;
    Ok(exit::SUCCESS)
}

/// Caps the global thread pool from `SPECFLAG_THREADS`.
fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("SPECFLAG_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::format(format!("SPECFLAG_THREADS must be a positive integer, got \"{value}\"")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::numerical(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::FORMAT } else { exit::SUCCESS });
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Check { input, tol } => check(&input, tol.unwrap_or_default()),
        Command::Run(args) => run_task(args),
        Command::Generate(args) => generate(args),
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
