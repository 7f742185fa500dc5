//! Command-line front end: argument types and the four commands. Each command
//! returns its process exit code.

use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use crate::bodies::{chart_at, instantiate, BodySpec, ImplicitBody};
use crate::counterexamples::{
    cantor_contact_pair, cone_graph_witness, kiselman_identity_check, kiselman_level_set_error, kiselman_shadow_solver,
    square_grid,
};
use crate::error::{Error, Result};
use crate::illumination::{
    dyadic_grid, find_shadow_boundary_point, uniform_grid, Direction, ShadowCurve, ShadowSolver,
};
use crate::projection::{
    certify_rank, seed_boundary, solve_boundary_point, trace_boundary, validate_disjoint, BoundaryTrace, TraceOptions,
};
use crate::regularity::{box_dimension, cusp_check, geometric_scales, holder_fit};

#[derive(Debug, Parser)]
#[command(name = "umbra", version, about = "Shadow boundaries of convex bodies and their regularity")]
pub struct Cli {
    /// Seed for randomized sampling.
    #[arg(long, global = true, default_value_t = 0)]
    pub rng_seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Shadow boundary of a body under parallel light, as a chart graph CSV.
    Shadow(ShadowArgs),
    /// Trace the boundary of the projection shadow of omega on lambda.
    Project(ProjectArgs),
    /// Regularity report for a curve CSV.
    Diagnose(DiagnoseArgs),
    /// Run one of the sharpness constructions.
    Counterexample(CounterexampleArgs),
}

#[derive(Debug, Args)]
pub struct ShadowArgs {
    pub spec: PathBuf,
    /// Light direction (normalized internally).
    #[arg(long, num_args = 1.., allow_negative_numbers = true, required = true)]
    pub u: Vec<f64>,
    /// Number of evenly spaced grid points.
    #[arg(long, default_value_t = 64)]
    pub grid: usize,
    /// Half width of the grid; defaults to half the chart radius.
    #[arg(long)]
    pub half_width: Option<f64>,
    /// Use the dyadic grid 0, ±2^-k for k in KMIN..=KMAX instead.
    #[arg(long, num_args = 2, value_names = ["KMIN", "KMAX"])]
    pub dyadic: Option<Vec<i32>>,
    /// Boundary point to center the chart at; found automatically if absent.
    #[arg(long, num_args = 1.., allow_negative_numbers = true)]
    pub at: Option<Vec<f64>>,
    /// Output CSV (stdout if absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    pub omega: PathBuf,
    pub lambda: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub step: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_steps: usize,
    /// Output CSV; a JSON sidecar is written next to it.
    #[arg(long, default_value = "trace.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Holder,
    Cusp,
    Boxdim,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    pub curve_csv: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Center `y''_0` (defaults to the origin).
    #[arg(long, num_args = 1.., allow_negative_numbers = true)]
    pub center: Option<Vec<f64>>,
    /// Cusp constants.
    #[arg(long)]
    pub l: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Box sizes; defaults to six scales spanning a factor 32.
    #[arg(long, num_args = 1..)]
    pub scales: Option<Vec<f64>>,
    /// Output JSON (stdout if absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CounterexampleArgs {
    #[command(subcommand)]
    pub which: Counterexample,
    /// Output JSON (stdout if absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Counterexample {
    /// Kiselman family: identity, level set and exponent.
    Kiselman {
        #[arg(long, default_value_t = 3)]
        q: i64,
    },
    /// Cone over a circle: graph-failure witness.
    Cone {
        #[arg(long, num_args = 3, allow_negative_numbers = true, default_values_t = [0.0, 1.0, 0.0])]
        u: Vec<f64>,
        #[arg(long, default_value_t = 4000)]
        samples: usize,
    },
    /// Cantor contact pair: contact components and disjointness.
    Cantor {
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        #[arg(long, default_value_t = 3)]
        depth: u32,
    },
}

pub fn run(cli: &Cli) -> i32 {
    match &cli.command {
        Command::Shadow(a) => cmd_shadow(a),
        Command::Project(a) => cmd_project(a),
        Command::Diagnose(a) => cmd_diagnose(a, cli.rng_seed),
        Command::Counterexample(a) => cmd_counterexample(a, cli.rng_seed),
    }
}

fn report(e: &Error) {
    eprintln!("error: {e}");
}

fn is_input_error(e: &Error) -> bool {
    matches!(e, Error::Spec(_) | Error::Parameter(_) | Error::Json(_) | Error::Io(_) | Error::Schema(_) | Error::Csv(_))
}

pub fn load_body(path: &Path) -> Result<(BodySpec, ImplicitBody)> {
    let text = std::fs::read_to_string(path)?;
    let spec = BodySpec::from_json(&text)?;
    let body = instantiate(&spec)?;
    Ok((spec, body))
}

fn writer(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout()),
    })
}

fn write_json(out: &Option<PathBuf>, v: &serde_json::Value) -> Result<()> {
    let mut w = writer(out)?;
    serde_json::to_writer_pretty(&mut w, v)?;
    writeln!(w)?;
    Ok(())
}

pub fn shadow_curve(a: &ShadowArgs) -> Result<ShadowCurve> {
    let (_, body) = load_body(&a.spec)?;
    let u = Direction::from_slice(&a.u)?;
    if u.dim() != body.dim() {
        return Err(Error::Parameter(format!("--u has {} components, body lives in R^{}", u.dim(), body.dim())));
    }
    let p = match &a.at {
        Some(at) => {
            if at.len() != body.dim() {
                return Err(Error::Parameter(format!("--at needs {} coordinates", body.dim())));
            }
            DVector::from_row_slice(at)
        }
        None => find_shadow_boundary_point(&body, &u, None)?,
    };
    let chart = chart_at(&body, &p)?;
    let solver = ShadowSolver::new(&chart, &u)?;
    let dim_y = body.dim() - 2;
    let grid = match &a.dyadic {
        Some(k) => dyadic_grid(dim_y, k[0]..=k[1]),
        None => {
            let hw = a.half_width.unwrap_or(0.5 * chart.domain_radius());
            uniform_grid(dim_y, hw, a.grid)
        }
    };
    solver.sweep(&grid)
}

pub fn cmd_shadow(a: &ShadowArgs) -> i32 {
    let curve = match shadow_curve(a) {
        Ok(c) => c,
        Err(e) => {
            report(&e);
            return if is_input_error(&e) { 1 } else { 2 };
        }
    };
    if !curve.failures.is_empty() {
        log::warn!("{} grid points failed", curve.failures.len());
    }
    match writer(&a.out).and_then(|w| curve.write_csv(w)) {
        Ok(()) => 0,
        Err(e) => {
            report(&e);
            1
        }
    }
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn cmd_project(a: &ProjectArgs) -> i32 {
    let loaded = load_body(&a.omega).and_then(|o| Ok((o, load_body(&a.lambda)?)));
    let ((so, omega), (sl, lambda)) = match loaded {
        Ok(v) => v,
        Err(e) => {
            report(&e);
            return 1;
        }
    };
    let code = |e: &Error| match e {
        Error::Overlap { .. } => 3,
        Error::RankDeficient { .. } => 4,
        e if is_input_error(e) => 1,
        _ => 2,
    };
    if let Err(e) = validate_disjoint(&omega, &lambda) {
        report(&e);
        return code(&e);
    }
    let start = match seed_boundary(&omega, &lambda).and_then(|s| solve_boundary_point(&omega, &lambda, &s)) {
        Ok(p) => p,
        Err(e) => {
            report(&e);
            return code(&e);
        }
    };
    let trace = match trace_boundary(&omega, &lambda, &start, TraceOptions { step: a.step, max_steps: a.max_steps }) {
        Ok(t) => t,
        Err(e) => {
            report(&e);
            return code(&e);
        }
    };
    for p in &trace.points {
        let cert = certify_rank(&omega, &lambda, p);
        if !cert.full() {
            eprintln!(
                "error: rank {} < {} at y = {:?}, sigma_min = {:e}, sigma_max = {:e}",
                cert.rank,
                omega.dim() + 3,
                p.y,
                cert.sigma_min,
                cert.sigma_max
            );
            return 4;
        }
    }
    if let Some(d) = &trace.diagnostic {
        log::warn!("trace stopped early: {d}");
    }
    let bodies = serde_json::json!({ "omega": so.to_value(), "lambda": sl.to_value() });
    let written = File::create(&a.out)
        .map_err(Error::from)
        .and_then(|f| trace.write_csv(f))
        .and_then(|()| write_json(&Some(sidecar(&a.out)), &trace.to_json(bodies, a.max_steps)));
    match written {
        Ok(()) => 0,
        Err(e) => {
            report(&e);
            1
        }
    }
}

/// Curve CSV contents: a shadow graph or the points of a trace.
pub enum CurveFile {
    Shadow(ShadowCurve),
    Trace(Vec<DVector<f64>>),
}

pub fn read_curve(path: &Path) -> Result<CurveFile> {
    let mut rd = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let first = rd.headers().map(|h| h.get(0).unwrap_or("").trim().to_string()).unwrap_or_default();
    let reader = BufReader::new(File::open(path)?);
    match first.as_str() {
        "y1" | "gamma" => Ok(CurveFile::Shadow(ShadowCurve::read_csv(reader)?)),
        "x1" => Ok(CurveFile::Trace(BoundaryTrace::read_csv(reader)?.iter().map(|p| p.y_vec()).collect())),
        _ => Err(Error::Schema(format!("{} is neither a shadow curve nor a trace CSV", path.display()))),
    }
}

fn shadow_points(c: &ShadowCurve) -> Vec<DVector<f64>> {
    c.samples.iter().map(|s| DVector::from_iterator(c.dim_y + 1, s.y.iter().copied().chain([s.gamma]))).collect()
}

pub fn diagnose(a: &DiagnoseArgs, seed: u64) -> Result<serde_json::Value> {
    let curve = read_curve(&a.curve_csv)?;
    let center = |c: &ShadowCurve| a.center.clone().unwrap_or_else(|| vec![0.0; c.dim_y]);
    Ok(match (a.mode, curve) {
        (Mode::Holder, CurveFile::Shadow(c)) => serde_json::to_value(holder_fit(&c, &center(&c))?)?,
        (Mode::Cusp, CurveFile::Shadow(c)) => {
            let (Some(l), Some(theta), Some(alpha)) = (a.l, a.theta, a.alpha) else {
                return Err(Error::Parameter("cusp mode needs --l, --theta and --alpha".into()));
            };
            serde_json::to_value(cusp_check(&c, &center(&c), l, theta, alpha)?)?
        }
        (Mode::Holder | Mode::Cusp, CurveFile::Trace(_)) => {
            return Err(Error::Schema("holder and cusp modes need a shadow curve CSV".into()));
        }
        (Mode::Boxdim, curve) => {
            let points = match curve {
                CurveFile::Shadow(c) => shadow_points(&c),
                CurveFile::Trace(p) => p,
            };
            let scales = a.scales.clone().unwrap_or_else(|| geometric_scales(&points, 6, 2.0));
            serde_json::to_value(box_dimension(&points, &scales, seed)?)?
        }
    })
}

pub fn cmd_diagnose(a: &DiagnoseArgs, seed: u64) -> i32 {
    match diagnose(a, seed).and_then(|v| write_json(&a.out, &v)) {
        Ok(()) => 0,
        Err(e) => {
            report(&e);
            if is_input_error(&e) {
                1
            } else {
                2
            }
        }
    }
}

pub fn counterexample(a: &CounterexampleArgs, seed: u64) -> Result<serde_json::Value> {
    Ok(match &a.which {
        Counterexample::Kiselman { q } => {
            let identity = kiselman_identity_check(*q, &square_grid(32, 0.45))?;
            let xs: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.0025).collect();
            let level_set = kiselman_level_set_error(*q, &xs)?;
            let curve = kiselman_shadow_solver(*q)?.sweep(&dyadic_grid(1, 4..=12))?;
            let fit = holder_fit(&curve, &[0.0])?;
            serde_json::json!({
                "q": q,
                "identity_max_error": identity,
                "level_set_max_error": level_set,
                "expected_alpha": 2.0 / *q as f64,
                "holder_fit": fit,
            })
        }
        Counterexample::Cone { u, samples } => serde_json::to_value(cone_graph_witness(u, *samples, seed)?)?,
        Counterexample::Cantor { eps, depth } => {
            let pair = cantor_contact_pair(*eps, *depth)?;
            let disjoint = match validate_disjoint(&pair.omega, &pair.lambda) {
                Ok(_) => true,
                Err(Error::Overlap { .. }) => false,
                Err(e) => return Err(e),
            };
            serde_json::json!({
                "eps": eps,
                "depth": depth,
                "contact_count": pair.contact_count,
                "degenerate": pair.degenerate,
                "disjoint": disjoint,
            })
        }
    })
}

pub fn cmd_counterexample(a: &CounterexampleArgs, seed: u64) -> i32 {
    match counterexample(a, seed).and_then(|v| write_json(&a.out, &v)) {
        Ok(()) => 0,
        Err(e) => {
            report(&e);
            if is_input_error(&e) {
                1
            } else {
                2
            }
        }
    }
}
