//! `gw`: build, certify, solve and sweep Gromov-Wasserstein programs.
//!
//! Exit codes: 0 success, 2 input or validation error, 3 internal theorem
//! violation, 4 oracle unavailable, 5 identity-check failure.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use gw_core::experiments::{count_trend, write_sweep_csv};
use gw_core::mmspace::standin::{spiral, Focus};
use gw_core::oracle::{oracle, polytope_dof, MAX_GRID_DOF};
use gw_core::spectral::certify_with_tolerance;
use gw_core::{
    build_constraints, certify_nonconvex, delta_space, entropic_gw, frank_wolfe, load_curve, load_space, multistart,
    qap_check, sweep_curves, sweep_delta, Coupling, EntropicOptions, FwOptions, GwError, GwProblem,
    MetricMeasureSpace, SolveResult, SpaceFormat,
};

const EXIT_INPUT: u8 = 2;
const EXIT_THEOREM: u8 = 3;
const EXIT_ORACLE: u8 = 4;
const EXIT_IDENTITY: u8 = 5;

/// Γ_p is materialized when m·n is at most this; larger problems run matrix-free.
const DENSE_LIMIT: usize = 2500;

#[derive(Parser)]
#[command(name = "gw", version, about = "Gromov-Wasserstein quadratic programs between finite metric-measure spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dump Γ_p (plus A and b in JSON) for a pair of spaces.
    Gamma {
        #[command(flatten)]
        pair: Pair,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        /// Output path; `.csv` writes Γ_p rows, anything else JSON. Stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spectral non-convexity report for Γ_p.
    Spectrum {
        #[command(flatten)]
        pair: Pair,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        /// Negativity threshold (default 1e-8 · max(1, ‖Γ‖_F)).
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Solve the program locally and report the value and GW distance.
    Solve(SolveArgs),
    /// Negative-eigenvalue counts for Δ_m against Δ_n, n = n_min..=n_max.
    SweepDelta {
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 2)]
        n_min: usize,
        #[arg(long, default_value_t = 50)]
        n_max: usize,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Negative-eigenvalue counts for arc-length spaces sampled from two curves.
    SweepCurves {
        /// Curve CSV for the fixed space (omit with --standin).
        curve_x: Option<PathBuf>,
        /// Curve CSV for the varying space (omit with --standin).
        curve_y: Option<PathBuf>,
        /// Use the built-in stand-in spirals instead of curve files.
        #[arg(long)]
        standin: bool,
        /// Samples per stand-in curve.
        #[arg(long, default_value_t = 500)]
        standin_samples: usize,
        #[arg(long, default_value_t = 50)]
        m: usize,
        #[arg(long, default_value_t = 10)]
        n_min: usize,
        #[arg(long, default_value_t = 50)]
        n_max: usize,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the squared-loss QAP split on random couplings.
    QapCheck {
        #[command(flatten)]
        pair: Pair,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct Pair {
    /// First space: a file path, or `delta:N` for Δ_N.
    space_x: String,
    /// Second space: a file path, or `delta:N` for Δ_N.
    space_y: String,
    /// Layout of space files: distance-matrix-csv, point-cloud-csv or curve-csv.
    #[arg(long, default_value = "distance-matrix-csv")]
    format: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Fw,
    Entropic,
    Multistart,
}

#[derive(Clone, Copy, ValueEnum)]
enum Init {
    Independence,
    Diagonal,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    pair: Pair,
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    #[arg(long, value_enum, default_value = "multistart")]
    method: Method,
    /// Starting coupling for fw and entropic.
    #[arg(long, value_enum, default_value = "independence")]
    init: Init,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    /// Entropic weight (default 0.05 · mean of Γ_p).
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 200)]
    outer_iters: usize,
    #[arg(long, default_value_t = 100)]
    sinkhorn_iters: usize,
    /// Number of multistart runs.
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Compare against the global oracle (polytope dimension at most 4).
    #[arg(long)]
    oracle: bool,
    #[arg(long, default_value_t = 200)]
    resolution: usize,
    /// Write the iteration history as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the result JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// An error tagged with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<GwError>() {
            Some(GwError::InternalInconsistency(_)) => EXIT_THEOREM,
            _ => EXIT_INPUT,
        };
        Self { code, error }
    }
}

impl From<GwError> for Failure {
    fn from(e: GwError) -> Self {
        anyhow::Error::new(e).into()
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        anyhow::Error::new(e).into()
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Gamma { pair, p, out } => cmd_gamma(&pair, p, out.as_deref()),
        Command::Spectrum { pair, p, tol } => cmd_spectrum(&pair, p, tol),
        Command::Solve(args) => cmd_solve(&args),
        Command::SweepDelta { m, n_min, n_max, p, out } => {
            let rows = sweep_delta(m, n_min, n_max, p)?;
            emit_csv(out.as_deref(), |w| write_sweep_csv(&rows, w))?;
            let summary = json!({ "rows": rows.len(), "m": m, "p": p, "spearman": trend(&rows) });
            emit_summary(out.is_some(), &summary)?;
            Ok(0)
        }
        Command::SweepCurves { curve_x, curve_y, standin, standin_samples, m, n_min, n_max, p, out } => {
            let (cx, cy, source) = if standin {
                let cx = spiral(Focus::Unstable, standin_samples, 40.0)?;
                let cy = spiral(Focus::Stable, standin_samples, 40.0)?;
                (cx, cy, "stand-in spirals (unstable / stable focus)".to_string())
            } else {
                let (Some(px), Some(py)) = (curve_x, curve_y) else {
                    return Err(anyhow::anyhow!("two curve files are required unless --standin is given").into());
                };
                let cx = load_curve(&px).with_context(|| format!("loading {}", px.display()))?;
                let cy = load_curve(&py).with_context(|| format!("loading {}", py.display()))?;
                (cx, cy, format!("{} / {}", px.display(), py.display()))
            };
            let rows = sweep_curves(&cx, &cy, m, n_min, n_max, p)?;
            emit_csv(out.as_deref(), |w| write_sweep_csv(&rows, w))?;
            let summary = json!({
                "rows": rows.len(),
                "m": m,
                "p": p,
                "source": source,
                "subsampling": "evenly spaced sample indices including both endpoints; arc length measured along the full curve",
                "min_negative_count": rows.iter().map(|r| r.negative_count).min(),
                "spearman": trend(&rows),
            });
            emit_summary(out.is_some(), &summary)?;
            Ok(0)
        }
        Command::QapCheck { pair, trials, seed } => {
            let (x, y) = load_pair(&pair)?;
            let report = qap_check(&x, &y, trials, seed)?;
            print_json(&report)?;
            if report.passed() {
                Ok(0)
            } else {
                for f in &report.failures {
                    eprintln!("trial {}: relative error {:e}", f.trial, f.rel_error);
                }
                Ok(EXIT_IDENTITY)
            }
        }
    }
}

fn trend(rows: &[gw_core::SweepRow]) -> Option<f64> {
    (rows.len() >= 2).then(|| count_trend(rows)).filter(|r| r.is_finite())
}

fn parse_space(spec: &str, format: SpaceFormat) -> anyhow::Result<MetricMeasureSpace> {
    if let Some(n) = spec.strip_prefix("delta:") {
        let n: usize = n.parse().with_context(|| format!("bad delta size in '{spec}'"))?;
        return Ok(delta_space(n)?);
    }
    load_space(spec, format).with_context(|| format!("loading {spec}"))
}

fn load_pair(pair: &Pair) -> anyhow::Result<(MetricMeasureSpace, MetricMeasureSpace)> {
    let format: SpaceFormat = pair.format.parse()?;
    Ok((parse_space(&pair.space_x, format)?, parse_space(&pair.space_y, format)?))
}

fn print_json<T: Serialize>(value: &T) -> io::Result<()> {
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    serde_json::to_writer_pretty(&mut lock, value)?;
    writeln!(lock)
}

fn emit_csv(out: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), Failure> {
    match out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(file);
            write(&mut w)?;
            w.flush()?;
        }
        None => write(&mut io::stdout().lock())?,
    }
    Ok(())
}

/// Summary goes to stdout when the CSV went to a file, to stderr otherwise.
fn emit_summary(csv_in_file: bool, summary: &serde_json::Value) -> io::Result<()> {
    if csv_in_file {
        print_json(summary)
    } else {
        eprintln!("{}", serde_json::to_string(summary)?);
        Ok(())
    }
}

fn cmd_gamma(pair: &Pair, p: f64, out: Option<&Path>) -> Result<u8, Failure> {
    let (x, y) = load_pair(pair)?;
    let problem = GwProblem::new(&x, &y, p)?;
    let gamma = problem.gamma().expect("dense problem");
    let is_csv = out.and_then(Path::extension).is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        emit_csv(out, |w| {
            for row in gamma.to_rows() {
                let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(w, "{}", fields.join(","))?;
            }
            Ok(())
        })?;
        return Ok(0);
    }
    let (a, b) = build_constraints(x.measure(), y.measure())?;
    let doc = json!({
        "m": problem.m(),
        "n": problem.n(),
        "p": p,
        "gamma": gamma.to_rows(),
        "constraint_matrix": a.to_rows(),
        "rhs": b,
    });
    match out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(file);
            serde_json::to_writer(&mut w, &doc).map_err(io::Error::from)?;
            writeln!(w)?;
            w.flush()?;
        }
        None => print_json(&doc)?,
    }
    Ok(0)
}

fn cmd_spectrum(pair: &Pair, p: f64, tol: Option<f64>) -> Result<u8, Failure> {
    let (x, y) = load_pair(pair)?;
    let problem = GwProblem::new(&x, &y, p)?;
    let report = match tol {
        None => certify_nonconvex(&problem)?,
        Some(t) => certify_with_tolerance(&problem, Some(t))?,
    };
    print_json(&report)?;
    Ok(0)
}

#[derive(Serialize)]
struct OracleComparison {
    value: f64,
    method: gw_core::OracleMethod,
    error_bound: f64,
    grid_resolution: Option<usize>,
    /// Solver value minus oracle value.
    gap: f64,
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    method: &'static str,
    p: f64,
    #[serde(flatten)]
    result: &'a SolveResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<OracleComparison>,
}

fn cmd_solve(args: &SolveArgs) -> Result<u8, Failure> {
    let (x, y) = load_pair(&args.pair)?;
    let problem = GwProblem::auto(&x, &y, args.p, DENSE_LIMIT)?;
    let dof = polytope_dof(problem.m(), problem.n());
    if args.oracle && dof > MAX_GRID_DOF {
        return Err(Failure {
            code: EXIT_ORACLE,
            error: anyhow::anyhow!("oracle needs polytope dimension <= {MAX_GRID_DOF}, this instance has {dof}"),
        });
    }
    let init = || -> anyhow::Result<Coupling> {
        match args.init {
            Init::Independence => Ok(problem.independence_coupling()),
            Init::Diagonal => {
                if problem.mu_x() != problem.mu_y() {
                    bail!("diagonal init needs identical measures on both spaces");
                }
                Ok(Coupling::diagonal(problem.mu_x()))
            }
        }
    };
    let fw = FwOptions { max_iter: args.max_iter, tol: args.tol };
    let (name, result) = match args.method {
        Method::Fw => ("fw", frank_wolfe(&problem, &init()?, fw)?),
        Method::Entropic => {
            let opts = EntropicOptions {
                epsilon: args.epsilon,
                outer_iters: args.outer_iters,
                sinkhorn_iters: args.sinkhorn_iters,
            };
            ("entropic", entropic_gw(&problem, &init()?, opts)?)
        }
        Method::Multistart => ("multistart", multistart(&problem, args.k, args.seed, fw)?),
    };
    if let Some(path) = &args.trace {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        result.write_history_csv(&mut w)?;
        w.flush()?;
    }
    let oracle = if args.oracle {
        let o = oracle(&problem, args.resolution)?;
        Some(OracleComparison {
            value: o.value,
            method: o.method,
            error_bound: o.error_bound,
            grid_resolution: o.grid_resolution,
            gap: result.value - o.value,
        })
    } else {
        None
    };
    let doc = SolveOutput { method: name, p: args.p, result: &result, oracle };
    match &args.out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(file);
            serde_json::to_writer_pretty(&mut w, &doc).map_err(io::Error::from)?;
            writeln!(w)?;
            w.flush()?;
        }
        None => print_json(&doc)?,
    }
    Ok(0)
}
