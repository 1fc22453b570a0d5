//! Command-line definition and dispatch.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use ngmres_core::bounds::{chi_bound, epsilon_bound, kappa_form, spectral_data_from_dense};
use ngmres_core::iterate::ResidualMode;
use ngmres_core::problems::{build, ProblemSpec};
use ngmres_core::{RunConfig, Termination};
use serde::Serialize;

use crate::checks::{run_suite, Suite};
use crate::figures::{reproduce, Figure};
use crate::history::write_history_file;
use crate::parse::{default_spec, parse_form, parse_method, parse_problem, parse_u0};
use crate::report::{write_json, ExperimentResult, MethodSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_BREAKDOWN: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "angmres", version, about = "NGMRES / alternating NGMRES experiment harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one method on one problem and write history.csv and result.json.
    Solve(SolveArgs),
    /// Reproduce a reference experiment: CSVs, plot.svg, verdict.txt, result.json.
    Reproduce(ReproduceArgs),
    /// Run a seeded property suite and write a JSON report.
    Check(CheckArgs),
    /// Evaluate the Chebyshev and discrete min-max factors.
    Bounds(BoundsArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ResidualArg {
    Recursive,
    True,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// e.g. circulant:36, block:3,5, laplacian:64, file:a.mtx, spd:n=20,lo=0.1,hi=1.9
    #[arg(long)]
    pub problem: String,
    /// e.g. fixed-point, ngmres:m=3, angmres:m=inf,p=4, gmres, gmres:restart=4
    #[arg(long)]
    pub method: String,
    /// ones, zero, random or random:SEED; defaults per problem kind
    #[arg(long)]
    pub u0: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-10)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-14)]
    pub atol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// Least-squares parametrization: beta or gamma
    #[arg(long, default_value = "beta")]
    pub form: String,
    #[arg(long, value_enum, default_value_t = ResidualArg::Recursive)]
    pub residual: ResidualArg,
    #[arg(long, default_value = ".")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// fig1, fig2l, fig2r, fig3, fig4, fig5 or all
    pub figure: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Each figure is written to OUTPUT_DIR/<figure>
    #[arg(long, default_value = "figures")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// monotonicity, equivalence, bounds, span, multisecant or contraction
    pub suite: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// JSON report path; printed to stdout when omitted
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Interval `a,b` for ε(a, b, s)
    #[arg(long)]
    pub interval: Option<String>,
    /// Comma-separated eigenvalues of M for χ(s)
    #[arg(long)]
    pub spectrum: Option<String>,
    /// Problem whose M = I - A is analysed (dense, n ≤ 500)
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest degree s to tabulate
    #[arg(long, default_value_t = 4)]
    pub degree: usize,
}

/// Errors that map to the configuration exit code.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn config<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| ConfigError(format!("{e:#}")).into())
}

/// Runs a parsed command; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Solve(a) => solve(&a),
        Command::Reproduce(a) => reproduce_cmd(&a),
        Command::Check(a) => check(&a),
        Command::Bounds(a) => bounds(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                EXIT_CONFIG
            } else {
                EXIT_FAILURE
            }
        }
    }
}

fn problem_spec(problem: &str, u0: Option<&str>, seed: u64) -> Result<ProblemSpec> {
    let kind = parse_problem(problem, seed)?;
    Ok(match u0 {
        Some(u) => ProblemSpec::new(kind, parse_u0(u, seed)?),
        None => default_spec(kind, seed),
    })
}

pub fn solve(a: &SolveArgs) -> Result<i32> {
    let spec = config(problem_spec(&a.problem, a.u0.as_deref(), a.seed))?;
    let method = config(parse_method(&a.method))?;
    let form = config(parse_form(&a.form))?;
    let cfg = RunConfig {
        rtol: a.rtol,
        atol: a.atol,
        max_iter: a.max_iter,
        keep_iterates: false,
        residual: match a.residual {
            ResidualArg::Recursive => ResidualMode::Recursive,
            ResidualArg::True => ResidualMode::True,
        },
    };
    config(cfg.validate().map_err(Into::into))?;
    let problem = config(build(&spec).map_err(Into::into))?;
    let map = problem.map();
    let hist = method.run(&map, &problem.u0, &cfg, form)?;

    std::fs::create_dir_all(&a.output_dir).with_context(|| format!("creating {}", a.output_dir.display()))?;
    write_history_file(&a.output_dir.join("history.csv"), &hist)?;
    let result = ExperimentResult {
        name: "solve".into(),
        problem: a.problem.clone(),
        dimension: problem.dim(),
        fingerprint: hist.fingerprint.to_string(),
        methods: vec![MethodSummary::new(
            method.to_string(),
            &hist,
            Some("history.csv".into()),
        )],
        comparisons: Vec::new(),
        bounds: Vec::new(),
        claims: Vec::new(),
    };
    write_json(&a.output_dir.join("result.json"), &result)?;
    let last = hist.records.last().expect("initial record");
    println!(
        "{method} on {}: {} after {} iterations, |r| = {:e} (|r0| = {:e})",
        a.problem,
        crate::report::termination_label(hist.termination),
        hist.last_index(),
        last.residual_norm,
        hist.initial_residual_norm()
    );
    Ok(match hist.termination {
        Termination::Converged => EXIT_OK,
        Termination::MaxIter => EXIT_NOT_CONVERGED,
        Termination::Breakdown => EXIT_BREAKDOWN,
    })
}

fn reproduce_cmd(a: &ReproduceArgs) -> Result<i32> {
    let figures: Vec<Figure> = if a.figure == "all" {
        Figure::ALL.to_vec()
    } else {
        vec![config(a.figure.parse())?]
    };
    let mut ok = true;
    for fig in figures {
        let dir = a.output_dir.join(fig.to_string());
        let result = reproduce(fig, a.seed, &dir)?;
        for c in &result.claims {
            println!("{}", c.verdict_line());
        }
        ok &= result.all_claims_pass();
    }
    Ok(if ok { EXIT_OK } else { EXIT_FAILURE })
}

fn check(a: &CheckArgs) -> Result<i32> {
    let suite: Suite = config(a.suite.parse())?;
    if a.trials == 0 {
        return Err(ConfigError("trials must be at least 1".into()).into());
    }
    let report = run_suite(suite, a.seed, a.trials)?;
    match &a.output {
        Some(path) => {
            write_json(path, &report)?;
            println!("{suite}: {} of {} trials passed", report.passed, report.trials);
        }
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(if report.all_pass() { EXIT_OK } else { EXIT_FAILURE })
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("invalid number '{t}'")))
        .collect()
}

#[derive(Debug, Serialize)]
struct FactorRow {
    degree: usize,
    epsilon: Option<f64>,
    chi: Option<f64>,
    kappa_form: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SpectralSummary {
    dimension: usize,
    eigenvalue_min: f64,
    eigenvalue_max: f64,
    eigvec_cond: f64,
    m_norm: f64,
    m_symmetric: bool,
    a_spd: bool,
    a_condition: Option<f64>,
    interval_excludes_0_and_1: bool,
}

#[derive(Debug, Serialize)]
struct BoundsOutput {
    interval: Option<(f64, f64)>,
    spectrum_size: Option<usize>,
    problem: Option<SpectralSummary>,
    factors: Vec<FactorRow>,
}

fn bounds(a: &BoundsArgs) -> Result<i32> {
    if a.interval.is_none() && a.spectrum.is_none() && a.problem.is_none() {
        return Err(ConfigError("give at least one of --interval, --spectrum, --problem".into()).into());
    }
    let mut interval = match &a.interval {
        Some(s) => {
            let v = config(parse_list(s))?;
            if v.len() != 2 {
                return Err(ConfigError("--interval expects 'a,b'".into()).into());
            }
            Some((v[0], v[1]))
        }
        None => None,
    };
    let mut spectrum = match &a.spectrum {
        Some(s) => Some(config(parse_list(s))?),
        None => None,
    };
    let mut summary = None;
    let mut kappa = None;
    if let Some(p) = &a.problem {
        let spec = config(problem_spec(p, None, a.seed))?;
        let problem = config(build(&spec).map_err(Into::into))?;
        let dense = problem.operator.to_dense().context("operator has no dense form")?;
        let n = dense.nrows();
        let m = DMatrix::identity(n, n) - dense;
        let sd = spectral_data_from_dense(&m)?;
        kappa = sd.a_condition().ok();
        interval.get_or_insert(sd.interval);
        spectrum.get_or_insert_with(|| sd.eigenvalues.clone());
        summary = Some(SpectralSummary {
            dimension: n,
            eigenvalue_min: sd.interval.0,
            eigenvalue_max: sd.interval.1,
            eigvec_cond: sd.eigvec_cond,
            m_norm: sd.m_norm,
            m_symmetric: sd.is_symmetric,
            a_spd: sd.a_is_spd(),
            a_condition: kappa,
            interval_excludes_0_and_1: sd.interval_excludes_0_and_1,
        });
    }
    // factors derived from a problem are omitted when their hypotheses fail
    let explicit_interval = a.interval.is_some();
    let explicit_spectrum = a.spectrum.is_some();
    let mut factors = Vec::new();
    for s in 1..=a.degree {
        let epsilon = match interval {
            Some((lo, hi)) if explicit_interval => Some(config(epsilon_bound(lo, hi, s).map_err(Into::into))?),
            Some((lo, hi)) => epsilon_bound(lo, hi, s).ok(),
            None => None,
        };
        let chi = match &spectrum {
            Some(sp) if explicit_spectrum => Some(config(chi_bound(sp, s).map_err(Into::into))?),
            Some(sp) => chi_bound(sp, s).ok(),
            None => None,
        };
        factors.push(FactorRow {
            degree: s,
            epsilon,
            chi,
            kappa_form: kappa.map(|k| kappa_form(k, s)),
        });
    }
    let out = BoundsOutput {
        interval,
        spectrum_size: spectrum.as_ref().map(Vec::len),
        problem: summary,
        factors,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(EXIT_OK)
}
