//! Seeded property suites over random instances.

use std::fmt;
use std::str::FromStr;

use anyhow::{anyhow, Context, Result};
use nalgebra::{DMatrix, DVector};
use ngmres_core::angmres::{check_periodic_equivalence, run_angmres, AlternatingSchedule};
use ngmres_core::bounds::{
    evaluate_angmres_bound, evaluate_one_step_bound, evaluate_weighted_error_bound, spectral_data_from_dense,
    SpectralData,
};
use ngmres_core::gmres::{krylov_span_check, run_gmres_restarted};
use ngmres_core::iterate::{residual, richardson_step};
use ngmres_core::linops::apply;
use ngmres_core::ngmres::{ngmres_step, ngmres_step_with, run_ngmres, verify_multisecant, IterationWindow};
use ngmres_core::problems::{build, random_diagonalizable, LinearProblem, ProblemKind, ProblemSpec};
use ngmres_core::{Capacity, ConvergenceHistory, Error as CoreError, FixedPointMap, RunConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Relative growth allowed between consecutive NGMRES residual norms.
pub const MONOTONE_SLACK: f64 = 1e-12;
pub const EQUIVALENCE_TOL: f64 = 1e-8;
pub const SPAN_TOL: f64 = 1e-8;
pub const MULTISECANT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Monotonicity,
    Equivalence,
    Bounds,
    Span,
    Multisecant,
    Contraction,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Monotonicity,
        Suite::Equivalence,
        Suite::Bounds,
        Suite::Span,
        Suite::Multisecant,
        Suite::Contraction,
    ];
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Monotonicity => "monotonicity",
            Suite::Equivalence => "equivalence",
            Suite::Bounds => "bounds",
            Suite::Span => "span",
            Suite::Multisecant => "multisecant",
            Suite::Contraction => "contraction",
        })
    }
}

impl FromStr for Suite {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.to_string() == s)
            .ok_or_else(|| anyhow!("unknown suite '{s}'"))
    }
}

/// Result of one named check within a trial.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub limit: f64,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: impl Into<String>, worst: f64, limit: f64, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            worst,
            limit,
            detail: detail.into(),
        }
    }

    fn at_most(name: impl Into<String>, worst: f64, limit: f64, detail: impl Into<String>) -> Self {
        Self::new(name, worst, limit, worst <= limit, detail)
    }

    fn error(name: impl Into<String>, err: impl fmt::Display) -> Self {
        Self::new(name, f64::NAN, f64::NAN, false, format!("error: {err}"))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub instance: String,
    pub pass: bool,
    pub checks: Vec<CheckOutcome>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub trials: usize,
    pub passed: usize,
    pub failed: usize,
    pub outcomes: Vec<TrialOutcome>,
}

impl SuiteReport {
    pub fn all_pass(&self) -> bool {
        self.failed == 0
    }

    /// Largest `worst` over all checks whose name starts with `prefix`.
    pub fn worst(&self, prefix: &str) -> f64 {
        self.outcomes
            .iter()
            .flat_map(|t| &t.checks)
            .filter(|c| c.name.starts_with(prefix))
            .map(|c| c.worst)
            .fold(0.0, f64::max)
    }
}

/// Runs `trials` seeded trials of `suite`.
pub fn run_suite(suite: Suite, seed: u64, trials: usize) -> Result<SuiteReport> {
    if trials == 0 {
        return Err(anyhow!("trials must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outcomes = Vec::with_capacity(trials);
    for trial in 0..trials {
        let trial_seed: u64 = rng.random();
        let mut trng = ChaCha8Rng::seed_from_u64(trial_seed);
        let (instance, checks) = match suite {
            Suite::Monotonicity => monotonicity_trial(trial, &mut trng),
            Suite::Equivalence => equivalence_trial(trial, &mut trng),
            Suite::Bounds => bounds_trial(trial, &mut trng),
            Suite::Span => span_trial(trial, &mut trng),
            Suite::Multisecant => multisecant_trial(trial, &mut trng),
            Suite::Contraction => contraction_trial(trial, &mut trng),
        }
        .unwrap_or_else(|e| {
            (
                "instance generation failed".to_string(),
                vec![CheckOutcome::error("setup", e)],
            )
        });
        let pass = !checks.is_empty() && checks.iter().all(|c| c.pass);
        outcomes.push(TrialOutcome {
            trial,
            instance,
            pass,
            checks,
        });
    }
    let passed = outcomes.iter().filter(|t| t.pass).count();
    Ok(SuiteReport {
        suite: suite.to_string(),
        seed,
        trials,
        passed,
        failed: trials - passed,
        outcomes,
    })
}

fn kind_label(kind: &ProblemKind) -> String {
    match kind {
        ProblemKind::RandomSpd { n, spectrum, seed } => {
            format!("spd:n={n},lo={},hi={},seed={seed}", spectrum.0, spectrum.1)
        }
        ProblemKind::RandomDiagonalizable {
            n,
            spectrum,
            eigcond,
            seed,
        } => format!(
            "diag:n={n},lo={},hi={},eigcond={eigcond},seed={seed}",
            spectrum.0, spectrum.1
        ),
        ProblemKind::RandomGeneral { n, seed } => format!("general:n={n},seed={seed}"),
        other => format!("{other:?}"),
    }
}

/// SPD, non-normal diagonalizable or general, by `trial mod 3`.
fn mixed_kind(trial: usize, rng: &mut ChaCha8Rng, n: usize) -> ProblemKind {
    let seed = rng.random();
    match trial % 3 {
        0 => ProblemKind::RandomSpd {
            n,
            spectrum: (0.05, 1.95),
            seed,
        },
        1 => ProblemKind::RandomDiagonalizable {
            n,
            spectrum: (0.1, 0.95),
            eigcond: 10.0,
            seed,
        },
        _ => ProblemKind::RandomGeneral { n, seed },
    }
}

fn build_kind(kind: ProblemKind) -> Result<(String, LinearProblem)> {
    let label = kind_label(&kind);
    let p = build(&ProblemSpec::with_default_u0(kind)).with_context(|| format!("building {label}"))?;
    Ok((label, p))
}

fn cap_name(m: Capacity) -> String {
    match m {
        Capacity::Finite(m) => m.to_string(),
        Capacity::Unbounded => "inf".into(),
    }
}

/// Largest `‖r_{k+1}‖ / ‖r_k‖ - 1` over a history.
fn max_growth(h: &ConvergenceHistory) -> (f64, usize) {
    h.records
        .windows(2)
        .map(|w| (w[1].residual_norm / w[0].residual_norm - 1.0, w[1].index))
        .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a })
}

fn monotonicity_trial(trial: usize, rng: &mut ChaCha8Rng) -> Result<(String, Vec<CheckOutcome>)> {
    let n = rng.random_range(4..=30);
    let (label, p) = build_kind(mixed_kind(trial, rng, n))?;
    let map = p.map();
    let cfg = RunConfig::default().with_max_iter(40);
    let mut checks = Vec::new();
    for m in [
        Capacity::Finite(0),
        Capacity::Finite(1),
        Capacity::Finite(3),
        Capacity::Unbounded,
    ] {
        let name = format!("ngmres_m{}", cap_name(m));
        checks.push(match run_ngmres(&map, &p.u0, m, &cfg) {
            Ok(h) => {
                let (g, k) = max_growth(&h);
                CheckOutcome::at_most(
                    name,
                    g,
                    MONOTONE_SLACK,
                    format!("{} steps, largest relative growth {g:.3e} at k={k}", h.last_index()),
                )
            }
            Err(e) => CheckOutcome::error(name, e),
        });
    }
    Ok((label, checks))
}

/// Trial 0 is the block-shift figure configuration; later trials are random.
fn equivalence_trial(trial: usize, rng: &mut ChaCha8Rng) -> Result<(String, Vec<CheckOutcome>)> {
    let mut checks = Vec::new();
    if trial == 0 {
        let (label, p) = build_kind(ProblemKind::BlockShift { ell: 3, q: 5 })?;
        let map = p.map();
        let cfg = RunConfig::default().with_max_iter(80);
        checks.push(periodic_check("angmres_m2_p3_vs_gmres3", &map, &p.u0, 2, &cfg));
        return Ok((label, checks));
    }
    let n = rng.random_range(6..=30);
    let (label, p) = build_kind(mixed_kind(trial, rng, n))?;
    let map = p.map();
    // NGMRES(0) against GMRES(1), per iteration
    let cfg = RunConfig::default().with_max_iter(10);
    let name = "ngmres0_vs_gmres1";
    checks.push(
        match (
            run_ngmres(&map, &p.u0, Capacity::Finite(0), &cfg),
            run_gmres_restarted(&map, &p.u0, 1, &cfg),
        ) {
            (Ok(a), Ok(g)) => comparison_outcome(name, check_periodic_equivalence(&a, &g, 1, EQUIVALENCE_TOL)),
            (Err(e), _) | (_, Err(e)) => CheckOutcome::error(name, e),
        },
    );
    let m = rng.random_range(1..=3);
    let cfg = RunConfig::default().with_max_iter(30);
    checks.push(periodic_check(
        &format!("angmres_m{m}_p{}_vs_gmres{}", m + 1, m + 1),
        &map,
        &p.u0,
        m,
        &cfg,
    ));
    Ok((label, checks))
}

fn comparison_outcome(name: &str, rep: ngmres_core::Result<ngmres_core::angmres::EquivalenceReport>) -> CheckOutcome {
    match rep {
        Ok(rep) => CheckOutcome::new(
            name,
            rep.max_residual_discrepancy,
            rep.tol,
            rep.holds() && !rep.entries.is_empty(),
            format!(
                "{} indices, max relative discrepancy {:.3e}",
                rep.entries.len(),
                rep.max_residual_discrepancy
            ),
        ),
        Err(e) => CheckOutcome::error(name, e),
    }
}

/// aNGMRES(m, m+1) against GMRES(m+1) at multiples of `m + 1`.
fn periodic_check(name: &str, map: &FixedPointMap, u0: &DVector<f64>, m: usize, cfg: &RunConfig) -> CheckOutcome {
    let p = m + 1;
    let sched = match AlternatingSchedule::new(Capacity::Finite(m), p) {
        Ok(s) => s,
        Err(e) => return CheckOutcome::error(name, e),
    };
    match (run_angmres(map, u0, sched, cfg), run_gmres_restarted(map, u0, p, cfg)) {
        (Ok(a), Ok(g)) => comparison_outcome(name, check_periodic_equivalence(&a, &g, p, EQUIVALENCE_TOL)),
        (Err(e), _) | (_, Err(e)) => CheckOutcome::error(name, e),
    }
}

/// Accumulates `observed - bound` over many bound evaluations.
struct BoundTally {
    name: String,
    worst: f64,
    count: usize,
    failure: Option<String>,
}

impl BoundTally {
    fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            worst: f64::NEG_INFINITY,
            count: 0,
            failure: None,
        }
    }

    fn add(&mut self, at: &str, rep: ngmres_core::Result<ngmres_core::bounds::BoundReport>) {
        match rep {
            Ok(r) => {
                self.count += 1;
                let excess = r.observed_value - r.bound_value;
                self.worst = self.worst.max(excess);
                if !r.satisfied && self.failure.is_none() {
                    self.failure = Some(format!(
                        "{at}: observed {:.6e} > bound {:.6e}",
                        r.observed_value, r.bound_value
                    ));
                }
            }
            Err(e) => {
                if self.failure.is_none() {
                    self.failure = Some(format!("{at}: {e}"));
                }
            }
        }
    }

    fn finish(self, slack: f64) -> CheckOutcome {
        let pass = self.failure.is_none() && self.count > 0;
        let detail = self.failure.unwrap_or_else(|| {
            format!(
                "{} evaluations, largest observed - bound {:.3e}",
                self.count, self.worst
            )
        });
        CheckOutcome::new(self.name, self.worst, slack, pass, detail)
    }
}

/// Richardson steps taken before each one-step NGMRES check.
const RICHARDSON_STEPS: usize = 12;
/// Largest `m = k` window checked against the discrete min-max factor.
const MAX_FULL_WINDOW: usize = 6;
const BOUND_ITERS: usize = 20;
/// The bounds concern the exact least-squares minimizer; the default
/// truncation at √ε floors residuals well above small χ values.
const BOUND_RANK_TOL: f64 = 1e-14;

fn bounds_trial(trial: usize, rng: &mut ChaCha8Rng) -> Result<(String, Vec<CheckOutcome>)> {
    let eigcond = [1.0, 5.0, 20.0][trial % 3];
    let n = rng.random_range(6..=20);
    let seed: u64 = rng.random();
    let (p, spec) = random_diagonalizable(n, (0.2, 0.8), eigcond, seed)?;
    let label = format!("diag:n={n},lo=0.2,hi=0.8,eigcond={eigcond},seed={seed}");
    let map = p.map();
    let slack = ngmres_core::bounds::BOUND_SLACK;
    let spd = spec.is_symmetric;
    let exact = p.exact_solution.as_ref().context("exact solution")?;

    // Richardson iterates u_0 .. u_K, then one NGMRES(m) step from u_k
    let mut iterates = vec![p.u0.clone()];
    for _ in 0..RICHARDSON_STEPS {
        let next = richardson_step(&map, iterates.last().expect("non-empty"))?;
        iterates.push(next);
    }
    let residuals: Vec<DVector<f64>> = iterates.iter().map(|u| residual(&map, u)).collect::<Result<_, _>>()?;
    let r0 = residuals[0].norm();

    let mut one_step = BoundTally::new(if spd { "one_step_spd" } else { "one_step_diag" });
    let mut weighted = BoundTally::new("weighted_error_spd");
    let mut full = BoundTally::new("full_window");
    for m in 0..=MAX_FULL_WINDOW {
        let last_k = if m <= 2 { RICHARDSON_STEPS } else { m };
        for k in m..=last_k {
            let window = IterationWindow::from_iterates(&map, Capacity::Finite(m), &iterates[k - m..=k])?;
            let step = ngmres_step_with(&map, &window, BOUND_RANK_TOL)?;
            let observed = residual(&map, &step.new_iterate)?.norm();
            let at = format!("m={m},k={k}");
            if m == k {
                full.add(&at, evaluate_one_step_bound(&spec, m, k, observed, r0));
                continue;
            }
            let mr = &residuals[k] - apply(map.operator(), &residuals[k])?;
            one_step.add(&at, evaluate_one_step_bound(&spec, m, k, observed, mr.norm()));
            if spd {
                let (e_next, e_k) = (&step.new_iterate - exact, &iterates[k] - exact);
                weighted.add(&at, evaluate_weighted_error_bound(&spec, m, k, &e_next, &e_k));
            }
        }
    }
    let mut checks = vec![one_step.finish(slack), full.finish(slack)];
    if spd {
        checks.push(weighted.finish(slack));
    }
    checks.extend(angmres_bound_checks(&map, &p.u0, &spec)?);
    Ok((label, checks))
}

fn angmres_bound_checks(map: &FixedPointMap, u0: &DVector<f64>, spec: &SpectralData) -> Result<Vec<CheckOutcome>> {
    let slack = ngmres_core::bounds::BOUND_SLACK;
    let cfg = RunConfig::default().with_max_iter(BOUND_ITERS).keeping_iterates();
    let mut short = BoundTally::new("angmres_short_window");
    let mut matched = BoundTally::new("angmres_matched_window");
    let mut kappa = BoundTally::new("angmres_kappa_form");
    for (m, p) in [(0usize, 2usize), (1, 3), (1, 4), (1, 2), (2, 3)] {
        let h = run_angmres(map, u0, AlternatingSchedule::new(Capacity::Finite(m), p)?, &cfg)?;
        let its = h.iterates.as_ref().context("iterates were not kept")?;
        let rs: Vec<DVector<f64>> = its.iter().map(|u| residual(map, u)).collect::<Result<_, _>>()?;
        let r0 = rs[0].norm();
        for j in 1..=(rs.len() - 1) / p {
            let at = format!("m={m},p={p},j={j}");
            let rep = evaluate_angmres_bound(spec, m, p, j, rs[j * p].norm(), r0);
            if m + 1 < p {
                short.add(&at, rep.map(|b| b.primary));
            } else {
                if let Ok(b) = &rep {
                    if let Some(kf) = b.kappa_form {
                        kappa.add(&at, Ok(kf));
                    }
                }
                matched.add(&at, rep.map(|b| b.primary));
            }
        }
    }
    let mut out = vec![short.finish(slack), matched.finish(slack)];
    if spec.a_is_spd() {
        out.push(kappa.finish(slack));
    }
    Ok(out)
}

fn span_trial(trial: usize, rng: &mut ChaCha8Rng) -> Result<(String, Vec<CheckOutcome>)> {
    let n = rng.random_range(10..=30);
    let seed = rng.random();
    // clustered non-normal spectra push the difference basis past cond 1e9 at
    // j = 10, where a 1e-8 angle is below rounding
    let kind = if trial.is_multiple_of(2) {
        ProblemKind::RandomSpd {
            n,
            spectrum: (0.05, 1.95),
            seed,
        }
    } else {
        ProblemKind::RandomGeneral { n, seed }
    };
    let (label, p) = build_kind(kind)?;
    let map = p.map();
    let mut worst = 0.0f64;
    let mut reached = 0;
    let mut failure = None;
    for j in 1..=10 {
        match krylov_span_check(&map, &p.u0, j) {
            Ok(angle) => {
                worst = worst.max(angle);
                reached = j;
            }
            // j beyond the grade
            Err(CoreError::SpanRankDeficient { .. }) => break,
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        }
    }
    let check = match failure {
        Some(e) => CheckOutcome::error("principal_angle", e),
        None => CheckOutcome::new(
            "principal_angle",
            worst,
            SPAN_TOL,
            reached > 0 && worst <= SPAN_TOL,
            format!("j = 1..{reached}, largest principal angle {worst:.3e}"),
        ),
    };
    Ok((label, vec![check]))
}

fn multisecant_trial(trial: usize, rng: &mut ChaCha8Rng) -> Result<(String, Vec<CheckOutcome>)> {
    let n = rng.random_range(4..=12);
    let depth = rng.random_range(0..=3usize).min(n - 1);
    let (label, p) = build_kind(mixed_kind(trial, rng, n))?;
    let map = p.map();
    let iterates: Vec<DVector<f64>> = (0..=depth)
        .map(|_| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)))
        .collect();
    let window = IterationWindow::from_iterates(&map, Capacity::Finite(depth), &iterates)?;
    let name = format!("window_depth_{depth}");
    let check = match ngmres_step(&map, &window).and_then(|s| verify_multisecant(&map, &window, &s)) {
        Ok(gap) => CheckOutcome::at_most(name, gap, MULTISECANT_TOL, format!("relative discrepancy {gap:.3e}")),
        Err(e) => CheckOutcome::error(name, e),
    };
    Ok((label, vec![check]))
}

/// `(m, p)` pairs of the contraction suite.
pub const CONTRACTION_METHODS: [(Capacity, usize); 3] = [
    (Capacity::Finite(1), 3),
    (Capacity::Finite(2), 3),
    (Capacity::Unbounded, 4),
];

fn contraction_trial(_trial: usize, rng: &mut ChaCha8Rng) -> Result<(String, Vec<CheckOutcome>)> {
    let n = rng.random_range(5..=30);
    let c_target: f64 = rng.random_range(0.5..0.95);
    let seed = rng.random();
    let kind = ProblemKind::RandomSpd {
        n,
        spectrum: (1.0 - c_target, 1.0 + c_target),
        seed,
    };
    let (label, p) = build_kind(kind)?;
    let a = p.operator.to_dense().context("dense operator")?;
    let m = DMatrix::identity(n, n) - a;
    let c = spectral_data_from_dense(&m)?.m_norm;
    let map = p.map();
    let cfg = RunConfig::default().with_max_iter(60);
    let mut checks = Vec::new();
    for (depth, period) in CONTRACTION_METHODS {
        let name = format!("angmres_m{}_p{period}", cap_name(depth));
        let run = AlternatingSchedule::new(depth, period).and_then(|s| run_angmres(&map, &p.u0, s, &cfg));
        checks.push(match run {
            Ok(h) => {
                let worst = h
                    .records
                    .windows(2)
                    .map(|w| w[1].residual_norm / (c * w[0].residual_norm))
                    .fold(0.0, f64::max);
                CheckOutcome::at_most(
                    name,
                    worst,
                    1.0 + MONOTONE_SLACK,
                    format!("|M| = {c:.4}, largest |r_k| / (|M| |r_(k-1)|) = {worst:.12}"),
                )
            }
            Err(e) => CheckOutcome::error(name, e),
        });
    }
    Ok((label, checks))
}
