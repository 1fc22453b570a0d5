//! Reproduction of the reference convergence experiments.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use ngmres_core::angmres::{check_periodic_equivalence, detect_stagnation, has_period};
use ngmres_core::ngmres::Parametrization;
use ngmres_core::problems::{build, ProblemKind, ProblemSpec, U0Policy};
use ngmres_core::{Capacity, ConvergenceHistory, RunConfig};

use crate::history::write_history_file;
use crate::parse::Method;
use crate::plot::{render_svg, Series};
use crate::report::{write_json, Claim, ComparisonSummary, ExperimentResult, MethodSummary};

/// Equivalence tolerance for the small exact-arithmetic figures.
pub const EXACT_TOL: f64 = 1e-8;
/// Equivalence tolerance for the Laplacian figure.
pub const LAPLACIAN_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig1,
    Fig2Left,
    Fig2Right,
    Fig3,
    Fig4,
    Fig5,
}

impl Figure {
    pub const ALL: [Figure; 6] = [
        Figure::Fig1,
        Figure::Fig2Left,
        Figure::Fig2Right,
        Figure::Fig3,
        Figure::Fig4,
        Figure::Fig5,
    ];

    pub fn max_iter(self) -> usize {
        match self {
            Figure::Fig1 | Figure::Fig2Left | Figure::Fig2Right => 60,
            Figure::Fig3 | Figure::Fig4 => 80,
            Figure::Fig5 => 200,
        }
    }

    pub fn problem(self, seed: u64) -> ProblemSpec {
        match self {
            Figure::Fig1 | Figure::Fig2Left | Figure::Fig2Right => {
                ProblemSpec::new(ProblemKind::CirculantShift(36), U0Policy::Ones)
            }
            Figure::Fig3 | Figure::Fig4 => ProblemSpec::new(ProblemKind::BlockShift { ell: 3, q: 5 }, U0Policy::Zero),
            Figure::Fig5 => ProblemSpec::new(ProblemKind::Laplacian2D(64), U0Policy::RandomSeeded(seed)),
        }
    }

    pub fn problem_label(self) -> &'static str {
        match self {
            Figure::Fig1 | Figure::Fig2Left | Figure::Fig2Right => "circulant:36",
            Figure::Fig3 | Figure::Fig4 => "block:3,5",
            Figure::Fig5 => "laplacian:64",
        }
    }

    pub fn methods(self) -> Vec<Method> {
        let inf = Capacity::Unbounded;
        match self {
            Figure::Fig1 => vec![
                Method::Angmres {
                    m: Capacity::Finite(3),
                    p: 4,
                },
                Method::GmresRestarted(4),
            ],
            Figure::Fig2Left => vec![Method::Angmres { m: inf, p: 4 }, Method::GmresFull],
            Figure::Fig2Right => vec![Method::Angmres { m: inf, p: 5 }, Method::GmresFull],
            Figure::Fig3 => vec![
                Method::Angmres {
                    m: Capacity::Finite(2),
                    p: 3,
                },
                Method::GmresRestarted(3),
            ],
            Figure::Fig4 => vec![
                Method::Angmres { m: inf, p: 1 },
                Method::Angmres { m: inf, p: 2 },
                Method::Angmres { m: inf, p: 3 },
                Method::Angmres { m: inf, p: 4 },
                Method::GmresFull,
            ],
            Figure::Fig5 => vec![Method::Angmres { m: inf, p: 3 }, Method::GmresFull, Method::FixedPoint],
        }
    }

    pub fn title(self) -> String {
        let names: Vec<String> = self.methods().iter().map(ToString::to_string).collect();
        format!("{} on {}", names.join(" vs "), self.problem_label())
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2Left => "fig2l",
            Figure::Fig2Right => "fig2r",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
        })
    }
}

impl FromStr for Figure {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .into_iter()
            .find(|f| f.to_string() == s)
            .ok_or_else(|| anyhow!("unknown figure '{s}' (expected fig1, fig2l, fig2r, fig3, fig4 or fig5)"))
    }
}

/// Histories of every method of a figure, in `Figure::methods` order.
pub struct FigureRun {
    pub figure: Figure,
    pub dimension: usize,
    pub histories: Vec<(Method, ConvergenceHistory)>,
}

impl FigureRun {
    pub fn history(&self, m: &Method) -> &ConvergenceHistory {
        &self
            .histories
            .iter()
            .find(|(k, _)| k == m)
            .expect("method belongs to figure")
            .1
    }
}

/// Runs the figure's methods concurrently.
pub fn run_figure(fig: Figure, seed: u64) -> Result<FigureRun> {
    let problem = build(&fig.problem(seed))?;
    let map = problem.map();
    let cfg = RunConfig::default().with_max_iter(fig.max_iter());
    let methods = fig.methods();
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = methods
            .iter()
            .map(|m| {
                let (map, u0, cfg) = (&map, &problem.u0, &cfg);
                s.spawn(move || m.run(map, u0, cfg, Parametrization::Beta))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("solver thread panicked"))
            .collect()
    });
    let mut histories = Vec::with_capacity(methods.len());
    for (m, res) in methods.into_iter().zip(results) {
        histories.push((m, res.with_context(|| format!("running {m}"))?));
    }
    Ok(FigureRun {
        figure: fig,
        dimension: problem.dim(),
        histories,
    })
}

fn convergence_index(h: &ConvergenceHistory) -> Option<usize> {
    h.first_index_below(1e-10 * h.initial_residual_norm())
}

fn fmt_index(i: Option<usize>) -> String {
    i.map_or_else(|| "none".to_string(), |i| i.to_string())
}

fn converges_at(id: &str, h: &ConvergenceHistory, m: &Method, expected: usize) -> Claim {
    let got = convergence_index(h);
    Claim::new(
        id,
        got == Some(expected),
        format!("{m} reaches 1e-10*|r0| at {} (expected {expected})", fmt_index(got)),
    )
}

fn never_converges(id: &str, h: &ConvergenceHistory, m: &Method) -> Claim {
    let got = convergence_index(h);
    Claim::new(
        id,
        got.is_none(),
        format!(
            "{m} convergence index {} within {} iterations (expected none)",
            fmt_index(got),
            h.last_index()
        ),
    )
}

/// Coincidence claim plus its comparison record.
fn coincide(
    id: &str,
    run: &FigureRun,
    a: &Method,
    g: &Method,
    p: usize,
    tol: f64,
) -> Result<(Claim, ComparisonSummary)> {
    let rep = check_periodic_equivalence(run.history(a), run.history(g), p, tol)?;
    let detail = format!(
        "{a} vs {g} at multiples of {p}: {} indices, max rel discrepancy {:.3e} (tol {tol:e}){}",
        rep.entries.len(),
        rep.max_residual_discrepancy,
        rep.first_violation
            .map_or_else(String::new, |k| format!(", first violation at {k}"))
    );
    Ok((
        Claim::new(id, rep.holds() && !rep.entries.is_empty(), detail),
        ComparisonSummary::new(a.to_string(), g.to_string(), &rep),
    ))
}

/// Evaluates the figure's expected-behaviour claims.
pub fn claims(run: &FigureRun) -> Result<(Vec<Claim>, Vec<ComparisonSummary>)> {
    let inf = Capacity::Unbounded;
    let mut claims = Vec::new();
    let mut comps = Vec::new();
    let mut push = |(c, s): (Claim, ComparisonSummary)| {
        claims.push(c);
        comps.push(s);
    };
    let mut extra = Vec::new();
    match run.figure {
        Figure::Fig1 => {
            let (a, g) = (
                Method::Angmres {
                    m: Capacity::Finite(3),
                    p: 4,
                },
                Method::GmresRestarted(4),
            );
            push(coincide("fig1.coincide_4j", run, &a, &g, 4, EXACT_TOL)?);
        }
        Figure::Fig2Left => {
            let (a, g) = (Method::Angmres { m: inf, p: 4 }, Method::GmresFull);
            push(coincide("fig2l.coincide_4j", run, &a, &g, 4, EXACT_TOL)?);
            extra.push(converges_at("fig2l.angmres_converges_36", run.history(&a), &a, 36));
            extra.push(converges_at("fig2l.gmres_converges_36", run.history(&g), &g, 36));
        }
        Figure::Fig2Right => {
            let (a, g) = (Method::Angmres { m: inf, p: 5 }, Method::GmresFull);
            push(coincide("fig2r.coincide_5j", run, &a, &g, 5, EXACT_TOL)?);
            extra.push(converges_at("fig2r.angmres_converges_40", run.history(&a), &a, 40));
            extra.push(converges_at("fig2r.gmres_converges_36", run.history(&g), &g, 36));
        }
        Figure::Fig3 => {
            let (a, g) = (
                Method::Angmres {
                    m: Capacity::Finite(2),
                    p: 3,
                },
                Method::GmresRestarted(3),
            );
            push(coincide("fig3.coincide_3j", run, &a, &g, 3, EXACT_TOL)?);
            let plateaus = detect_stagnation(run.history(&g), 1e-10);
            let len3 = plateaus.iter().filter(|r| r.len() == 3).count();
            extra.push(Claim::new(
                "fig3.gmres3_plateaus_len3",
                len3 > 0,
                format!("{g} has {} stagnation plateaus, {len3} of length 3", plateaus.len()),
            ));
        }
        Figure::Fig4 => {
            let a1 = Method::Angmres { m: inf, p: 1 };
            let h1 = run.history(&a1);
            let r0 = h1.initial_residual_norm();
            let drift = h1
                .records
                .iter()
                .map(|r| (r.residual_norm - r0).abs() / r0)
                .fold(0.0, f64::max);
            extra.push(Claim::new(
                "fig4.p1_flat",
                h1.last_index() >= 60 && drift <= 1e-10,
                format!(
                    "{a1} over {} iterations: max relative drift {drift:.3e} (tol 1e-10)",
                    h1.last_index()
                ),
            ));
            extra.push(never_converges("fig4.p1_no_convergence", h1, &a1));
            let a2 = Method::Angmres { m: inf, p: 2 };
            let h2 = run.history(&a2);
            extra.push(Claim::new(
                "fig4.p2_period2",
                has_period(h2, 2, 2, 1e-8),
                format!(
                    "{a2}: |r_(k+2)| - |r_k| within 1e-8*|r0| for k >= 2 over {} iterations",
                    h2.last_index()
                ),
            ));
            extra.push(never_converges("fig4.p2_no_convergence", h2, &a2));
            let a3 = Method::Angmres { m: inf, p: 3 };
            extra.push(converges_at("fig4.p3_converges_30", run.history(&a3), &a3, 30));
            let a4 = Method::Angmres { m: inf, p: 4 };
            extra.push(converges_at("fig4.p4_converges_40", run.history(&a4), &a4, 40));
            let g = Method::GmresFull;
            extra.push(converges_at("fig4.gmres_converges_30", run.history(&g), &g, 30));
        }
        Figure::Fig5 => {
            let (a, g) = (Method::Angmres { m: inf, p: 3 }, Method::GmresFull);
            push(coincide("fig5.coincide_3j", run, &a, &g, 3, LAPLACIAN_TOL)?);
            let fp = Method::FixedPoint;
            extra.push(never_converges("fig5.fixed_point_diverges", run.history(&fp), &fp));
        }
    }
    claims.extend(extra);
    Ok((claims, comps))
}

/// Runs a figure and writes per-method CSVs, `plot.svg`, `verdict.txt` and
/// `result.json` into `out_dir`.
pub fn reproduce(fig: Figure, seed: u64, out_dir: &Path) -> Result<ExperimentResult> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let run = run_figure(fig, seed)?;
    let (claims, comparisons) = claims(&run)?;

    let mut methods = Vec::new();
    for (m, h) in &run.histories {
        let name = format!("{}.csv", m.slug());
        write_history_file(&out_dir.join(&name), h)?;
        methods.push(MethodSummary::new(m.to_string(), h, Some(name)));
    }
    let labels: Vec<String> = run.histories.iter().map(|(m, _)| m.to_string()).collect();
    let series: Vec<Series<'_>> = run
        .histories
        .iter()
        .zip(&labels)
        .map(|((_, h), label)| Series {
            label,
            points: h.records.iter().map(|r| (r.index, r.residual_norm)).collect(),
        })
        .collect();
    std::fs::write(out_dir.join("plot.svg"), render_svg(&fig.title(), &series))?;

    let verdict: String = claims.iter().map(|c| c.verdict_line() + "\n").collect();
    std::fs::write(out_dir.join("verdict.txt"), verdict)?;

    let fingerprint = run
        .histories
        .first()
        .map(|(_, h)| h.fingerprint.to_string())
        .unwrap_or_default();
    let result = ExperimentResult {
        name: fig.to_string(),
        problem: fig.problem_label().to_string(),
        dimension: run.dimension,
        fingerprint,
        methods,
        comparisons,
        bounds: Vec::new(),
        claims,
    };
    write_json(&out_dir.join("result.json"), &result)?;
    Ok(result)
}

/// Parses a `verdict.txt` into `(id, pass)` pairs.
pub fn read_verdict(text: &str) -> Result<Vec<(String, bool)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let mut parts = line.splitn(4, ' ');
        let (Some("CLAIM"), Some(id), Some(status)) = (parts.next(), parts.next(), parts.next()) else {
            bail!("line {}: malformed verdict '{line}'", i + 1);
        };
        let pass = match status {
            "PASS" => true,
            "FAIL" => false,
            other => bail!("line {}: bad status '{other}'", i + 1),
        };
        out.push((id.to_string(), pass));
    }
    Ok(out)
}
