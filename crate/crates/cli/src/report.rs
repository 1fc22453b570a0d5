//! JSON experiment records.

use std::path::Path;

use anyhow::{Context, Result};
use ngmres_core::angmres::EquivalenceReport;
use ngmres_core::bounds::BoundReport;
use ngmres_core::{ConvergenceHistory, Termination};
use serde::Serialize;

pub fn termination_label(t: Termination) -> &'static str {
    match t {
        Termination::Converged => "converged",
        Termination::MaxIter => "max_iter",
        Termination::Breakdown => "breakdown",
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub termination: &'static str,
    pub iterations: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub threshold: f64,
    /// First index at or below the threshold.
    pub converged_at: Option<usize>,
    pub wall_time_s: f64,
    pub csv: Option<String>,
}

impl MethodSummary {
    pub fn new(method: String, hist: &ConvergenceHistory, csv: Option<String>) -> Self {
        let last = hist.records.last().expect("history has the initial record");
        Self {
            method,
            termination: termination_label(hist.termination),
            iterations: hist.last_index(),
            initial_residual: hist.initial_residual_norm(),
            final_residual: last.residual_norm,
            threshold: hist.threshold,
            converged_at: hist.first_index_below(hist.threshold),
            wall_time_s: last.wall_time,
            csv,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonSummary {
    pub left: String,
    pub right: String,
    pub period: usize,
    pub tol: f64,
    pub compared_indices: usize,
    pub max_residual_discrepancy: f64,
    pub first_violation: Option<usize>,
    pub holds: bool,
}

impl ComparisonSummary {
    pub fn new(left: String, right: String, rep: &EquivalenceReport) -> Self {
        Self {
            left,
            right,
            period: rep.period,
            tol: rep.tol,
            compared_indices: rep.entries.len(),
            max_residual_discrepancy: rep.max_residual_discrepancy,
            first_violation: rep.first_violation,
            holds: rep.holds(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundSummary {
    pub name: String,
    pub bound: f64,
    pub observed: f64,
    pub satisfied: bool,
}

impl BoundSummary {
    pub fn new(name: impl Into<String>, rep: &BoundReport) -> Self {
        Self {
            name: name.into(),
            bound: rep.bound_value,
            observed: rep.observed_value,
            satisfied: rep.satisfied,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Claim {
    pub id: String,
    pub pass: bool,
    pub detail: String,
}

impl Claim {
    pub fn new(id: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            pass,
            detail: detail.into(),
        }
    }

    /// `CLAIM <id> PASS|FAIL <detail>`.
    pub fn verdict_line(&self) -> String {
        format!(
            "CLAIM {} {} {}",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.detail
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub name: String,
    pub problem: String,
    pub dimension: usize,
    /// SHA-256 of operator entries, right-hand side and initial guess.
    pub fingerprint: String,
    pub methods: Vec<MethodSummary>,
    pub comparisons: Vec<ComparisonSummary>,
    pub bounds: Vec<BoundSummary>,
    pub claims: Vec<Claim>,
}

impl ExperimentResult {
    pub fn all_claims_pass(&self) -> bool {
        self.claims.iter().all(|c| c.pass)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}
