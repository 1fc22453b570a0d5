//! Alternating NGMRES, aNGMRES(m, p): Richardson steps with an NGMRES(m) step
//! at every index `k` with `k mod p == 0`.
//!
//! One window is kept for the whole run and every iterate enters it, so the
//! NGMRES step at `k` sees the trailing `min(k-1, m) + 1` iterates regardless
//! of how they were produced.

use std::ops::Range;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::iterate::{
    status_to_termination, ConvergenceHistory, FixedPointMap, Recorder, RunConfig, StepKind, Termination,
};
use crate::linops::two_norm;
use crate::ngmres::{step, Capacity, IterationWindow, Parametrization};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlternatingSchedule {
    period: usize,
    depth: Capacity,
}

impl AlternatingSchedule {
    pub fn new(depth: Capacity, period: usize) -> Result<Self> {
        if period == 0 {
            return Err(Error::InvalidArgument("period p must be at least 1".into()));
        }
        Ok(Self { period, depth })
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn depth(&self) -> Capacity {
        self.depth
    }

    /// Step `k` (`k >= 1`) is an NGMRES step iff `k mod p == 0`.
    pub fn is_ngmres_step(&self, k: usize) -> bool {
        k >= 1 && k.is_multiple_of(self.period)
    }
}

pub fn run_angmres(
    map: &FixedPointMap,
    u0: &DVector<f64>,
    sched: AlternatingSchedule,
    cfg: &RunConfig,
) -> Result<ConvergenceHistory> {
    run_angmres_with(map, u0, sched, cfg, Parametrization::Beta)
}

pub fn run_angmres_with(
    map: &FixedPointMap,
    u0: &DVector<f64>,
    sched: AlternatingSchedule,
    cfg: &RunConfig,
    form: Parametrization,
) -> Result<ConvergenceHistory> {
    cfg.validate()?;
    map.check_len(u0)?;
    let r0 = map.residual_of(u0);
    let mut rec = Recorder::start(map, u0, two_norm(&r0), cfg);
    if let Some(t) = status_to_termination(rec.push(0, u0, two_norm(&r0), StepKind::Initial)) {
        return Ok(rec.finish(t));
    }
    let mut window = IterationWindow::new(sched.depth);
    window.push(u0.clone(), r0);
    for k in 1..=rec.max_iter() {
        let (u, r, kind) = if sched.is_ngmres_step(k) {
            let rep = step(map, &window, form)?;
            let r = cfg.residual.after_step(map, &rep.new_iterate, rep.new_residual);
            (rep.new_iterate, r, StepKind::Ngmres)
        } else {
            let prev = window.newest().expect("window holds the current iterate");
            let u = &prev.iterate - &prev.residual;
            let r = cfg.residual.after_step(map, &u, map.apply_m(&prev.residual));
            (u, r, StepKind::FixedPoint)
        };
        let status = rec.push(k, &u, two_norm(&r), kind);
        if let Some(t) = status_to_termination(status) {
            return Ok(rec.finish(t));
        }
        window.push(u, r);
    }
    Ok(rec.finish(Termination::MaxIter))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceEntry {
    pub index: usize,
    /// `|a - g| / max(a, g)`, or 0 when both runs are below their convergence thresholds.
    pub residual_discrepancy: f64,
    /// `‖u_a - u_g‖ / max(‖u_g‖, ‖u_a‖)` when both histories retained iterates.
    pub iterate_discrepancy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub period: usize,
    pub tol: f64,
    pub entries: Vec<EquivalenceEntry>,
    /// First compared index whose residual discrepancy exceeds `tol`.
    pub first_violation: Option<usize>,
    pub max_residual_discrepancy: f64,
    pub max_iterate_discrepancy: Option<f64>,
}

impl EquivalenceReport {
    pub fn holds(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Compares two histories of the same problem at indices `p, 2p, ...` up to
/// the shorter history's length.
pub fn check_periodic_equivalence(
    hist_a: &ConvergenceHistory,
    hist_g: &ConvergenceHistory,
    p: usize,
    tol: f64,
) -> Result<EquivalenceReport> {
    if p == 0 {
        return Err(Error::InvalidArgument("period must be at least 1".into()));
    }
    if hist_a.fingerprint != hist_g.fingerprint {
        return Err(Error::FingerprintMismatch {
            left: hist_a.fingerprint.to_string(),
            right: hist_g.fingerprint.to_string(),
        });
    }
    let last = hist_a.last_index().min(hist_g.last_index());
    let floor = hist_a.threshold.max(hist_g.threshold);
    let mut entries = Vec::new();
    let mut first_violation = None;
    let mut max_res = 0.0f64;
    let mut max_it: Option<f64> = None;
    for index in (p..=last).step_by(p) {
        let a = hist_a.records[index].residual_norm;
        let g = hist_g.records[index].residual_norm;
        let residual_discrepancy = if a <= floor && g <= floor {
            0.0
        } else {
            (a - g).abs() / a.max(g)
        };
        let iterate_discrepancy = match (&hist_a.iterates, &hist_g.iterates) {
            (Some(ia), Some(ig)) => {
                let (ua, ug) = (&ia[index], &ig[index]);
                let scale = two_norm(ua).max(two_norm(ug));
                let d = two_norm(&(ua - ug));
                Some(if scale > 0.0 { d / scale } else { d })
            }
            _ => None,
        };
        if residual_discrepancy > tol && first_violation.is_none() {
            first_violation = Some(index);
        }
        max_res = max_res.max(residual_discrepancy);
        if let Some(d) = iterate_discrepancy {
            max_it = Some(max_it.map_or(d, |m| m.max(d)));
        }
        entries.push(EquivalenceEntry {
            index,
            residual_discrepancy,
            iterate_discrepancy,
        });
    }
    Ok(EquivalenceReport {
        period: p,
        tol,
        entries,
        first_violation,
        max_residual_discrepancy: max_res,
        max_iterate_discrepancy: max_it,
    })
}

/// Maximal runs of consecutive indices whose residual norms are pairwise
/// within `tol` (relative). Runs of a single index are not reported.
pub fn detect_stagnation(hist: &ConvergenceHistory, tol: f64) -> Vec<Range<usize>> {
    let norms = hist.residual_norms();
    let mut runs = Vec::new();
    let mut start = 0;
    while start < norms.len() {
        let (mut lo, mut hi) = (norms[start], norms[start]);
        let mut end = start + 1;
        while end < norms.len() {
            let (nlo, nhi) = (lo.min(norms[end]), hi.max(norms[end]));
            if nhi - nlo > tol * nhi {
                break;
            }
            lo = nlo;
            hi = nhi;
            end += 1;
        }
        if end - start >= 2 {
            runs.push(hist.records[start].index..hist.records[end - 1].index + 1);
        }
        start = if end - start >= 2 { end } else { start + 1 };
    }
    runs
}

/// Checks `|‖r_{k+period}‖ - ‖r_k‖| <= tol ‖r₀‖` for every `k >= from` that
/// has a partner in the history.
pub fn has_period(hist: &ConvergenceHistory, period: usize, from: usize, tol: f64) -> bool {
    let norms = hist.residual_norms();
    if period == 0 || norms.len() <= from + period {
        return false;
    }
    let r0 = norms[0];
    (from..norms.len() - period).all(|k| (norms[k + period] - norms[k]).abs() <= tol * r0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmres::{run_gmres_full, run_gmres_restarted};
    use crate::ngmres::run_ngmres;
    use crate::problems::{build, ProblemKind, ProblemSpec, U0Policy};

    fn circulant() -> crate::problems::LinearProblem {
        build(&ProblemSpec::new(ProblemKind::CirculantShift(36), U0Policy::Ones)).unwrap()
    }

    fn block() -> crate::problems::LinearProblem {
        build(&ProblemSpec::new(
            ProblemKind::BlockShift { ell: 3, q: 5 },
            U0Policy::Zero,
        ))
        .unwrap()
    }

    #[test]
    fn schedule_branches() {
        let s = AlternatingSchedule::new(Capacity::Finite(3), 4).unwrap();
        let kinds: Vec<bool> = (1..=9).map(|k| s.is_ngmres_step(k)).collect();
        assert_eq!(kinds, [false, false, false, true, false, false, false, true, false]);
        assert!(!s.is_ngmres_step(0));
        assert!(AlternatingSchedule::new(Capacity::Unbounded, 0).is_err());
    }

    #[test]
    fn step_kinds_follow_schedule() {
        let p = circulant();
        let s = AlternatingSchedule::new(Capacity::Finite(2), 3).unwrap();
        let h = run_angmres(&p.map(), &p.u0, s, &RunConfig::default().with_max_iter(20)).unwrap();
        for rec in &h.records[1..] {
            assert_eq!(rec.step_kind == StepKind::Ngmres, rec.index % 3 == 0, "k={}", rec.index);
        }
    }

    #[test]
    fn period_one_is_ngmres() {
        let p = circulant();
        let cfg = RunConfig::default().with_max_iter(15);
        let a = run_angmres(
            &p.map(),
            &p.u0,
            AlternatingSchedule::new(Capacity::Finite(2), 1).unwrap(),
            &cfg,
        )
        .unwrap();
        let n = run_ngmres(&p.map(), &p.u0, Capacity::Finite(2), &cfg).unwrap();
        assert_eq!(a.residual_norms(), n.residual_norms());
    }

    #[test]
    fn angmres_3_4_matches_gmres4_on_circulant() {
        let p = circulant();
        let cfg = RunConfig::default().with_max_iter(60);
        let a = run_angmres(
            &p.map(),
            &p.u0,
            AlternatingSchedule::new(Capacity::Finite(3), 4).unwrap(),
            &cfg,
        )
        .unwrap();
        let g = run_gmres_restarted(&p.map(), &p.u0, 4, &cfg).unwrap();
        let rep = check_periodic_equivalence(&a, &g, 4, 1e-8).unwrap();
        assert!(rep.holds(), "{rep:?}");
        assert!(rep.entries.len() >= 9);
    }

    #[test]
    fn angmres_unbounded_terminates_at_multiple_of_period() {
        let p = circulant();
        let cfg = RunConfig::default().with_max_iter(60);
        for (period, expected) in [(4, 36), (5, 40)] {
            let s = AlternatingSchedule::new(Capacity::Unbounded, period).unwrap();
            let h = run_angmres(&p.map(), &p.u0, s, &cfg).unwrap();
            assert!(h.converged());
            assert_eq!(h.last_index(), expected, "p = {period}");
        }
    }

    #[test]
    fn equivalence_with_self_is_exact() {
        let p = circulant();
        let h = run_angmres(
            &p.map(),
            &p.u0,
            AlternatingSchedule::new(Capacity::Finite(1), 3).unwrap(),
            &RunConfig::default().with_max_iter(20).keeping_iterates(),
        )
        .unwrap();
        for period in 1..5 {
            let rep = check_periodic_equivalence(&h, &h, period, 0.0).unwrap();
            assert!(rep.holds());
            assert_eq!(rep.max_residual_discrepancy, 0.0);
            assert_eq!(rep.max_iterate_discrepancy, Some(0.0));
        }
    }

    #[test]
    fn equivalence_rejects_different_problems() {
        let cfg = RunConfig::default().with_max_iter(5);
        let a = run_gmres_restarted(&circulant().map(), &circulant().u0, 2, &cfg).unwrap();
        let b = run_gmres_restarted(&block().map(), &block().u0, 2, &cfg).unwrap();
        assert!(matches!(
            check_periodic_equivalence(&a, &b, 2, 1e-8),
            Err(Error::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn block_shift_gmres_stagnation_runs() {
        let p = block();
        let g = run_gmres_full(&p.map(), &p.u0, &RunConfig::default().with_max_iter(80)).unwrap();
        let runs = detect_stagnation(&g.history, 1e-10);
        assert!(!runs.is_empty());
        assert!(runs.iter().all(|r| r.len() == 3), "{runs:?}");
    }

    #[test]
    fn strictly_decreasing_has_no_stagnation() {
        let p = circulant();
        let g = run_gmres_full(&p.map(), &p.u0, &RunConfig::default().with_max_iter(60)).unwrap();
        assert!(detect_stagnation(&g.history, 1e-10).is_empty());
    }

    #[test]
    fn block_shift_period_two_pattern() {
        let p = block();
        let s = AlternatingSchedule::new(Capacity::Unbounded, 2).unwrap();
        let h = run_angmres(&p.map(), &p.u0, s, &RunConfig::default().with_max_iter(80)).unwrap();
        assert!(!h.converged());
        assert!(has_period(&h, 2, 2, 1e-8));
        assert!(!has_period(&h, 1, 2, 1e-8));
    }
}
