//! Windowed NGMRES(m) applied to the Richardson map.
//!
//! A step takes the window `{u_{k-m_k}, ..., u_k}` (with stored residuals),
//! forms `q(u_k)` and `r(q(u_k)) = M r_k`, and minimizes
//!
//! ```text
//! ‖ r(q(u_k)) + Σ_i β_i (r(q(u_k)) - r(u_{k-i})) ‖,   i = 0..m_k
//! ```
//!
//! then sets `u_{k+1} = q(u_k) + Σ_i β_i (q(u_k) - u_{k-i})`. For an affine
//! `q` the minimized value is exactly `‖A u_{k+1} - b‖`.

use std::collections::VecDeque;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::iterate::{
    status_to_termination, ConvergenceHistory, FixedPointMap, Recorder, RunConfig, StepKind, Termination,
};
use crate::linops::{default_rank_tol, solve_lsq_min_norm, two_norm, TallMatrix};

/// Window depth `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Capacity {
    Finite(usize),
    Unbounded,
}

impl Capacity {
    /// Maximum number of stored entries (`m + 1`).
    pub fn max_entries(self) -> Option<usize> {
        match self {
            Capacity::Finite(m) => Some(m + 1),
            Capacity::Unbounded => None,
        }
    }
}

impl fmt::Display for Capacity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Capacity::Finite(m) => write!(f, "{m}"),
            Capacity::Unbounded => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowEntry {
    pub iterate: DVector<f64>,
    pub residual: DVector<f64>,
}

/// Trailing iterate/residual pairs, oldest first.
#[derive(Debug, Clone)]
pub struct IterationWindow {
    capacity: Capacity,
    entries: VecDeque<WindowEntry>,
}

impl IterationWindow {
    pub fn new(capacity: Capacity) -> Self {
        Self {
            capacity,
            entries: VecDeque::new(),
        }
    }

    /// Appends the newest pair, evicting the oldest when over capacity.
    pub fn push(&mut self, iterate: DVector<f64>, residual: DVector<f64>) {
        self.entries.push_back(WindowEntry { iterate, residual });
        if let Some(max) = self.capacity.max_entries() {
            while self.entries.len() > max {
                self.entries.pop_front();
            }
        }
    }

    /// Builds a window from iterates, computing each residual once.
    pub fn from_iterates(map: &FixedPointMap, capacity: Capacity, iterates: &[DVector<f64>]) -> Result<Self> {
        let mut w = Self::new(capacity);
        for u in iterates {
            map.check_len(u)?;
            w.push(u.clone(), map.residual_of(u));
        }
        Ok(w)
    }

    pub fn capacity(&self) -> Capacity {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `m_k`, the number of entries minus one.
    pub fn depth(&self) -> usize {
        self.entries.len().saturating_sub(1)
    }

    pub fn newest(&self) -> Option<&WindowEntry> {
        self.entries.back()
    }

    pub fn entries(&self) -> impl DoubleEndedIterator<Item = &WindowEntry> + ExactSizeIterator {
        self.entries.iter()
    }

    /// Entry `u_{k-i}` counted back from the newest (`i = 0` is `u_k`).
    fn back(&self, i: usize) -> &WindowEntry {
        &self.entries[self.entries.len() - 1 - i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NgmresStepReport {
    pub new_iterate: DVector<f64>,
    /// `M r_k + D c`, the least-squares residual vector; equals
    /// `A u_{k+1} - b` in exact arithmetic.
    pub new_residual: DVector<f64>,
    /// `β_0..β_{m_k}` for [`ngmres_step`], `γ_0..γ_{m_k}` for [`ngmres_step_gamma`].
    pub coefficients: DVector<f64>,
    /// Least-squares residual; equals `‖r_{k+1}‖` in exact arithmetic.
    pub predicted_residual_norm: f64,
    pub lsq_effective_rank: usize,
}

/// Which least-squares parametrization a driver uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parametrization {
    /// Differences against `q(u_k)`.
    #[default]
    Beta,
    /// Consecutive differences.
    Gamma,
}

struct StepInput<'a> {
    newest: &'a WindowEntry,
    q: DVector<f64>,
    mr: DVector<f64>,
}

fn prepare<'a>(map: &FixedPointMap, window: &'a IterationWindow) -> Result<StepInput<'a>> {
    let newest = window
        .newest()
        .ok_or_else(|| Error::InvalidArgument("NGMRES step needs a non-empty window".into()))?;
    map.check_len(&newest.iterate)?;
    // r(q(u_k)) = M r_k
    let mr = map.apply_m(&newest.residual);
    let q = &newest.iterate - &newest.residual;
    Ok(StepInput { newest, q, mr })
}

fn exact_hit(input: StepInput<'_>, width: usize) -> NgmresStepReport {
    NgmresStepReport {
        new_residual: input.mr,
        new_iterate: input.q,
        coefficients: DVector::zeros(width),
        predicted_residual_norm: 0.0,
        lsq_effective_rank: 0,
    }
}

/// One NGMRES(m) step in the β parametrization.
pub fn ngmres_step(map: &FixedPointMap, window: &IterationWindow) -> Result<NgmresStepReport> {
    ngmres_step_with(map, window, default_rank_tol())
}

pub fn ngmres_step_with(map: &FixedPointMap, window: &IterationWindow, rank_tol: f64) -> Result<NgmresStepReport> {
    let input = prepare(map, window)?;
    let width = window.len();
    if input.mr.iter().all(|v| *v == 0.0) {
        return Ok(exact_hit(input, width));
    }
    // column i: r(q(u_k)) - r(u_{k-i})
    let cols: Vec<DVector<f64>> = (0..width).map(|i| &input.mr - &window.back(i).residual).collect();
    let d = TallMatrix::from_columns(&cols)?;
    let sol = solve_lsq_min_norm(&d, &input.mr, rank_tol)?;

    let mut u = input.q.clone();
    for (i, beta) in sol.coefficients.iter().enumerate() {
        if *beta != 0.0 {
            u.axpy(*beta, &(&input.q - &window.back(i).iterate), 1.0);
        }
    }
    let r = &input.mr + d.as_matrix() * &sol.coefficients;
    Ok(NgmresStepReport {
        new_iterate: u,
        new_residual: r,
        coefficients: sol.coefficients,
        predicted_residual_norm: sol.residual_norm,
        lsq_effective_rank: sol.effective_rank,
    })
}

/// One NGMRES(m) step in the γ parametrization (`γ_j = Σ_{i≥j} β_i`).
pub fn ngmres_step_gamma(map: &FixedPointMap, window: &IterationWindow) -> Result<NgmresStepReport> {
    ngmres_step_gamma_with(map, window, default_rank_tol())
}

pub fn ngmres_step_gamma_with(
    map: &FixedPointMap,
    window: &IterationWindow,
    rank_tol: f64,
) -> Result<NgmresStepReport> {
    let input = prepare(map, window)?;
    let width = window.len();
    if input.mr.iter().all(|v| *v == 0.0) {
        return Ok(exact_hit(input, width));
    }
    // column 0: r(q(u_k)) - r(u_k); column i: r(u_{k-i+1}) - r(u_{k-i})
    let mut cols = Vec::with_capacity(width);
    cols.push(&input.mr - &input.newest.residual);
    for i in 1..width {
        cols.push(&window.back(i - 1).residual - &window.back(i).residual);
    }
    let d = TallMatrix::from_columns(&cols)?;
    let sol = solve_lsq_min_norm(&d, &input.mr, rank_tol)?;

    let mut u = input.q.clone();
    let g0 = sol.coefficients[0];
    if g0 != 0.0 {
        u.axpy(g0, &(&input.q - &input.newest.iterate), 1.0);
    }
    for i in 1..width {
        let g = sol.coefficients[i];
        if g != 0.0 {
            u.axpy(g, &(&window.back(i - 1).iterate - &window.back(i).iterate), 1.0);
        }
    }
    let r = &input.mr + d.as_matrix() * &sol.coefficients;
    Ok(NgmresStepReport {
        new_iterate: u,
        new_residual: r,
        coefficients: sol.coefficients,
        predicted_residual_norm: sol.residual_norm,
        lsq_effective_rank: sol.effective_rank,
    })
}

pub(crate) fn step(map: &FixedPointMap, window: &IterationWindow, form: Parametrization) -> Result<NgmresStepReport> {
    match form {
        Parametrization::Beta => ngmres_step(map, window),
        Parametrization::Gamma => ngmres_step_gamma(map, window),
    }
}

/// NGMRES(m): every iteration is an NGMRES step.
pub fn run_ngmres(map: &FixedPointMap, u0: &DVector<f64>, m: Capacity, cfg: &RunConfig) -> Result<ConvergenceHistory> {
    run_ngmres_with(map, u0, m, cfg, Parametrization::Beta)
}

pub fn run_ngmres_with(
    map: &FixedPointMap,
    u0: &DVector<f64>,
    m: Capacity,
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
    let mut window = IterationWindow::new(m);
    window.push(u0.clone(), r0);
    for k in 1..=rec.max_iter() {
        let rep = step(map, &window, form)?;
        let r = cfg.residual.after_step(map, &rep.new_iterate, rep.new_residual);
        let status = rec.push(k, &rep.new_iterate, two_norm(&r), StepKind::Ngmres);
        if let Some(t) = status_to_termination(status) {
            return Ok(rec.finish(t));
        }
        window.push(rep.new_iterate, r);
    }
    Ok(rec.finish(Termination::MaxIter))
}

/// Checks `r_{k+1} = (I - A W_k) M r_k` with
/// `W_k = S_k (S_kᵀ AᵀA S_k)⁻¹ S_kᵀ Aᵀ` formed densely.
///
/// Returns `‖r_{k+1} - (I - A W_k) M r_k‖ / ‖r_k‖` with `r_{k+1} = A u_{k+1} - b`
/// evaluated directly.
pub fn verify_multisecant(map: &FixedPointMap, window: &IterationWindow, step: &NgmresStepReport) -> Result<f64> {
    let a = map
        .operator()
        .to_dense()
        .ok_or_else(|| Error::InvalidArgument("multisecant check needs a dense materialization".into()))?;
    let newest = window
        .newest()
        .ok_or_else(|| Error::InvalidArgument("empty window".into()))?;
    let width = window.len();
    if step.lsq_effective_rank < width {
        return Err(Error::RankDeficientWindow {
            rank: step.lsq_effective_rank,
            width,
        });
    }
    // S_k = [u_{k-m_k+1} - u_{k-m_k}, ..., u_k - u_{k-1}, q(u_k) - u_k]
    let mut cols: Vec<DVector<f64>> = window
        .entries()
        .zip(window.entries().skip(1))
        .map(|(older, newer)| &newer.iterate - &older.iterate)
        .collect();
    cols.push(-&newest.residual);
    if cols.iter().any(|c| c.iter().all(|v| *v == 0.0)) {
        return Err(Error::RankDeficientWindow { rank: 0, width });
    }
    let s = DMatrix::from_columns(&cols);
    let as_ = &a * &s;
    let gram = as_.transpose() * &as_;
    let chol = gram.cholesky().ok_or(Error::RankDeficientWindow {
        rank: step.lsq_effective_rank,
        width,
    })?;
    let n = map.dim();
    let w_k = &s * chol.solve(&as_.transpose());
    let m_r = map.apply_m(&newest.residual);
    let predicted = (DMatrix::<f64>::identity(n, n) - &a * w_k) * m_r;
    let gap = two_norm(&(map.residual_of(&step.new_iterate) - predicted));
    let r_norm = two_norm(&newest.residual);
    Ok(if r_norm == 0.0 { gap } else { gap / r_norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmres::run_gmres_restarted;
    use crate::iterate::{residual, richardson_step};
    use crate::linops::DenseOperator;
    use crate::problems::{build, random_diagonalizable, ProblemKind, ProblemSpec, U0Policy};
    use approx::assert_relative_eq;
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn random_map(n: usize, seed: u64) -> (FixedPointMap, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |i, j| {
            let g: f64 = rng.random_range(-1.0..1.0);
            g / (n as f64).sqrt() + if i == j { 1.0 } else { 0.0 }
        });
        let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let u0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        (
            FixedPointMap::new(Arc::new(DenseOperator::new(a).unwrap()), b).unwrap(),
            u0,
        )
    }

    /// Window built by `j` Richardson steps from `u0`, keeping the last `m+1`.
    fn richardson_window(map: &FixedPointMap, u0: &DVector<f64>, steps: usize, m: Capacity) -> IterationWindow {
        let mut its = vec![u0.clone()];
        for _ in 0..steps {
            let next = richardson_step(map, its.last().unwrap()).unwrap();
            its.push(next);
        }
        IterationWindow::from_iterates(map, m, &its).unwrap()
    }

    #[test]
    fn window_sliding() {
        let mut w = IterationWindow::new(Capacity::Finite(2));
        for k in 0..6 {
            w.push(DVector::from_element(1, k as f64), DVector::zeros(1));
            assert_eq!(w.len(), (k + 1).min(3));
            assert_eq!(w.newest().unwrap().iterate[0], k as f64);
        }
        let mut w = IterationWindow::new(Capacity::Unbounded);
        for k in 0..6 {
            w.push(DVector::from_element(1, k as f64), DVector::zeros(1));
        }
        assert_eq!(w.len(), 6);
        assert_eq!(w.depth(), 5);
    }

    #[test]
    fn empty_window_is_rejected() {
        let (map, _) = random_map(3, 0);
        assert!(ngmres_step(&map, &IterationWindow::new(Capacity::Finite(1))).is_err());
    }

    #[test]
    fn diagonal_single_entry_matches_projection() {
        let op = DenseOperator::new(DMatrix::from_diagonal(&dvector![1.0, 2.0, 3.0])).unwrap();
        let map = FixedPointMap::new(Arc::new(op), DVector::from_element(3, 1.0)).unwrap();
        let u0 = DVector::zeros(3);
        let w = IterationWindow::from_iterates(&map, Capacity::Finite(0), std::slice::from_ref(&u0)).unwrap();
        let rep = ngmres_step(&map, &w).unwrap();
        // closed form: β₀ = -⟨Mr₀, Mr₀ - r₀⟩ / ‖Mr₀ - r₀‖²
        let r0 = residual(&map, &u0).unwrap();
        let mr0 = &r0 - DMatrix::from_diagonal(&dvector![1.0, 2.0, 3.0]) * &r0;
        let d = &mr0 - &r0;
        let beta = -mr0.dot(&d) / d.dot(&d);
        assert_relative_eq!(rep.coefficients[0], beta, max_relative = 1e-13);
        let gam = ngmres_step_gamma(&map, &w).unwrap();
        assert_relative_eq!(gam.coefficients[0], beta, max_relative = 1e-13);
        assert_relative_eq!(
            two_norm(&rep.new_residual),
            rep.predicted_residual_norm,
            max_relative = 1e-12
        );
    }

    #[test]
    fn exact_solution_in_window_stays_put() {
        let p = build(&ProblemSpec::new(ProblemKind::CirculantShift(6), U0Policy::Ones)).unwrap();
        let map = p.map();
        let star = p.exact_solution.clone().unwrap();
        let w = IterationWindow::from_iterates(&map, Capacity::Finite(2), &[p.u0.clone(), star.clone()]).unwrap();
        for rep in [ngmres_step(&map, &w).unwrap(), ngmres_step_gamma(&map, &w).unwrap()] {
            assert_eq!(rep.new_iterate, star);
            assert_eq!(rep.coefficients, DVector::zeros(2));
            assert_eq!(rep.lsq_effective_rank, 0);
        }
    }

    #[test]
    fn ngmres0_is_gmres1() {
        for seed in 0..10 {
            let (map, u0) = random_map(10, seed);
            let cfg = RunConfig::default().with_max_iter(10);
            let ng = run_ngmres(&map, &u0, Capacity::Finite(0), &cfg).unwrap();
            let g1 = run_gmres_restarted(&map, &u0, 1, &cfg).unwrap();
            for (a, b) in ng.records.iter().zip(&g1.records) {
                assert_relative_eq!(a.residual_norm, b.residual_norm, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn beta_and_gamma_agree_on_random_windows() {
        for seed in 0..20 {
            let (map, u0) = random_map(10, seed);
            let cfg = RunConfig::default().with_max_iter(4).keeping_iterates();
            // a mixed window: a few NGMRES iterates
            let h = run_ngmres(&map, &u0, Capacity::Finite(3), &cfg).unwrap();
            let its = h.iterates.unwrap();
            let w = IterationWindow::from_iterates(&map, Capacity::Finite(3), &its).unwrap();
            let b = ngmres_step(&map, &w).unwrap();
            let g = ngmres_step_gamma(&map, &w).unwrap();
            assert_eq!(b.lsq_effective_rank, w.len());
            let scale = two_norm(&b.new_iterate);
            assert!(
                two_norm(&(&b.new_iterate - &g.new_iterate)) <= 1e-10 * scale,
                "seed {seed}"
            );
            assert_relative_eq!(
                two_norm(&b.new_residual),
                two_norm(&g.new_residual),
                max_relative = 1e-10
            );
            // γ_j = Σ_{i≥j} β_i
            for j in 0..w.len() {
                let tail: f64 = b.coefficients.iter().skip(j).sum();
                assert_relative_eq!(g.coefficients[j], tail, epsilon = 1e-8 * (1.0 + tail.abs()));
            }
        }
    }

    #[test]
    fn run_ngmres_is_monotone_and_converges_on_contraction() {
        let n = 12;
        let diag = DVector::from_fn(n, |i, _| 0.3 + 1.2 * i as f64 / n as f64);
        let op = DenseOperator::new(DMatrix::from_diagonal(&diag)).unwrap();
        let map = FixedPointMap::new(Arc::new(op), DVector::from_element(n, 1.0)).unwrap();
        let cfg = RunConfig::default().with_max_iter(200);
        for m in [Capacity::Finite(0), Capacity::Finite(2), Capacity::Unbounded] {
            let h = run_ngmres(&map, &DVector::zeros(n), m, &cfg).unwrap();
            assert!(h.converged(), "m = {m}");
            let norms = h.residual_norms();
            assert!(*norms.last().unwrap() <= 1e-10 * norms[0]);
            for w in norms.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn ngmres_unbounded_stagnates_on_block_shift() {
        let p = build(&ProblemSpec::new(
            ProblemKind::BlockShift { ell: 3, q: 5 },
            U0Policy::Zero,
        ))
        .unwrap();
        let h = run_ngmres(
            &p.map(),
            &p.u0,
            Capacity::Unbounded,
            &RunConfig::default().with_max_iter(60),
        )
        .unwrap();
        let r0 = h.initial_residual_norm();
        assert_eq!(h.records.len(), 61);
        for rec in &h.records {
            assert!((rec.residual_norm - r0).abs() <= 1e-10 * r0);
        }
    }

    #[test]
    fn multisecant_small_windows() {
        for (n, steps, m) in [(5, 0, 0), (8, 2, 2), (8, 5, 2)] {
            let (map, u0) = random_map(n, 11 + n as u64);
            let w = richardson_window(&map, &u0, steps, Capacity::Finite(m));
            let rep = ngmres_step(&map, &w).unwrap();
            let disc = verify_multisecant(&map, &w, &rep).unwrap();
            assert!(disc <= 1e-8, "n={n} m={m}: {disc}");
        }
    }

    #[test]
    fn multisecant_refuses_duplicate_window() {
        let (map, u0) = random_map(5, 1);
        let w = IterationWindow::from_iterates(&map, Capacity::Finite(2), &[u0.clone(), u0.clone()]).unwrap();
        let rep = ngmres_step(&map, &w).unwrap();
        assert!(matches!(
            verify_multisecant(&map, &w, &rep),
            Err(Error::RankDeficientWindow { .. })
        ));
    }

    #[test]
    fn one_step_bound_holds_on_constructed_instance() {
        let (problem, spec) = random_diagonalizable(10, (0.2, 0.8), 1.0, 5).unwrap();
        let map = problem.map();
        let eps = crate::bounds::epsilon_bound(spec.interval.0, spec.interval.1, 2).unwrap();
        let w = richardson_window(&map, &problem.u0, 5, Capacity::Finite(1));
        let rep = ngmres_step(&map, &w).unwrap();
        let mr = map.apply_m(&w.newest().unwrap().residual);
        assert!(two_norm(&rep.new_residual) <= eps * two_norm(&mr) + 1e-9);
        assert!(two_norm(&rep.new_residual) <= two_norm(&mr) * (1.0 + 1e-12));
    }
}
