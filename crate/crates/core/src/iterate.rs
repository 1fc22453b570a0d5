//! Richardson fixed-point map `q(u) = u - (A u - b)` and the convergence
//! history bookkeeping shared by every driver.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linops::{two_norm, LinearOperator};

/// The map `q(u) = M u + b` with `M = I - A`. `M` is never formed.
#[derive(Debug, Clone)]
pub struct FixedPointMap {
    op: Arc<dyn LinearOperator>,
    rhs: DVector<f64>,
}

impl FixedPointMap {
    pub fn new(op: Arc<dyn LinearOperator>, rhs: DVector<f64>) -> Result<Self> {
        if rhs.len() != op.dim() {
            return Err(Error::DimensionMismatch {
                expected: op.dim(),
                actual: rhs.len(),
            });
        }
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("right-hand side"));
        }
        Ok(Self { op, rhs })
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn operator(&self) -> &dyn LinearOperator {
        self.op.as_ref()
    }

    pub fn operator_arc(&self) -> Arc<dyn LinearOperator> {
        Arc::clone(&self.op)
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    pub(crate) fn check_len(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: v.len(),
            });
        }
        Ok(())
    }

    /// `A v`, unchecked.
    pub(crate) fn mul(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.dim());
        self.op.apply_into(v, &mut y);
        y
    }

    /// `A u - b`, unchecked.
    pub(crate) fn residual_of(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut r = self.mul(u);
        r -= &self.rhs;
        r
    }

    /// `M r = r - A r`, unchecked.
    pub(crate) fn apply_m(&self, r: &DVector<f64>) -> DVector<f64> {
        let ar = self.mul(r);
        r - ar
    }

    /// Stable digest of operator, right-hand side and initial guess.
    pub fn fingerprint(&self, u0: &DVector<f64>) -> Fingerprint {
        let mut h = Sha256::new();
        h.update((self.dim() as u64).to_le_bytes());
        match self.op.triplets() {
            Some(trips) => {
                h.update(b"triplets");
                for (i, j, v) in trips {
                    h.update((i as u64).to_le_bytes());
                    h.update((j as u64).to_le_bytes());
                    h.update(v.to_bits().to_le_bytes());
                }
            }
            None => {
                // matrix-free: digest the action on a fixed probe vector
                h.update(b"probe");
                let n = self.dim();
                let probe = DVector::from_fn(n, |i, _| 1.0 + i as f64 / n as f64);
                for v in self.mul(&probe).iter() {
                    h.update(v.to_bits().to_le_bytes());
                }
            }
        }
        h.update(b"rhs");
        for v in self.rhs.iter() {
            h.update(v.to_bits().to_le_bytes());
        }
        h.update(b"u0");
        for v in u0.iter() {
            h.update(v.to_bits().to_le_bytes());
        }
        let digest = h.finalize();
        let mut bytes = [0u8; 32];
        bytes.copy_from_slice(&digest);
        Fingerprint(bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fingerprint(pub [u8; 32]);

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

/// `r = A u - b`.
pub fn residual(map: &FixedPointMap, u: &DVector<f64>) -> Result<DVector<f64>> {
    map.check_len(u)?;
    Ok(map.residual_of(u))
}

/// One Richardson step, `u - (A u - b)`.
pub fn richardson_step(map: &FixedPointMap, u: &DVector<f64>) -> Result<DVector<f64>> {
    let r = residual(map, u)?;
    Ok(u - r)
}

/// How drivers obtain the residual of each new iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResidualMode {
    /// Updated from previous residuals (`M r` for Richardson steps, the
    /// least-squares residual for NGMRES steps, the Arnoldi relation for
    /// GMRES). Keeps relative accuracy when `‖u‖ ≫ ‖r‖`.
    #[default]
    Recursive,
    /// Recomputed as `A u - b` after every step.
    True,
}

impl ResidualMode {
    pub(crate) fn after_step(self, map: &FixedPointMap, u: &DVector<f64>, updated: DVector<f64>) -> DVector<f64> {
        match self {
            ResidualMode::Recursive => updated,
            ResidualMode::True => map.residual_of(u),
        }
    }
}

/// Stopping rule and bookkeeping options shared by all drivers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_iter: usize,
    /// Retain every iterate in the history (needed for iterate comparisons).
    pub keep_iterates: bool,
    pub residual: ResidualMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-14,
            max_iter: 100,
            keep_iterates: false,
            residual: ResidualMode::Recursive,
        }
    }
}

impl RunConfig {
    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_residual_mode(mut self, mode: ResidualMode) -> Self {
        self.residual = mode;
        self
    }

    pub fn keeping_iterates(mut self) -> Self {
        self.keep_iterates = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter < 1 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !(self.rtol >= 0.0 && self.atol >= 0.0) {
            return Err(Error::InvalidArgument("tolerances must be non-negative".into()));
        }
        if self.rtol == 0.0 && self.atol == 0.0 {
            return Err(Error::InvalidArgument("rtol and atol cannot both be zero".into()));
        }
        Ok(())
    }

    /// `max(rtol * ‖r₀‖, atol)`.
    pub fn threshold(&self, r0_norm: f64) -> f64 {
        (self.rtol * r0_norm).max(self.atol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StepKind {
    /// The starting point `u₀` (index 0).
    Initial,
    FixedPoint,
    Ngmres,
    GmresOracle,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::Initial => "INIT",
            StepKind::FixedPoint => "FP",
            StepKind::Ngmres => "NGMRES",
            StepKind::GmresOracle => "GMRES",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "INIT" => Some(StepKind::Initial),
            "FP" => Some(StepKind::FixedPoint),
            "NGMRES" => Some(StepKind::Ngmres),
            "GMRES" => Some(StepKind::GmresOracle),
            _ => None,
        }
    }
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub index: usize,
    pub residual_norm: f64,
    pub step_kind: StepKind,
    /// Seconds since the start of the run. Not part of any correctness contract.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIter,
    Breakdown,
}

#[derive(Debug, Clone)]
pub struct ConvergenceHistory {
    pub records: Vec<IterationRecord>,
    pub final_iterate: DVector<f64>,
    pub termination: Termination,
    /// Convergence threshold `max(rtol ‖r₀‖, atol)` used by the run.
    pub threshold: f64,
    /// Every iterate `u₀, u₁, ...` when `RunConfig::keep_iterates` was set.
    pub iterates: Option<Vec<DVector<f64>>>,
    pub fingerprint: Fingerprint,
}

impl ConvergenceHistory {
    pub fn residual_norms(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.residual_norm).collect()
    }

    pub fn initial_residual_norm(&self) -> f64 {
        self.records[0].residual_norm
    }

    pub fn last_index(&self) -> usize {
        self.records.last().map_or(0, |r| r.index)
    }

    /// First index whose residual norm is at or below `threshold`.
    pub fn first_index_below(&self, threshold: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.residual_norm <= threshold)
            .map(|r| r.index)
    }

    pub fn record(&self, k: usize) -> Option<&IterationRecord> {
        self.records.get(k).filter(|r| r.index == k)
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Status {
    Continue,
    Converged,
    Breakdown,
}

/// Accumulates records and applies the stopping rule.
pub(crate) struct Recorder {
    start: Instant,
    cfg: RunConfig,
    threshold: f64,
    records: Vec<IterationRecord>,
    iterates: Option<Vec<DVector<f64>>>,
    last_finite: DVector<f64>,
    fingerprint: Fingerprint,
}

impl Recorder {
    pub(crate) fn start(map: &FixedPointMap, u0: &DVector<f64>, r0_norm: f64, cfg: &RunConfig) -> Self {
        Self {
            start: Instant::now(),
            cfg: *cfg,
            threshold: cfg.threshold(r0_norm),
            records: Vec::new(),
            iterates: cfg.keep_iterates.then(Vec::new),
            last_finite: u0.clone(),
            fingerprint: map.fingerprint(u0),
        }
    }

    /// Records iterate `k`. Non-finite data is not recorded and signals breakdown.
    pub(crate) fn push(&mut self, k: usize, u: &DVector<f64>, r_norm: f64, kind: StepKind) -> Status {
        if !r_norm.is_finite() || u.iter().any(|v| !v.is_finite()) {
            return Status::Breakdown;
        }
        self.records.push(IterationRecord {
            index: k,
            residual_norm: r_norm,
            step_kind: kind,
            wall_time: self.start.elapsed().as_secs_f64(),
        });
        if let Some(its) = self.iterates.as_mut() {
            its.push(u.clone());
        }
        self.last_finite.copy_from(u);
        if r_norm <= self.threshold {
            Status::Converged
        } else {
            Status::Continue
        }
    }

    pub(crate) fn max_iter(&self) -> usize {
        self.cfg.max_iter
    }

    pub(crate) fn finish(self, termination: Termination) -> ConvergenceHistory {
        ConvergenceHistory {
            records: self.records,
            final_iterate: self.last_finite,
            termination,
            threshold: self.threshold,
            iterates: self.iterates,
            fingerprint: self.fingerprint,
        }
    }
}

pub(crate) fn status_to_termination(status: Status) -> Option<Termination> {
    match status {
        Status::Continue => None,
        Status::Converged => Some(Termination::Converged),
        Status::Breakdown => Some(Termination::Breakdown),
    }
}

/// Plain Richardson iteration until the stopping rule fires.
pub fn run_fixed_point(map: &FixedPointMap, u0: &DVector<f64>, cfg: &RunConfig) -> Result<ConvergenceHistory> {
    cfg.validate()?;
    map.check_len(u0)?;
    let mut u = u0.clone();
    let mut r = map.residual_of(&u);
    let mut rec = Recorder::start(map, u0, two_norm(&r), cfg);
    if let Some(t) = status_to_termination(rec.push(0, &u, two_norm(&r), StepKind::Initial)) {
        return Ok(rec.finish(t));
    }
    for k in 1..=rec.max_iter() {
        u -= &r;
        r = cfg.residual.after_step(map, &u, map.apply_m(&r));
        if let Some(t) = status_to_termination(rec.push(k, &u, two_norm(&r), StepKind::FixedPoint)) {
            return Ok(rec.finish(t));
        }
    }
    Ok(rec.finish(Termination::MaxIter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{DenseOperator, IdentityOperator};
    use crate::problems::{build, ProblemKind, ProblemSpec, U0Policy};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, SymmetricEigen};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd_map(n: usize, seed: u64) -> (FixedPointMap, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let q = g.qr().q();
        let lam = DVector::from_fn(n, |_, _| rng.random_range(0.05..1.95));
        let a = &q * DMatrix::from_diagonal(&lam) * q.transpose();
        let a = (&a + a.transpose()) * 0.5;
        let c = SymmetricEigen::new(DMatrix::identity(n, n) - &a)
            .eigenvalues
            .iter()
            .fold(0.0f64, |m, v: &f64| m.max(v.abs()));
        let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        (
            FixedPointMap::new(Arc::new(DenseOperator::new(a).unwrap()), b).unwrap(),
            c,
        )
    }

    #[test]
    fn circulant_residual_and_step() {
        let p = build(&ProblemSpec::new(ProblemKind::CirculantShift(36), U0Policy::Ones)).unwrap();
        let map = p.map();
        let r0 = residual(&map, &p.u0).unwrap();
        assert_eq!(r0[0], 0.0);
        assert!(r0.iter().skip(1).all(|v| *v == 1.0));
        assert_relative_eq!(two_norm(&r0), 35f64.sqrt(), epsilon = 1e-14);
        let u1 = richardson_step(&map, &p.u0).unwrap();
        let mut e1 = DVector::zeros(36);
        e1[0] = 1.0;
        assert_eq!(u1, e1);
    }

    #[test]
    fn exact_solution_is_fixed_point() {
        let p = build(&ProblemSpec::new(ProblemKind::CirculantShift(8), U0Policy::Ones)).unwrap();
        let map = p.map();
        let star = p.exact_solution.clone().unwrap();
        assert_eq!(residual(&map, &star).unwrap(), DVector::zeros(8));
        assert_eq!(richardson_step(&map, &star).unwrap(), star);
    }

    #[test]
    fn residual_matches_dense_multiply() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(7, 7, |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(7, |_, _| rng.random_range(-1.0..1.0));
        let u = DVector::from_fn(7, |_, _| rng.random_range(-1.0..1.0));
        let map = FixedPointMap::new(Arc::new(DenseOperator::new(a.clone()).unwrap()), b.clone()).unwrap();
        let expect = &a * &u - &b;
        assert_relative_eq!(residual(&map, &u).unwrap(), expect, epsilon = 1e-14);
        assert!(residual(&map, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn richardson_contracts_on_spd() {
        for seed in 0..20 {
            let (map, c) = random_spd_map(10, seed);
            assert!(c < 1.0);
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let u0 = DVector::from_fn(10, |_, _| rng.random_range(-1.0..1.0));
            let u1 = richardson_step(&map, &u0).unwrap();
            let r0 = two_norm(&residual(&map, &u0).unwrap());
            let r1 = two_norm(&residual(&map, &u1).unwrap());
            assert!(r1 <= c * r0 * (1.0 + 1e-12), "seed {seed}: {r1} > {c} * {r0}");
            // step difference is minus the residual
            let diff = &u1 - &u0 + residual(&map, &u0).unwrap();
            assert!(two_norm(&diff) <= 1e-15 * two_norm(&u0).max(1.0));
        }
    }

    #[test]
    fn identity_converges_in_one_step() {
        let map = FixedPointMap::new(Arc::new(IdentityOperator::new(5)), DVector::from_element(5, 2.0)).unwrap();
        let h = run_fixed_point(&map, &DVector::from_element(5, -7.0), &RunConfig::default()).unwrap();
        assert_eq!(h.termination, Termination::Converged);
        assert_eq!(h.records.len(), 2);
        assert_eq!(h.records[1].residual_norm, 0.0);
        assert_eq!(h.final_iterate, DVector::from_element(5, 2.0));
    }

    #[test]
    fn diagonal_half_decays_geometrically() {
        let n = 6;
        let op = DenseOperator::new(DMatrix::from_diagonal_element(n, n, 0.5)).unwrap();
        let map = FixedPointMap::new(Arc::new(op), DVector::from_element(n, 1.0)).unwrap();
        let h = run_fixed_point(&map, &DVector::zeros(n), &RunConfig::default().with_max_iter(30)).unwrap();
        let norms = h.residual_norms();
        for w in norms.windows(2) {
            assert!((w[1] / w[0] - 0.5).abs() <= 1e-12);
        }
        for (k, rec) in h.records.iter().enumerate() {
            assert_eq!(rec.index, k);
        }
    }

    #[test]
    fn laplacian_fixed_point_diverges() {
        let p = build(&ProblemSpec::new(
            ProblemKind::Laplacian2D(16),
            U0Policy::RandomSeeded(0),
        ))
        .unwrap();
        let h = run_fixed_point(&p.map(), &p.u0, &RunConfig::default().with_max_iter(80)).unwrap();
        assert_eq!(h.termination, Termination::MaxIter);
        let norms = h.residual_norms();
        for k in 50..norms.len() - 1 {
            assert!(norms[k + 1] >= norms[k], "k={k}");
        }
    }

    #[test]
    fn overflow_ends_in_breakdown() {
        let op = DenseOperator::new(DMatrix::from_diagonal_element(2, 2, -1e200)).unwrap();
        let map = FixedPointMap::new(Arc::new(op), DVector::from_element(2, 1.0)).unwrap();
        let h = run_fixed_point(&map, &DVector::from_element(2, 1.0), &RunConfig::default()).unwrap();
        assert_eq!(h.termination, Termination::Breakdown);
        assert!(h.records.iter().all(|r| r.residual_norm.is_finite()));
        assert!(h.final_iterate.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn config_validation() {
        assert!(RunConfig {
            max_iter: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(RunConfig {
            rtol: 0.0,
            atol: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(RunConfig {
            rtol: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(RunConfig::default().validate().is_ok());
    }

    #[test]
    fn fingerprint_is_stable_and_sensitive() {
        let p = build(&ProblemSpec::new(ProblemKind::CirculantShift(10), U0Policy::Ones)).unwrap();
        let a = p.map().fingerprint(&p.u0);
        let b = p.map().fingerprint(&p.u0);
        assert_eq!(a, b);
        assert_ne!(a, p.map().fingerprint(&DVector::zeros(10)));
        assert_eq!(a.to_string().len(), 64);
    }
}
