//! Reference full and restarted GMRES (Arnoldi + Givens), used as oracles for
//! the aNGMRES equivalence results, plus the Krylov span check for Richardson
//! differences.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::iterate::{
    richardson_step, status_to_termination, ConvergenceHistory, FixedPointMap, Recorder, ResidualMode, RunConfig,
    StepKind, Termination,
};
use crate::linops::two_norm;

/// Happy-breakdown threshold relative to `‖r₀‖`.
pub const BREAKDOWN_TOL: f64 = 1e-12;
/// Relative iterate difference below which two GMRES iterates are "equal".
pub const STAGNATION_TOL: f64 = 1e-12;
/// Orthogonality loss that triggers a second Gram–Schmidt pass.
const REORTH_TRIGGER: f64 = 1e-8;

/// Arnoldi process on `A` started from `r₀`, with the Givens-reduced
/// least-squares system kept current.
#[derive(Debug, Clone)]
pub struct ArnoldiState {
    basis: Vec<DVector<f64>>,
    /// Column `j` holds `h_{0..=j+1, j}`.
    hessenberg: Vec<Vec<f64>>,
    /// Column `j` holds the rotated `R[0..=j, j]`.
    upper: Vec<Vec<f64>>,
    rotations: Vec<(f64, f64)>,
    g: Vec<f64>,
    beta: f64,
    breakdown_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArnoldiStep {
    /// `|g_{j+1}|`, the GMRES residual norm estimate after this step.
    pub residual_estimate: f64,
    pub subdiagonal: f64,
    pub happy_breakdown: bool,
}

impl ArnoldiState {
    /// Panics if `r0` is zero; callers check for exact solutions first.
    pub fn new(r0: &DVector<f64>) -> Self {
        let beta = two_norm(r0);
        assert!(beta > 0.0, "Arnoldi needs a nonzero starting vector");
        Self {
            basis: vec![r0 / beta],
            hessenberg: Vec::new(),
            upper: Vec::new(),
            rotations: Vec::new(),
            g: vec![beta],
            beta,
            breakdown_tol: BREAKDOWN_TOL * beta,
        }
    }

    /// Number of completed Arnoldi steps (Krylov dimension of the iterate).
    pub fn steps(&self) -> usize {
        self.hessenberg.len()
    }

    pub fn basis(&self) -> &[DVector<f64>] {
        &self.basis
    }

    pub fn initial_norm(&self) -> f64 {
        self.beta
    }

    /// `(j+1) x j` Hessenberg matrix.
    pub fn hessenberg_matrix(&self) -> DMatrix<f64> {
        let j = self.steps();
        let mut h = DMatrix::zeros(j + 1, j);
        for (c, col) in self.hessenberg.iter().enumerate() {
            for (r, v) in col.iter().enumerate() {
                h[(r, c)] = *v;
            }
        }
        h
    }

    /// `max |V_iᵀ V_j - δ_ij|` over the current basis.
    pub fn orthogonality_loss(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, vi) in self.basis.iter().enumerate() {
            for (j, vj) in self.basis.iter().enumerate().skip(i) {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((vi.dot(vj) - target).abs());
            }
        }
        worst
    }

    /// Extends the Krylov space by one. After a happy breakdown no new basis
    /// vector is stored.
    pub fn step(&mut self, map: &FixedPointMap) -> ArnoldiStep {
        let j = self.steps();
        let mut w = map.mul(&self.basis[j]);
        let mut h = vec![0.0; j + 2];
        for (i, v) in self.basis.iter().enumerate() {
            let c = v.dot(&w);
            h[i] = c;
            w.axpy(-c, v, 1.0);
        }
        let mut wn = two_norm(&w);
        if wn > 0.0 {
            let loss = self.basis.iter().fold(0.0f64, |m, v| m.max((v.dot(&w) / wn).abs()));
            if loss > REORTH_TRIGGER {
                for (i, v) in self.basis.iter().enumerate() {
                    let c = v.dot(&w);
                    h[i] += c;
                    w.axpy(-c, v, 1.0);
                }
                wn = two_norm(&w);
            }
        }
        h[j + 1] = wn;
        self.hessenberg.push(h.clone());

        // apply previous rotations, then a new one eliminating h[j+1]
        for (i, &(c, s)) in self.rotations.iter().enumerate() {
            let (a, b) = (h[i], h[i + 1]);
            h[i] = c * a + s * b;
            h[i + 1] = -s * a + c * b;
        }
        let (a, b) = (h[j], h[j + 1]);
        let rho = a.hypot(b);
        let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (a / rho, b / rho) };
        h[j] = rho;
        h[j + 1] = 0.0;
        self.rotations.push((c, s));
        let gj = self.g[j];
        self.g[j] = c * gj;
        self.g.push(-s * gj);
        h.truncate(j + 1);
        self.upper.push(h);

        let happy = wn <= self.breakdown_tol;
        if !happy {
            self.basis.push(w / wn);
        }
        ArnoldiStep {
            residual_estimate: self.g[j + 1].abs(),
            subdiagonal: wn,
            happy_breakdown: happy,
        }
    }

    /// Coefficients `y` minimizing `‖β e₁ - H y‖`.
    pub fn solve_coefficients(&self) -> DVector<f64> {
        let j = self.steps();
        let mut y = DVector::zeros(j);
        for i in (0..j).rev() {
            let mut acc = self.g[i];
            for k in i + 1..j {
                acc -= self.upper[k][i] * y[k];
            }
            let d = self.upper[i][i];
            y[i] = if d == 0.0 { 0.0 } else { acc / d };
        }
        y
    }

    /// `r₀ - V_{j+1} H̄ y`, the residual of [`Self::iterate`] without a
    /// product with `A`.
    pub fn residual_vector(&self) -> DVector<f64> {
        let y = self.solve_coefficients();
        let mut r = &self.basis[0] * self.beta;
        for (c, col) in self.hessenberg.iter().enumerate() {
            for (i, h) in col.iter().enumerate().take(self.basis.len()) {
                r.axpy(-h * y[c], &self.basis[i], 1.0);
            }
        }
        r
    }

    /// `u₀ + V_j y`. Note the residual convention `r = A u - b`, so the
    /// correction is subtracted.
    pub fn iterate(&self, u0: &DVector<f64>) -> DVector<f64> {
        let y = self.solve_coefficients();
        let mut u = u0.clone();
        for (i, yi) in y.iter().enumerate() {
            u.axpy(-yi, &self.basis[i], 1.0);
        }
        u
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KrylovIndices {
    /// Grade `ν(A, r₀)`: the Krylov dimension at which a happy breakdown occurred.
    pub grade: Option<usize>,
    /// `η^G`: first `ℓ` with `u_ℓ = u_{ℓ+1}` (to [`STAGNATION_TOL`]).
    pub stagnation_index: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct GmresRun {
    pub history: ConvergenceHistory,
    pub indices: KrylovIndices,
}

fn iterates_coincide(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    let scale = two_norm(a).max(two_norm(b));
    two_norm(&(a - b)) <= STAGNATION_TOL * scale
}

/// Full (unrestarted) GMRES, materializing the iterate at every index.
pub fn run_gmres_full(map: &FixedPointMap, u0: &DVector<f64>, cfg: &RunConfig) -> Result<GmresRun> {
    cfg.validate()?;
    map.check_len(u0)?;
    let r0 = map.residual_of(u0);
    let r0n = two_norm(&r0);
    let mut rec = Recorder::start(map, u0, r0n, cfg);
    let mut indices = KrylovIndices {
        grade: None,
        stagnation_index: None,
    };
    if let Some(t) = status_to_termination(rec.push(0, u0, r0n, StepKind::Initial)) {
        return Ok(GmresRun {
            history: rec.finish(t),
            indices,
        });
    }
    let mut arnoldi = ArnoldiState::new(&r0);
    let mut prev = u0.clone();
    for k in 1..=rec.max_iter() {
        let st = arnoldi.step(map);
        let u = arnoldi.iterate(u0);
        let rn = match cfg.residual {
            ResidualMode::Recursive => st.residual_estimate,
            ResidualMode::True => two_norm(&map.residual_of(&u)),
        };
        if indices.stagnation_index.is_none() && iterates_coincide(&prev, &u) {
            indices.stagnation_index = Some(k - 1);
        }
        let status = rec.push(k, &u, rn, StepKind::GmresOracle);
        if st.happy_breakdown {
            indices.grade = Some(k);
        }
        if let Some(t) = status_to_termination(status) {
            return Ok(GmresRun {
                history: rec.finish(t),
                indices,
            });
        }
        if st.happy_breakdown {
            // Krylov space is invariant; the iterate cannot improve further.
            return Ok(GmresRun {
                history: rec.finish(Termination::Breakdown),
                indices,
            });
        }
        prev = u;
    }
    Ok(GmresRun {
        history: rec.finish(Termination::MaxIter),
        indices,
    })
}

/// GMRES(restart): full GMRES cycles of length `restart`, global indices.
pub fn run_gmres_restarted(
    map: &FixedPointMap,
    u0: &DVector<f64>,
    restart: usize,
    cfg: &RunConfig,
) -> Result<ConvergenceHistory> {
    if restart < 1 {
        return Err(Error::InvalidArgument("restart length must be at least 1".into()));
    }
    cfg.validate()?;
    map.check_len(u0)?;
    let r0 = map.residual_of(u0);
    let mut rec = Recorder::start(map, u0, two_norm(&r0), cfg);
    if let Some(t) = status_to_termination(rec.push(0, u0, two_norm(&r0), StepKind::Initial)) {
        return Ok(rec.finish(t));
    }
    let mut k = 0;
    let mut cycle_start = u0.clone();
    let mut r = r0;
    while k < rec.max_iter() {
        let mut arnoldi = ArnoldiState::new(&r);
        let mut u = cycle_start.clone();
        for _ in 0..restart {
            if k >= rec.max_iter() {
                break;
            }
            k += 1;
            let st = arnoldi.step(map);
            u = arnoldi.iterate(&cycle_start);
            let rn = match cfg.residual {
                ResidualMode::Recursive => st.residual_estimate,
                ResidualMode::True => two_norm(&map.residual_of(&u)),
            };
            let status = rec.push(k, &u, rn, StepKind::GmresOracle);
            if let Some(t) = status_to_termination(status) {
                return Ok(rec.finish(t));
            }
            if st.happy_breakdown {
                return Ok(rec.finish(Termination::Breakdown));
            }
        }
        r = cfg.residual.after_step(map, &u, arnoldi.residual_vector());
        cycle_start = u;
    }
    Ok(rec.finish(Termination::MaxIter))
}

/// Runs `j` Richardson steps from `u0` and returns the largest principal angle
/// (radians) between `span{u_i - u₀}` and the Arnoldi basis of `K_j(A, r₀)`.
pub fn krylov_span_check(map: &FixedPointMap, u0: &DVector<f64>, j: usize) -> Result<f64> {
    if j == 0 {
        return Err(Error::InvalidArgument("span dimension must be at least 1".into()));
    }
    map.check_len(u0)?;
    let r0 = map.residual_of(u0);
    if two_norm(&r0) == 0.0 {
        return Err(Error::SpanRankDeficient { requested: j, rank: 0 });
    }

    let mut diffs = Vec::with_capacity(j);
    let mut u = u0.clone();
    for _ in 0..j {
        u = richardson_step(map, &u)?;
        diffs.push(&u - u0);
    }
    let q_s = orthonormal_basis(&diffs, j)?;

    let mut arnoldi = ArnoldiState::new(&r0);
    while arnoldi.basis().len() < j {
        if arnoldi.step(map).happy_breakdown {
            return Err(Error::SpanRankDeficient {
                requested: j,
                rank: arnoldi.basis().len(),
            });
        }
    }
    let v = DMatrix::from_columns(&arnoldi.basis()[..j]);
    // sin of the largest principal angle = ‖(I - Q Qᵀ) V‖₂
    let proj = &v - &q_s * (q_s.transpose() * &v);
    let sin_max = proj.singular_values().max().min(1.0);
    Ok(sin_max.asin())
}

/// Householder-QR orthonormal basis of the given columns (after unit scaling);
/// fails when the numerical rank is below `required`.
fn orthonormal_basis(cols: &[DVector<f64>], required: usize) -> Result<DMatrix<f64>> {
    let scaled: Vec<DVector<f64>> = cols
        .iter()
        .map(|c| {
            let n = two_norm(c);
            if n > 0.0 {
                c / n
            } else {
                c.clone()
            }
        })
        .collect();
    let m = DMatrix::from_columns(&scaled);
    let qr = m.qr();
    let r = qr.r();
    let rank = (0..r.ncols().min(r.nrows()))
        .filter(|&i| r[(i, i)].abs() > 1e-10)
        .count();
    if rank < required {
        return Err(Error::SpanRankDeficient {
            requested: required,
            rank,
        });
    }
    Ok(qr.q())
}
