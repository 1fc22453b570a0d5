//! Test-problem generators: the cyclic shift, the block cyclic shift, the
//! 5-point Laplacian, seeded random families, and file-backed operators.

use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::bounds::SpectralData;
use crate::error::{Error, Result};
use crate::io;
use crate::iterate::FixedPointMap;
use crate::linops::{CsrOperator, DenseOperator, IdentityOperator, LinearOperator};

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemKind {
    Identity(usize),
    /// `n x n` cyclic down-shift, `b = e₁`.
    CirculantShift(usize),
    /// `q` diagonal blocks, block `k` a cyclic shift of size `ell * k`.
    BlockShift {
        ell: usize,
        q: usize,
    },
    /// 5-point Dirichlet Laplacian on a `grid_n x grid_n` interior grid.
    Laplacian2D(usize),
    /// Matrix Market (`.mtx`) or dense whitespace text; `b` is all ones.
    FromFile(PathBuf),
    /// `A = Q diag(λ) Qᵀ` with eigenvalues of `A` drawn from `spectrum`.
    RandomSpd {
        n: usize,
        spectrum: (f64, f64),
        seed: u64,
    },
    /// `M = U Λ U⁻¹`, `A = I - M`, with eigenvalues of `M` drawn from
    /// `spectrum` and `κ₂(U) = eigcond`.
    RandomDiagonalizable {
        n: usize,
        spectrum: (f64, f64),
        eigcond: f64,
        seed: u64,
    },
    /// `A = I + G / √n` with Gaussian `G`; generally non-normal.
    RandomGeneral {
        n: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum U0Policy {
    Ones,
    Zero,
    /// Uniform entries in `[0, 1)`.
    RandomSeeded(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub u0: U0Policy,
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind, u0: U0Policy) -> Self {
        Self { kind, u0 }
    }

    /// The initial guess used by the reference experiments for each kind.
    pub fn with_default_u0(kind: ProblemKind) -> Self {
        let u0 = match kind {
            ProblemKind::CirculantShift(_) => U0Policy::Ones,
            ProblemKind::BlockShift { .. } => U0Policy::Zero,
            ProblemKind::Laplacian2D(_) => U0Policy::RandomSeeded(0),
            ProblemKind::RandomSpd { seed, .. }
            | ProblemKind::RandomDiagonalizable { seed, .. }
            | ProblemKind::RandomGeneral { seed, .. } => U0Policy::RandomSeeded(seed.wrapping_add(1)),
            ProblemKind::Identity(_) | ProblemKind::FromFile(_) => U0Policy::Zero,
        };
        Self { kind, u0 }
    }
}

#[derive(Debug, Clone)]
pub struct LinearProblem {
    pub operator: Arc<dyn LinearOperator>,
    pub rhs: DVector<f64>,
    pub u0: DVector<f64>,
    pub exact_solution: Option<DVector<f64>>,
}

impl LinearProblem {
    pub fn dim(&self) -> usize {
        self.operator.dim()
    }

    pub fn map(&self) -> FixedPointMap {
        FixedPointMap::new(Arc::clone(&self.operator), self.rhs.clone()).expect("problem dimensions are consistent")
    }
}

fn require_positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::InvalidArgument(format!("{name} must be positive")));
    }
    Ok(())
}

/// Row/column triplets of the cyclic down-shift of size `n` placed at `offset`.
fn shift_block(n: usize, offset: usize, out: &mut Vec<(usize, usize, f64)>) {
    out.push((offset, offset + n - 1, 1.0));
    for i in 1..n {
        out.push((offset + i, offset + i - 1, 1.0));
    }
}

/// Rows at which each block of `BlockShift { ell, q }` starts (0-based).
pub fn block_starts(ell: usize, q: usize) -> Vec<usize> {
    let mut starts = Vec::with_capacity(q);
    let mut offset = 0;
    for k in 1..=q {
        starts.push(offset);
        offset += ell * k;
    }
    starts
}

fn laplacian_2d(grid_n: usize) -> Result<CsrOperator> {
    let n = grid_n * grid_n;
    let mut trips = Vec::with_capacity(5 * n);
    // column-major numbering of interior points, as in delsq(numgrid('S', n+2))
    let idx = |i: usize, j: usize| j * grid_n + i;
    for j in 0..grid_n {
        for i in 0..grid_n {
            let row = idx(i, j);
            trips.push((row, row, 4.0));
            if i > 0 {
                trips.push((row, idx(i - 1, j), -1.0));
            }
            if i + 1 < grid_n {
                trips.push((row, idx(i + 1, j), -1.0));
            }
            if j > 0 {
                trips.push((row, idx(i, j - 1), -1.0));
            }
            if j + 1 < grid_n {
                trips.push((row, idx(i, j + 1), -1.0));
            }
        }
    }
    CsrOperator::from_triplets(n, trips)
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    // fix column signs so the factor is Haar-distributed and deterministic
    let signs = DVector::from_fn(n, |i, _| if r[(i, i)] < 0.0 { -1.0 } else { 1.0 });
    q * DMatrix::from_diagonal(&signs)
}

fn sample_spectrum(n: usize, (lo, hi): (f64, f64), rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(lo..hi))
}

fn check_range((lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidArgument(format!("invalid spectrum range ({lo}, {hi})")));
    }
    Ok(())
}

fn check_nonsingular(a: &DMatrix<f64>) -> Result<()> {
    let sv = a.singular_values();
    let (max, min) = (sv.max(), sv.min());
    if !(min > 1e-13 * max) {
        return Err(Error::Singular);
    }
    Ok(())
}

fn initial_guess(policy: U0Policy, n: usize) -> DVector<f64> {
    match policy {
        U0Policy::Ones => DVector::from_element(n, 1.0),
        U0Policy::Zero => DVector::zeros(n),
        U0Policy::RandomSeeded(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            DVector::from_fn(n, |_, _| rng.random::<f64>())
        }
    }
}

fn dense(a: DMatrix<f64>) -> Result<Arc<dyn LinearOperator>> {
    Ok(Arc::new(DenseOperator::new(a)?))
}

/// Builds the operator, right-hand side, initial guess and (when known) the
/// exact solution.
pub fn build(spec: &ProblemSpec) -> Result<LinearProblem> {
    let (operator, rhs, exact): (Arc<dyn LinearOperator>, DVector<f64>, Option<DVector<f64>>) = match &spec.kind {
        ProblemKind::Identity(n) => {
            require_positive("n", *n)?;
            let b = DVector::from_element(*n, 1.0);
            (Arc::new(IdentityOperator::new(*n)), b.clone(), Some(b))
        }
        ProblemKind::CirculantShift(n) => {
            require_positive("n", *n)?;
            let mut trips = Vec::new();
            shift_block(*n, 0, &mut trips);
            let mut b = DVector::zeros(*n);
            b[0] = 1.0;
            let mut star = DVector::zeros(*n);
            star[*n - 1] = 1.0;
            (Arc::new(CsrOperator::from_triplets(*n, trips)?), b, Some(star))
        }
        ProblemKind::BlockShift { ell, q } => {
            require_positive("ell", *ell)?;
            require_positive("q", *q)?;
            let n = ell * q * (q + 1) / 2;
            let mut trips = Vec::new();
            let mut b = DVector::zeros(n);
            let mut star = DVector::zeros(n);
            for (k, start) in block_starts(*ell, *q).into_iter().enumerate() {
                let size = ell * (k + 1);
                shift_block(size, start, &mut trips);
                b[start] = 1.0;
                star[start + size - 1] = 1.0;
            }
            (Arc::new(CsrOperator::from_triplets(n, trips)?), b, Some(star))
        }
        ProblemKind::Laplacian2D(grid_n) => {
            require_positive("grid size", *grid_n)?;
            let n = grid_n * grid_n;
            (Arc::new(laplacian_2d(*grid_n)?), DVector::from_element(n, 1.0), None)
        }
        ProblemKind::FromFile(path) => {
            let op = io::read_operator(path)?;
            let n = op.dim();
            if n <= 2000 {
                if let Some(a) = op.to_dense() {
                    check_nonsingular(&a)?;
                }
            }
            (op, DVector::from_element(n, 1.0), None)
        }
        ProblemKind::RandomSpd { n, spectrum, seed } => {
            require_positive("n", *n)?;
            check_range(*spectrum)?;
            if spectrum.0 <= 0.0 {
                return Err(Error::InvalidArgument("SPD spectrum must be positive".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let q = random_orthogonal(*n, &mut rng);
            let lam = sample_spectrum(*n, *spectrum, &mut rng);
            let a = &q * DMatrix::from_diagonal(&lam) * q.transpose();
            let a = (&a + a.transpose()) * 0.5;
            let b = DVector::from_fn(*n, |_, _| rng.random_range(-1.0..1.0));
            (dense(a)?, b, None)
        }
        ProblemKind::RandomDiagonalizable { .. } => {
            let (p, _) = random_diagonalizable_from(spec)?;
            return Ok(p);
        }
        ProblemKind::RandomGeneral { n, seed } => {
            require_positive("n", *n)?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let scale = 1.0 / (*n as f64).sqrt();
            let a = DMatrix::from_fn(*n, *n, |i, j| {
                let g: f64 = rng.sample(StandardNormal);
                g * scale * 0.8 + if i == j { 1.0 } else { 0.0 }
            });
            check_nonsingular(&a)?;
            let b = DVector::from_fn(*n, |_, _| rng.random_range(-1.0..1.0));
            (dense(a)?, b, None)
        }
    };
    let u0 = initial_guess(spec.u0, operator.dim());
    Ok(LinearProblem {
        operator,
        rhs,
        u0,
        exact_solution: exact,
    })
}

/// `M = U Λ U⁻¹` with `U = Q₁ diag(g) Q₂ᵀ`, `g` graded geometrically from 1 to
/// `eigcond`, so `κ₂(U) = eigcond`. Returns `A = I - M`, `b = A u*` for a
/// random `u*`, and the exact spectral data.
pub fn random_diagonalizable(
    n: usize,
    spectrum: (f64, f64),
    eigcond: f64,
    seed: u64,
) -> Result<(LinearProblem, SpectralData)> {
    random_diagonalizable_from(&ProblemSpec::with_default_u0(ProblemKind::RandomDiagonalizable {
        n,
        spectrum,
        eigcond,
        seed,
    }))
}

fn random_diagonalizable_from(spec: &ProblemSpec) -> Result<(LinearProblem, SpectralData)> {
    let ProblemKind::RandomDiagonalizable {
        n,
        spectrum,
        eigcond,
        seed,
    } = spec.kind
    else {
        unreachable!("caller matched the kind");
    };
    require_positive("n", n)?;
    check_range(spectrum)?;
    let (lo, hi) = spectrum;
    if lo <= 0.0 && hi >= 0.0 || lo <= 1.0 && hi >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "spectrum range ({lo}, {hi}) must exclude 0 and 1"
        )));
    }
    if !(eigcond >= 1.0) {
        return Err(Error::InvalidArgument(format!("eigcond must be >= 1, got {eigcond}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lam = sample_spectrum(n, spectrum, &mut rng);
    let (u, u_inv) = if eigcond == 1.0 {
        let q = random_orthogonal(n, &mut rng);
        let qt = q.transpose();
        (q, qt)
    } else {
        let q1 = random_orthogonal(n, &mut rng);
        let q2 = random_orthogonal(n, &mut rng);
        let grade = DVector::from_fn(n, |i, _| {
            if n == 1 {
                1.0
            } else {
                eigcond.powf(i as f64 / (n - 1) as f64)
            }
        });
        let inv_grade = grade.map(|g| 1.0 / g);
        let u = &q1 * DMatrix::from_diagonal(&grade) * q2.transpose();
        let u_inv = &q2 * DMatrix::from_diagonal(&inv_grade) * q1.transpose();
        (u, u_inv)
    };
    let mut m = &u * DMatrix::from_diagonal(&lam) * &u_inv;
    if eigcond == 1.0 {
        m = (&m + m.transpose()) * 0.5;
    }
    let a = DMatrix::identity(n, n) - &m;
    check_nonsingular(&a)?;
    let star = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let b = &a * &star;
    let spectral = SpectralData::from_parts(lam.iter().copied().collect(), Some(u), &m, eigcond == 1.0)?;
    let u0 = initial_guess(spec.u0, n);
    Ok((
        LinearProblem {
            operator: dense(a)?,
            rhs: b,
            u0,
            exact_solution: Some(star),
        },
        spectral,
    ))
}
