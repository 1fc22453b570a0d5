//! Convergence-bound quantities: the Chebyshev factor ε(a,b,s), the discrete
//! min-max factor χ(s), spectral summaries, and the composite one-step and
//! alternating-method bounds. Bounds are refused when their hypotheses fail.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::lp;

/// Absolute slack used when comparing an observed value with a bound.
pub const BOUND_SLACK: f64 = 1e-9;

/// Eigen-summary of `M = UΛU⁻¹`.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub eigenvalues: Vec<f64>,
    /// `κ₂(U)`; exactly 1 for symmetric `M`.
    pub eigvec_cond: f64,
    /// Enclosing interval `[a, b]` (the eigenvalue hull).
    pub interval: (f64, f64),
    pub is_symmetric: bool,
    /// `M` symmetric positive definite.
    pub is_spd: bool,
    pub interval_excludes_0_and_1: bool,
    /// `‖M‖₂`.
    pub m_norm: f64,
    /// Columns are unit-norm eigenvectors, when available.
    pub eigenvectors: Option<DMatrix<f64>>,
}

impl SpectralData {
    /// Assembles spectral data from known eigenpairs. For symmetric `M` the
    /// condition number is taken as exactly 1.
    pub fn from_parts(
        eigenvalues: Vec<f64>,
        eigenvectors: Option<DMatrix<f64>>,
        m: &DMatrix<f64>,
        symmetric: bool,
    ) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidArgument("empty spectrum".into()));
        }
        if eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("eigenvalues"));
        }
        let eigvec_cond = if symmetric {
            1.0
        } else {
            match &eigenvectors {
                Some(u) => condition_number(u),
                None => {
                    return Err(Error::Precondition(
                        "eigenvectors are required for non-symmetric M".into(),
                    ))
                }
            }
        };
        let lo = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let excludes = !(lo <= 0.0 && 0.0 <= hi) && !(lo <= 1.0 && 1.0 <= hi);
        Ok(Self {
            eigenvalues,
            eigvec_cond,
            interval: (lo, hi),
            is_symmetric: symmetric,
            is_spd: symmetric && lo > 0.0,
            interval_excludes_0_and_1: excludes,
            m_norm: m.singular_values().max(),
            eigenvectors,
        })
    }

    /// `A = I - M` is symmetric positive definite.
    pub fn a_is_spd(&self) -> bool {
        self.is_symmetric && self.interval.1 < 1.0
    }

    /// `λ_max(A) / λ_min(A)` for symmetric positive definite `A`.
    pub fn a_condition(&self) -> Result<f64> {
        if !self.a_is_spd() {
            return Err(Error::Precondition("A = I - M is not SPD".into()));
        }
        Ok((1.0 - self.interval.0) / (1.0 - self.interval.1))
    }

    fn require_interval(&self) -> Result<()> {
        if !self.interval_excludes_0_and_1 {
            let (a, b) = self.interval;
            return Err(Error::Precondition(format!("interval [{a}, {b}] contains 0 or 1")));
        }
        Ok(())
    }
}

fn condition_number(u: &DMatrix<f64>) -> f64 {
    let sv = u.singular_values();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / min
    }
}

/// Observed value against a bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub bound_value: f64,
    pub observed_value: f64,
    pub slack: f64,
    pub satisfied: bool,
}

impl BoundReport {
    pub fn new(bound_value: f64, observed_value: f64, slack: f64) -> Self {
        Self {
            bound_value,
            observed_value,
            slack,
            satisfied: observed_value <= bound_value + slack,
        }
    }
}

/// Chebyshev polynomial of the first kind, `C_s(x)`.
pub fn chebyshev_eval(s: u32, x: f64) -> f64 {
    match s {
        0 => 1.0,
        1 => x,
        _ if x.abs() <= 1.0 => (s as f64 * x.acos()).cos(),
        _ => {
            let mag = (s as f64 * x.abs().acosh()).cosh();
            if x < 0.0 && s % 2 == 1 {
                -mag
            } else {
                mag
            }
        }
    }
}

/// `ε(a,b,s) = 1/|C_s(1 + 2(1-β)/(β-α))|` with `α = 1/b`, `β = 1/a`: the
/// min-max of `|q(t)|` over `t ∈ [1/b, 1/a]` among degree-`s` polynomials
/// with `q(1) = 1`.
pub fn epsilon_bound(a: f64, b: f64, s: usize) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::NonFinite("interval endpoints"));
    }
    if a > b {
        return Err(Error::InvalidArgument(format!("interval [{a}, {b}] is empty")));
    }
    if (a <= 0.0 && 0.0 <= b) || (a <= 1.0 && 1.0 <= b) {
        return Err(Error::Precondition(format!("interval [{a}, {b}] contains 0 or 1")));
    }
    if s == 0 {
        return Ok(1.0);
    }
    if a == b {
        return Ok(0.0);
    }
    let (alpha, beta) = (1.0 / b, 1.0 / a);
    let x = 1.0 + 2.0 * (1.0 - beta) / (beta - alpha);
    // |x| > 1 here, so 1/|C_s(x)| = 1/cosh(sθ) with θ = acosh|x|
    let theta = x.abs().acosh();
    let e = (-(s as f64) * theta).exp();
    Ok(2.0 * e / (1.0 + e * e))
}

/// `χ(s) = min_{deg q ≤ s, q(1)=1} max_{t ∈ spectrum} |q(t)|` with
/// `q(t) = 1 + (t-1)p(t)`, solved through the dual linear program over
/// sign-split point weights.
pub fn chi_bound(spectrum: &[f64], degree: usize) -> Result<f64> {
    if spectrum.is_empty() {
        return Err(Error::InvalidArgument("empty spectrum".into()));
    }
    if spectrum.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("spectrum"));
    }
    if spectrum.contains(&1.0) {
        return Err(Error::Precondition("1 is in the spectrum".into()));
    }
    if degree == 0 {
        return Ok(1.0);
    }
    let mut pts = spectrum.to_vec();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    if degree >= pts.len() {
        return Ok(0.0);
    }
    // Chebyshev basis for p on the hull of spectrum ∪ {1}
    let lo = pts[0].min(1.0);
    let hi = pts[pts.len() - 1].max(1.0);
    let (mid, half) = ((hi + lo) / 2.0, (hi - lo) / 2.0);
    let basis = |t: f64, j: usize| chebyshev_eval(j as u32, (t - mid) / half);
    let npts = pts.len();
    let raw = DMatrix::from_fn(degree, npts, |j, i| (pts[i] - 1.0) * basis(pts[i], j));
    // orthonormal rows spanning the same row space; near-dependent directions
    // are dropped, which can only relax the dual and enlarge the bound
    let svd = raw.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let smax = svd.singular_values.max();
    let kept: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-12 * smax)
        .collect();
    let rows = kept.len();
    let mut a = DMatrix::zeros(rows + 1, 2 * npts);
    for (r, &k) in kept.iter().enumerate() {
        for i in 0..npts {
            a[(r, i)] = v_t[(k, i)];
            a[(r, npts + i)] = -v_t[(k, i)];
        }
    }
    for i in 0..2 * npts {
        a[(rows, i)] = 1.0;
    }
    let mut b = DVector::zeros(rows + 1);
    b[rows] = 1.0;
    let c = DVector::from_fn(2 * npts, |i, _| if i < npts { 1.0 } else { -1.0 });
    let sol = lp::maximize(&a, &b, &c)?;
    Ok(sol.value.clamp(0.0, 1.0))
}

/// `2((√κ - 1)/(√κ + 1))^s`.
pub fn kappa_form(kappa: f64, s: usize) -> f64 {
    let sk = kappa.sqrt();
    2.0 * ((sk - 1.0) / (sk + 1.0)).powi(s as i32)
}

/// One NGMRES(`m`) step from iteration `k`, after Richardson steps from `u₀`.
///
/// For `m < k` the bound is `ε(a,b,m+1)·κ₂(U)·baseline` with
/// `baseline = ‖M r_k‖`; for `m = k` it is `χ(m+1)·κ₂(U)·baseline` with
/// `baseline = ‖r₀‖`.
pub fn evaluate_one_step_bound(
    spec: &SpectralData,
    m: usize,
    k: usize,
    observed: f64,
    baseline: f64,
) -> Result<BoundReport> {
    check_observed(observed, baseline)?;
    let factor = if m < k {
        spec.require_interval()?;
        epsilon_bound(spec.interval.0, spec.interval.1, m + 1)?
    } else if m == k {
        chi_bound(&spec.eigenvalues, m + 1)?
    } else {
        return Err(Error::Precondition(format!("window depth {m} exceeds iteration {k}")));
    };
    Ok(BoundReport::new(
        factor * spec.eigvec_cond * baseline,
        observed,
        BOUND_SLACK,
    ))
}

/// Bounds for aNGMRES(`m`,`p`) at iteration `jp`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngmresBound {
    /// `(ε(a,b,m+1)‖M‖^p κ₂(U))^j ‖r₀‖` for `m < p-1`, `(χ(m+1) κ₂(U))^j ‖r₀‖` for `p = m+1`.
    pub primary: BoundReport,
    /// `(2((√κ-1)/(√κ+1))^{m+1})^j ‖r₀‖` when `p = m+1` and `A` is SPD.
    pub kappa_form: Option<BoundReport>,
}

pub fn evaluate_angmres_bound(
    spec: &SpectralData,
    m: usize,
    p: usize,
    j: usize,
    observed: f64,
    r0_norm: f64,
) -> Result<AngmresBound> {
    check_observed(observed, r0_norm)?;
    if p == 0 {
        return Err(Error::InvalidArgument("period must be at least 1".into()));
    }
    let (factor, kappa) = if m + 1 < p {
        spec.require_interval()?;
        let eps = epsilon_bound(spec.interval.0, spec.interval.1, m + 1)?;
        (eps * spec.m_norm.powi(p as i32) * spec.eigvec_cond, None)
    } else if m + 1 == p {
        let chi = chi_bound(&spec.eigenvalues, m + 1)?;
        let kf = if spec.a_is_spd() {
            Some(kappa_form(spec.a_condition()?, m + 1))
        } else {
            None
        };
        (chi * spec.eigvec_cond, kf)
    } else {
        return Err(Error::Precondition(format!("no bound for m = {m} with period p = {p}")));
    };
    let ji = j as i32;
    Ok(AngmresBound {
        primary: BoundReport::new(factor.powi(ji) * r0_norm, observed, BOUND_SLACK),
        kappa_form: kappa.map(|f| BoundReport::new(f.powi(ji) * r0_norm, observed, BOUND_SLACK)),
    })
}

/// Weighted error bound for symmetric `M = UΛUᵀ`:
/// `‖(I-Λ)Uᵀe_{k+1}‖ ≤ ε(a,b,m+1)·‖(I-Λ)UᵀMe_k‖` for `m < k`.
pub fn evaluate_weighted_error_bound(
    spec: &SpectralData,
    m: usize,
    k: usize,
    e_next: &DVector<f64>,
    e_k: &DVector<f64>,
) -> Result<BoundReport> {
    if !spec.is_symmetric {
        return Err(Error::Precondition("weighted error bound needs symmetric M".into()));
    }
    if m >= k {
        return Err(Error::Precondition(format!(
            "weighted error bound needs m < k, got m = {m}, k = {k}"
        )));
    }
    spec.require_interval()?;
    let u = spec
        .eigenvectors
        .as_ref()
        .ok_or_else(|| Error::Precondition("eigenvectors are required".into()))?;
    let n = u.nrows();
    for v in [e_next, e_k] {
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: v.len(),
            });
        }
    }
    let lam = DVector::from_vec(spec.eigenvalues.clone());
    let weight = lam.map(|l| 1.0 - l);
    let ut = u.transpose();
    let lhs = (&ut * e_next).component_mul(&weight).norm();
    // UᵀM e_k = Λ Uᵀ e_k
    let rhs = (&ut * e_k).component_mul(&lam).component_mul(&weight).norm();
    let eps = epsilon_bound(spec.interval.0, spec.interval.1, m + 1)?;
    Ok(BoundReport::new(eps * rhs, lhs, BOUND_SLACK))
}

fn check_observed(observed: f64, baseline: f64) -> Result<()> {
    if !(observed.is_finite() && baseline.is_finite()) {
        return Err(Error::NonFinite("bound inputs"));
    }
    if observed < 0.0 || baseline < 0.0 {
        return Err(Error::InvalidArgument("norms must be non-negative".into()));
    }
    Ok(())
}

/// Real eigenvalues and eigenvector condition of a small dense matrix.
///
/// Refuses complex spectra (imaginary parts above `1e-10·scale`) and
/// matrices whose eigenvectors do not span the space.
pub fn spectral_data_from_dense(m: &DMatrix<f64>) -> Result<SpectralData> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: m.ncols(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    if n > 500 {
        return Err(Error::InvalidArgument(format!(
            "dense eigen-analysis limited to n ≤ 500, got {n}"
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix"));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let asym = (m - m.transpose()).amax();
    if asym <= 1e-14 * scale {
        let sym = (m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        return SpectralData::from_parts(
            eig.eigenvalues.iter().copied().collect(),
            Some(eig.eigenvectors),
            m,
            true,
        );
    }
    let complex = m.complex_eigenvalues();
    let mut eigs = Vec::with_capacity(n);
    for z in complex.iter() {
        if z.im.abs() > 1e-10 * scale {
            return Err(Error::ComplexSpectrum { re: z.re, im: z.im });
        }
        eigs.push(z.re);
    }
    eigs.sort_by(f64::total_cmp);
    // group nearly equal eigenvalues and take null-space bases of M - λI
    let cluster_tol = 1e-8 * scale;
    let null_tol = 1e-9 * scale;
    let mut u = DMatrix::zeros(n, n);
    let mut col = 0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && eigs[j] - eigs[j - 1] <= cluster_tol {
            j += 1;
        }
        let mult = j - i;
        let lam = eigs[i..j].iter().sum::<f64>() / mult as f64;
        let shifted = m - DMatrix::identity(n, n) * lam;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.as_ref().expect("requested right singular vectors");
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| svd.singular_values[x].total_cmp(&svd.singular_values[y]));
        for &idx in order.iter().take(mult) {
            if svd.singular_values[idx] > null_tol.max(1e3 * f64::EPSILON * scale * mult as f64) {
                return Err(Error::NotDiagonalizable(format!(
                    "eigenvalue {lam} of multiplicity {mult} lacks independent eigenvectors"
                )));
            }
            u.set_column(col, &v_t.row(idx).transpose());
            col += 1;
        }
        i = j;
    }
    let cond = condition_number(&u);
    if !(cond <= 1e12) {
        return Err(Error::NotDiagonalizable(format!("eigenvector condition {cond:e}")));
    }
    SpectralData::from_parts(eigs, Some(u), m, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Max of |q| over `pts` for q(t) = 1 + (t-1)(c0 + c1 t).
    fn q_max(pts: &[f64], c0: f64, c1: f64) -> f64 {
        pts.iter()
            .map(|&t| (1.0 + (t - 1.0) * (c0 + c1 * t)).abs())
            .fold(0.0, f64::max)
    }

    /// Lawson's reweighted least squares for the discrete min-max problem.
    /// Every iterate is a feasible polynomial, so the value bounds χ from above.
    fn lawson_chi(pts: &[f64], degree: usize, iters: usize) -> f64 {
        let n = pts.len();
        let (lo, hi) = (
            pts.iter().copied().fold(1.0, f64::min),
            pts.iter().copied().fold(1.0, f64::max),
        );
        let scale = |t: f64| (2.0 * t - lo - hi) / (hi - lo);
        let mut w = vec![1.0 / n as f64; n];
        let mut best = f64::INFINITY;
        for _ in 0..iters {
            let a = DMatrix::from_fn(n, degree, |i, j| {
                w[i].sqrt() * (pts[i] - 1.0) * scale(pts[i]).powi(j as i32)
            });
            let rhs = DVector::from_fn(n, |i, _| -w[i].sqrt());
            let c = a.clone().svd(true, true).solve(&rhs, 1e-14).unwrap();
            let q: Vec<f64> = (0..n)
                .map(|i| {
                    let p: f64 = (0..degree).map(|j| c[j] * scale(pts[i]).powi(j as i32)).sum();
                    (1.0 + (pts[i] - 1.0) * p).abs()
                })
                .collect();
            best = best.min(q.iter().copied().fold(0.0, f64::max));
            let total: f64 = (0..n).map(|i| w[i] * q[i]).sum();
            for i in 0..n {
                w[i] = w[i] * q[i] / total;
            }
        }
        best
    }

    #[test]
    fn chi_matches_lawson_for_higher_degrees() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..12 {
            let npts = rng.random_range(8..=17);
            let pts: Vec<f64> = (0..npts).map(|_| rng.random_range(0.2..0.8)).collect();
            for degree in 3..=7 {
                let chi = chi_bound(&pts, degree).unwrap();
                let upper = lawson_chi(&pts, degree, 4000);
                assert!(
                    chi <= upper * (1.0 + 1e-9),
                    "degree {degree}: χ {chi} above feasible {upper}"
                );
                assert!(
                    chi >= upper * (1.0 - 1e-3),
                    "degree {degree}: χ {chi} vs Lawson {upper}"
                );
            }
        }
    }

    /// Grid search with successive refinement over the coefficients of p.
    fn grid_chi(pts: &[f64], degree: usize) -> f64 {
        if degree == 0 {
            return 1.0;
        }
        let (mut c0, mut c1) = (0.0, 0.0);
        let mut best = q_max(pts, 0.0, 0.0);
        let mut width = 64.0;
        for _ in 0..60 {
            let steps = 40;
            let (b0, b1) = (c0, c1);
            for i in 0..=steps {
                let x = b0 - width + 2.0 * width * i as f64 / steps as f64;
                let ys: Vec<f64> = if degree >= 2 {
                    (0..=steps)
                        .map(|k| b1 - width + 2.0 * width * k as f64 / steps as f64)
                        .collect()
                } else {
                    vec![0.0]
                };
                for y in ys {
                    let v = q_max(pts, x, y);
                    if v < best {
                        best = v;
                        c0 = x;
                        c1 = y;
                    }
                }
            }
            width *= 0.7;
        }
        best
    }

    #[test]
    fn chebyshev_values() {
        assert_eq!(chebyshev_eval(0, 123.0), 1.0);
        assert_eq!(chebyshev_eval(1, -0.3), -0.3);
        assert_relative_eq!(chebyshev_eval(2, 0.5), -0.5, epsilon = 1e-15);
        assert_relative_eq!(chebyshev_eval(3, 2.0), 26.0, epsilon = 1e-12);
        for &x in &[-3.0, -1.5, -0.7, 0.2, 0.9, 1.3, 4.0] {
            let (mut c0, mut c1) = (1.0, x);
            for s in 2..12u32 {
                let c2 = 2.0 * x * c1 - c0;
                assert_relative_eq!(chebyshev_eval(s, x), c2, max_relative = 1e-10, epsilon = 1e-12);
                c0 = c1;
                c1 = c2;
            }
        }
        assert!(chebyshev_eval(5000, 3.0).is_infinite());
    }

    #[test]
    fn epsilon_examples() {
        assert_eq!(epsilon_bound(0.2, 0.8, 0).unwrap(), 1.0);
        assert!(epsilon_bound(-0.2, 0.8, 2).is_err());
        assert!(epsilon_bound(0.2, 1.8, 2).is_err());
        assert!(epsilon_bound(0.8, 0.2, 2).is_err());
        // closed form against the explicit Chebyshev value
        let (a, b) = (0.2f64, 0.8f64);
        let (al, be) = (1.0 / b, 1.0 / a);
        let x = 1.0 + 2.0 * (1.0 - be) / (be - al);
        for s in 1..8 {
            assert_relative_eq!(
                epsilon_bound(a, b, s).unwrap(),
                1.0 / chebyshev_eval(s as u32, x).abs(),
                max_relative = 1e-12
            );
        }
        assert!(epsilon_bound(0.2, 0.8, 10_000).unwrap() >= 0.0);
    }

    #[test]
    fn epsilon_matches_grid_search_on_interval() {
        // degree-2 min-max over a dense grid on [1/b, 1/a]
        let (a, b) = (0.2, 0.8);
        let grid: Vec<f64> = (0..200)
            .map(|i| 1.0 / b + (1.0 / a - 1.0 / b) * i as f64 / 199.0)
            .collect();
        let oracle = grid_chi(&grid, 2);
        let eps = epsilon_bound(a, b, 2).unwrap();
        assert!((oracle - eps).abs() <= 1e-4 * eps, "grid {oracle} vs closed form {eps}");
    }

    #[test]
    fn epsilon_collapses_toward_singleton() {
        let a = 0.5;
        let mut prev = f64::INFINITY;
        for d in [1e-1, 1e-2, 1e-3, 1e-4] {
            let v = epsilon_bound(a - d, a, 1).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-3);
        assert_eq!(chi_bound(&[a], 1).unwrap(), 0.0);
        assert_eq!(epsilon_bound(a, a, 1).unwrap(), 0.0);
    }

    #[test]
    fn chi_examples() {
        assert_eq!(chi_bound(&[0.3], 1).unwrap(), 0.0);
        assert_eq!(chi_bound(&[0.3, -0.4], 0).unwrap(), 1.0);
        assert_relative_eq!(chi_bound(&[-0.5, 0.5], 1).unwrap(), 0.5, epsilon = 1e-12);
        assert_eq!(chi_bound(&[0.1, 0.2, 0.3], 3).unwrap(), 0.0);
        assert_eq!(chi_bound(&[0.1, 0.1, 0.3], 2).unwrap(), 0.0);
        assert!(chi_bound(&[0.5, 1.0], 1).is_err());
        assert!(chi_bound(&[], 1).is_err());
    }

    #[test]
    fn chi_is_one_point_golden_section_for_degree_one() {
        // 1-D oracle: minimize max |1 + c(t-1)| by golden-section search
        let pts = [-0.5, 0.2, 0.7];
        let f = |c: f64| pts.iter().map(|&t| (1.0 + c * (t - 1.0)).abs()).fold(0.0, f64::max);
        let (mut lo, mut hi) = (-10.0f64, 10.0f64);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let x1 = hi - g * (hi - lo);
            let x2 = lo + g * (hi - lo);
            if f(x1) < f(x2) {
                hi = x2;
            } else {
                lo = x1;
            }
        }
        assert_relative_eq!(chi_bound(&pts, 1).unwrap(), f((lo + hi) / 2.0), epsilon = 1e-9);
    }

    #[test]
    fn one_step_bound_branches() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![0.2, 0.5, 0.8]));
        let s = spectral_data_from_dense(&m).unwrap();
        let r = evaluate_one_step_bound(&s, 1, 5, 0.0, 1.0).unwrap();
        assert!(r.satisfied);
        assert_relative_eq!(r.bound_value, epsilon_bound(0.2, 0.8, 2).unwrap(), epsilon = 1e-15);
        let r = evaluate_one_step_bound(&s, 2, 2, 0.0, 1.0).unwrap();
        assert_eq!(r.bound_value, 0.0);
        assert!(evaluate_one_step_bound(&s, 3, 2, 0.0, 1.0).is_err());
        let bad = spectral_data_from_dense(&DMatrix::from_diagonal(&DVector::from_vec(vec![-0.2, 0.5]))).unwrap();
        assert!(evaluate_one_step_bound(&bad, 1, 3, 0.0, 1.0).is_err());
        let r = BoundReport::new(1.0, 1.0 + 0.5e-9, BOUND_SLACK);
        assert!(r.satisfied);
        assert!(!BoundReport::new(1.0, 1.0 + 2e-9, BOUND_SLACK).satisfied);
    }

    #[test]
    fn angmres_bound_branches() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![0.2, 0.4, 0.6, 0.8]));
        let s = spectral_data_from_dense(&m).unwrap();
        let b = evaluate_angmres_bound(&s, 1, 4, 0, 0.5, 0.5).unwrap();
        assert_eq!(b.primary.bound_value, 0.5);
        assert!(b.primary.satisfied);
        let b = evaluate_angmres_bound(&s, 1, 4, 2, 0.0, 1.0).unwrap();
        let f = epsilon_bound(0.2, 0.8, 2).unwrap() * 0.8f64.powi(4);
        assert_relative_eq!(b.primary.bound_value, f * f, max_relative = 1e-12);
        assert!(b.kappa_form.is_none());
        let b = evaluate_angmres_bound(&s, 2, 3, 1, 0.0, 1.0).unwrap();
        let kf = b.kappa_form.unwrap();
        assert!(b.primary.bound_value <= kf.bound_value + 1e-15);
        assert_relative_eq!(kf.bound_value, kappa_form(4.0, 3), max_relative = 1e-12);
        assert!(evaluate_angmres_bound(&s, 3, 3, 1, 0.0, 1.0).is_err());
    }

    #[test]
    fn spectral_data_examples() {
        let n = 8;
        let t = DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
            0 => 2.0,
            1 => -1.0,
            _ => 0.0,
        });
        let s = spectral_data_from_dense(&t).unwrap();
        let mut expect: Vec<f64> = (1..=n)
            .map(|i| 2.0 - 2.0 * (i as f64 * std::f64::consts::PI / (n + 1) as f64).cos())
            .collect();
        expect.sort_by(f64::total_cmp);
        let mut got = s.eigenvalues.clone();
        got.sort_by(f64::total_cmp);
        for (g, e) in got.iter().zip(&expect) {
            assert_relative_eq!(g, e, epsilon = 1e-8);
        }
        assert_eq!(s.eigvec_cond, 1.0);

        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 0.7, 0.5]));
        let s = spectral_data_from_dense(&d).unwrap();
        assert_eq!(s.eigvec_cond, 1.0);
        assert_eq!(s.interval, (0.3, 0.7));
        assert!(s.interval_excludes_0_and_1 && s.is_spd && s.a_is_spd());

        let jordan = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 0.5]);
        assert!(matches!(
            spectral_data_from_dense(&jordan),
            Err(Error::NotDiagonalizable(_))
        ));
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(matches!(
            spectral_data_from_dense(&rot),
            Err(Error::ComplexSpectrum { .. })
        ));

        // non-normal with known eigenvectors
        let u = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.1]);
        let m = &u * DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 0.6])) * u.clone().try_inverse().unwrap();
        let s = spectral_data_from_dense(&m).unwrap();
        assert_relative_eq!(s.eigenvalues[0], 0.3, epsilon = 1e-12);
        assert_relative_eq!(s.eigenvalues[1], 0.6, epsilon = 1e-12);
        let mut un = u.clone();
        for mut c in un.column_iter_mut() {
            let nrm = c.norm();
            c /= nrm;
        }
        assert_relative_eq!(s.eigvec_cond, condition_number(&un), max_relative = 1e-8);
    }

    proptest! {
        #[test]
        fn epsilon_non_increasing(a in 0.05f64..0.9, w in 0.01f64..0.5, s in 0usize..20) {
            let b = (a + w).min(0.99);
            prop_assume!(a < b);
            let e0 = epsilon_bound(a, b, s).unwrap();
            let e1 = epsilon_bound(a, b, s + 1).unwrap();
            prop_assert!(e1 <= e0 * (1.0 + 1e-14));
            prop_assert!(e0 > 0.0 && e0 <= 1.0);
        }

        #[test]
        fn chi_non_increasing_and_vanishing(pts in proptest::collection::vec(-0.9f64..0.9, 1..7)) {
            let mut distinct = pts.clone();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            let mut prev = 1.0;
            for d in 0..=distinct.len() {
                let c = chi_bound(&pts, d).unwrap();
                prop_assert!(c <= prev + 1e-9);
                prev = c;
            }
            prop_assert_eq!(chi_bound(&pts, distinct.len()).unwrap(), 0.0);
        }

        #[test]
        fn chi_below_interval_bound(pts in proptest::collection::vec(0.2f64..0.8, 2..8), s in 1usize..5) {
            let a = pts.iter().copied().fold(f64::INFINITY, f64::min);
            let b = pts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assume!(b - a > 1e-6);
            // χ over Σ(M) against ε over the enclosing interval, transformed by t ↦ 1/t
            let inv: Vec<f64> = pts.iter().map(|t| 1.0 / t).collect();
            let chi = chi_bound(&inv, s).unwrap();
            prop_assert!(chi <= epsilon_bound(a, b, s).unwrap() + 1e-9);
        }

        #[test]
        fn chi_matches_grid_search(pts in proptest::collection::vec(-0.95f64..0.95, 1..5), degree in 0usize..3) {
            let oracle = grid_chi(&pts, degree);
            let chi = chi_bound(&pts, degree).unwrap();
            prop_assert!((oracle - chi).abs() <= 1e-6, "lp {} grid {}", chi, oracle);
        }
    }
}
