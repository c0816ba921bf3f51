//! Size-control certificates from eigenvalue majorization.
//!
//! Given the benchmark `Σ0`, weights `W0` and a critical value with size
//! `α` under `Σ0`, the margins `ν_i(θ)` computed here certify that the
//! rejection probability stays at most `α` under `Σᵖ(θ)` (and under any
//! mixture of such matrices) whenever all their partial sums are
//! nonnegative. The module applies the check to Matérn families on a
//! spatial design and to kinked-spectrum AR(1) processes on a regular time
//! grid with cosine weights.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;

use crate::covariance::{
    avg_pairwise_correlation, calibrate_with_table, covariance_matrix, CovarianceKernel, DistanceTable,
    KernelFamily,
};
use crate::eigen::{BasisSource, PCBasis};
use crate::error::{input_err, numeric_err, Result};
use crate::geometry::SpatialDesign;
use crate::linalg::{psd_sqrt, sym_eigen_desc, sym_eigenvalues_desc, symmetrize};
use crate::quadrature::GaussLegendre;
use crate::rejection::{omega_matrix, CvOptions, OMEGA_POSITIVE_TOL};
use crate::scpc::{select_q_with_weights, QSelection};

/// Eigenvector matrices with a larger condition number count as defective.
pub const MAX_EIGENVECTOR_CONDITION: f64 = 1e10;

/// Margins `ν_1..ν_q` for one alternative covariance matrix.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NuMargins {
    pub nu: Vec<f64>,
    pub partial_sums: Vec<f64>,
    /// Tolerance the partial sums were compared against.
    pub tolerance: f64,
    pub feasible: bool,
    /// `λ1(Ā(θ))` after normalization.
    pub lambda1_abar: f64,
}

impl NuMargins {
    /// Smallest partial sum (the binding constraint).
    pub fn worst(&self) -> f64 {
        self.partial_sums.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Everything about the benchmark needed to evaluate margins for many
/// alternatives: `P`, `P⁻¹`, `D(cv)` and the normalized spectrum of `A0`.
#[derive(Debug, Clone)]
pub struct MarginEvaluator {
    w0: DMatrix<f64>,
    cv: f64,
    p: DMatrix<f64>,
    p_inv: DMatrix<f64>,
    /// Eigenvalues of `-A0 / λ1(A0)`, descending (`q + 1` values).
    neg_a0: Vec<f64>,
    tolerance: f64,
}

fn d_times(m: &DMatrix<f64>, cv: f64) -> DMatrix<f64> {
    let mut out = m.clone();
    let c2 = cv * cv;
    for i in 1..out.nrows() {
        out.row_mut(i).scale_mut(-c2);
    }
    out
}

/// Real eigenvalues of `D(cv)Ω` (via the symmetric similar form), descending,
/// after checking that exactly one is positive.
fn d_omega_eigenvalues(omega: &DMatrix<f64>, cv: f64) -> Result<Vec<f64>> {
    let s = psd_sqrt(omega, 1e-10)?;
    let vals = sym_eigenvalues_desc(symmetrize(&(&s * d_times(&s, cv))));
    check_one_positive(&vals)?;
    Ok(vals)
}

fn check_one_positive(vals: &[f64]) -> Result<()> {
    let top = vals[0];
    if !(top > 0.0) {
        return Err(numeric_err!("no positive eigenvalue (largest {top:.3e})"));
    }
    if vals[1] > OMEGA_POSITIVE_TOL * top {
        return Err(numeric_err!(
            "more than one positive eigenvalue ({top:.3e}, {:.3e})",
            vals[1]
        ));
    }
    Ok(())
}

impl MarginEvaluator {
    /// Prepares the benchmark side. If the eigenvectors of `A0` are badly
    /// conditioned, `cv` is nudged by `1e-8` once before giving up.
    pub fn new(sigma0: &DMatrix<f64>, w0: &DMatrix<f64>, cv: f64) -> Result<Self> {
        match Self::try_new(sigma0, w0, cv) {
            Err(e) if matches!(e, crate::error::ScpcError::Numeric(ref m) if m.contains("condition")) => {
                Self::try_new(sigma0, w0, cv + 1e-8)
            }
            other => other,
        }
    }

    fn try_new(sigma0: &DMatrix<f64>, w0: &DMatrix<f64>, cv: f64) -> Result<Self> {
        if !(cv > 0.0) {
            return Err(input_err!("critical value must be positive, got {cv}"));
        }
        let omega0 = omega_matrix(w0, sigma0)?;
        let s0 = psd_sqrt(&omega0, 1e-10)?;
        let (vals, v) = sym_eigen_desc(symmetrize(&(&s0 * d_times(&s0, cv))));
        check_one_positive(&vals)?;
        // A0 = S0⁻¹ (S0 D S0) S0, so its eigenvectors are S0⁻¹ V.
        let lu = s0.clone().lu();
        let mut p = lu.solve(&v).ok_or_else(|| numeric_err!("Ω0 is singular"))?;
        for mut col in p.column_iter_mut() {
            let norm = col.norm();
            col /= norm;
        }
        let sv = p.singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        if !(smin > 0.0) || smax / smin > MAX_EIGENVECTOR_CONDITION {
            return Err(numeric_err!(
                "eigenvector matrix of D(cv)Ω0 is ill-conditioned (condition number {:.3e})",
                smax / smin
            ));
        }
        let p_inv = p.clone().try_inverse().ok_or_else(|| numeric_err!("eigenvector matrix is singular"))?;
        let top = vals[0];
        let mut neg_a0: Vec<f64> = vals.iter().map(|x| -x / top).collect();
        neg_a0.sort_by(|a, b| b.total_cmp(a));
        let tolerance = 1e-8 * neg_a0[0].max(1.0);
        Ok(MarginEvaluator { w0: w0.clone(), cv, p, p_inv, neg_a0, tolerance })
    }

    /// Critical value actually used (after any conditioning nudge).
    pub fn cv(&self) -> f64 {
        self.cv
    }

    /// Margins for the alternative `Σᵖ(θ)`.
    pub fn margins(&self, sigma_theta: &DMatrix<f64>) -> Result<NuMargins> {
        self.margins_from_omega(&omega_matrix(&self.w0, sigma_theta)?)
    }

    /// Margins from `Ω(θ) = W0'Σᵖ(θ)W0`.
    pub fn margins_from_omega(&self, omega_theta: &DMatrix<f64>) -> Result<NuMargins> {
        let k = omega_theta.nrows();
        let q = k - 1;
        let lam1 = d_omega_eigenvalues(omega_theta, self.cv)?[0];
        let a = &self.p_inv * d_times(omega_theta, self.cv) * &self.p / lam1;
        let abar = symmetrize(&a);
        let ev = sym_eigenvalues_desc(abar);
        let l1 = ev[0];
        // eigenvalues of -Ā, descending
        let neg: Vec<f64> = ev.iter().rev().map(|x| -x).collect();
        // λ_j(·) is 1-based: λ_j = neg[j - 1]
        let mut nu = Vec::with_capacity(q);
        nu.push(neg[q - 1] - l1 * self.neg_a0[q - 1] - (l1 - 1.0));
        for i in 2..=q {
            let j = q + 1 - i;
            nu.push(neg[j - 1] - l1 * self.neg_a0[j - 1]);
        }
        let mut partial_sums = Vec::with_capacity(q);
        let mut s = 0.0;
        for v in &nu {
            s += v;
            partial_sums.push(s);
        }
        let feasible = partial_sums.iter().all(|p| *p >= -self.tolerance);
        Ok(NuMargins { nu, partial_sums, tolerance: self.tolerance, feasible, lambda1_abar: l1 })
    }
}

/// Margins `ν_i` certifying size control under `sigma_theta` for the test
/// with weights `W0` and critical value `cv` calibrated under `sigma0`.
pub fn nu_margins(
    sigma0: &DMatrix<f64>,
    sigma_theta: &DMatrix<f64>,
    w0: &DMatrix<f64>,
    cv: f64,
) -> Result<NuMargins> {
    MarginEvaluator::new(sigma0, w0, cv)?.margins(sigma_theta)
}

/// Settings of the Matérn sweep.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RobustnessOptions {
    pub families: Vec<KernelFamily>,
    /// Log-spaced `c` values per family.
    pub grid_points: usize,
    /// Range of average correlations spanned by each family's grid.
    pub rho_range: (f64, f64),
}

impl Default for RobustnessOptions {
    fn default() -> Self {
        RobustnessOptions { families: KernelFamily::ALL.to_vec(), grid_points: 60, rho_range: (1e-4, 0.5) }
    }
}

/// One alternative `θ = (family, c)` in the sweep.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ThetaPoint {
    pub family: KernelFamily,
    pub c: f64,
    pub rho: f64,
    pub margins: NuMargins,
}

/// Certified range of average correlations and the full sweep.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RobustnessReport {
    pub rho0: f64,
    pub rho_l: f64,
    pub rho_u: f64,
    pub points: Vec<ThetaPoint>,
    /// Index into `points` of the smallest partial sum.
    pub worst: usize,
    /// Points that fail the check, in ascending order of average correlation.
    pub infeasible: Vec<usize>,
}

/// Sweeps Matérn alternatives on the design and reports the widest range
/// `[ρ_L, ρ_U]` of average correlations around the benchmark in which
/// every evaluated alternative (from every family) passes.
///
/// The benchmark is the exponential kernel at `c0`, with weights `W0` and
/// critical value `cv`.
pub fn matern_robust_range(
    design: &SpatialDesign,
    c0: f64,
    w0: &DMatrix<f64>,
    cv: f64,
    opts: &RobustnessOptions,
) -> Result<RobustnessReport> {
    if opts.families.is_empty() || opts.grid_points < 2 {
        return Err(input_err!("need at least one family and two grid points"));
    }
    let (rho_lo, rho_hi) = opts.rho_range;
    if !(0.0 < rho_lo && rho_lo < rho_hi && rho_hi < 1.0) {
        return Err(input_err!("average-correlation range must satisfy 0 < lo < hi < 1"));
    }
    let sigma0 = covariance_matrix(&CovarianceKernel::exponential(c0)?, design);
    let rho0 = avg_pairwise_correlation(&sigma0)?;
    let eval = MarginEvaluator::new(&sigma0, w0, cv)?;
    let table = DistanceTable::new(design);
    let mut points = Vec::new();
    for &family in &opts.families {
        let c_small = calibrate_with_table(&table, family, rho_hi)?;
        let c_large = calibrate_with_table(&table, family, rho_lo)?;
        let mut cs: Vec<f64> = (0..opts.grid_points)
            .map(|k| {
                let t = k as f64 / (opts.grid_points - 1) as f64;
                libm::exp(libm::log(c_small) + t * (libm::log(c_large) - libm::log(c_small)))
            })
            .collect();
        cs.push(if family == KernelFamily::Exponential { c0 } else { calibrate_with_table(&table, family, rho0)? });
        for c in cs {
            let sigma = covariance_matrix(&CovarianceKernel::new(family, c)?, design);
            let margins = eval.margins(&sigma).map_err(|e| e.at(alloc::format!("{family} c = {c:.6e}")))?;
            points.push(ThetaPoint { family, c, rho: table.avg_correlation(family, c), margins });
        }
    }
    points.sort_by(|a, b| a.rho.total_cmp(&b.rho));

    let tie = 1e-9 * rho0;
    let at_or_below: Vec<usize> = (0..points.len()).filter(|&i| points[i].rho <= rho0 + tie).collect();
    let above: Vec<usize> = (0..points.len()).filter(|&i| points[i].rho > rho0 + tie).collect();
    let mut rho_l = rho0;
    let mut rho_u = rho0;
    let ties_ok = points
        .iter()
        .filter(|p| (p.rho - rho0).abs() <= tie)
        .all(|p| p.margins.feasible);
    if ties_ok {
        for &i in at_or_below.iter().rev() {
            if !points[i].margins.feasible {
                break;
            }
            rho_l = rho_l.min(points[i].rho);
        }
        for &i in &above {
            if !points[i].margins.feasible {
                break;
            }
            rho_u = points[i].rho;
        }
    }
    let worst = (0..points.len())
        .min_by(|&a, &b| points[a].margins.worst().total_cmp(&points[b].margins.worst()))
        .expect("non-empty sweep");
    let infeasible = (0..points.len()).filter(|&i| !points[i].margins.feasible).collect();
    Ok(RobustnessReport { rho0, rho_l, rho_u, points, worst, infeasible })
}

/// Cosine weights `√2 cos(jπ s_l)`, `j = 1..q`, on the midpoint grid
/// `s_l = (l - 1/2)/n`.
pub fn cosine_weights(n: usize, q: usize) -> Result<PCBasis> {
    if q == 0 || q >= n {
        return Err(input_err!("need 1 <= q < n cosine weights, got q = {q}, n = {n}"));
    }
    let r = DMatrix::from_fn(n, q, |l, j| {
        let s = (l as f64 + 0.5) / n as f64;
        libm::sqrt(2.0) * libm::cos((j + 1) as f64 * PI * s)
    });
    PCBasis::from_columns(r, alloc::vec![f64::NAN; q], BasisSource::Custom)
}

/// Regular time grid with cosine weights for the AR(1) benchmark
/// `exp(-c|l - ℓ|/n)`, which is the exponential kernel on the midpoint
/// grid.
pub fn ewc_design(n: usize, q: usize) -> Result<(SpatialDesign, PCBasis)> {
    Ok((SpatialDesign::regular_1d(n)?, cosine_weights(n, q)?))
}

/// Toeplitz AR(1) correlation matrix with entries `exp(-c|l - ℓ|/n)`.
pub fn ar1_correlation(n: usize, c: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| libm::exp(-c * (i as f64 - j as f64).abs() / n as f64))
}

/// Autocovariances `γ(0..n)` of the process with spectral density
/// `f0(ω) (1 + (M̄ - 1) 1[|ω| ≥ θ])`, `f0(ω) = 1/(1 - 2ρ cos ω + ρ²)` and
/// `ρ = exp(-c0/n)`.
///
/// `γ(k) = ρ^k/(1-ρ²) + (M̄-1)/π ∫_θ^π f0(ω) cos(kω) dω`, with the tail
/// integral by composite Gauss–Legendre on `[θ, π]` (panels of width at
/// most `π/128`, so even `cos((n-1)ω)` is resolved).
pub fn kinked_autocovariances(n: usize, c0: f64, m_bar: f64, theta: f64) -> Result<Vec<f64>> {
    if !(0.0..=PI).contains(&theta) {
        return Err(input_err!("kink frequency must lie in [0, π], got {theta}"));
    }
    if !(m_bar > 0.0) {
        return Err(input_err!("spectral multiplier must be positive, got {m_bar}"));
    }
    let rho = libm::exp(-c0 / n as f64);
    let base = |k: usize| libm::pow(rho, k as f64) / (1.0 - rho * rho);
    let mut gamma: Vec<f64> = (0..n).map(base).collect();
    if theta < PI && m_bar != 1.0 {
        let rule = GaussLegendre::new(32);
        let panels = libm::ceil(((PI - theta) / PI) * (128.0_f64).max(n as f64 / 2.0)).max(1.0) as usize;
        let h = (PI - theta) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * rule.len());
        let mut weights = Vec::with_capacity(panels * rule.len());
        for p in 0..panels {
            let a = theta + p as f64 * h;
            for (x, w) in rule.nodes().iter().zip(rule.weights()) {
                let om = a + 0.5 * h * (x + 1.0);
                nodes.push(om);
                weights.push(0.5 * h * w / (1.0 - 2.0 * rho * libm::cos(om) + rho * rho));
            }
        }
        for (k, g) in gamma.iter_mut().enumerate() {
            let mut s = 0.0;
            for (om, w) in nodes.iter().zip(&weights) {
                s += w * libm::cos(k as f64 * om);
            }
            *g += (m_bar - 1.0) * s / PI;
        }
    }
    Ok(gamma)
}

/// Toeplitz covariance matrix from autocovariances.
pub fn toeplitz(gamma: &[f64]) -> DMatrix<f64> {
    let n = gamma.len();
    DMatrix::from_fn(n, n, |i, j| gamma[i.abs_diff(j)])
}

/// One row of the kinked-spectrum check.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MixtureRow {
    pub theta: f64,
    pub feasible: bool,
    pub worst_partial_sum: f64,
}

/// Result of [`ar1_mixture_check`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MixtureReport {
    pub n: usize,
    pub c0: f64,
    pub m_bar: f64,
    pub q: usize,
    pub cv: f64,
    pub rows: Vec<MixtureRow>,
    pub all_feasible: bool,
}

/// Cosine-weight test for an AR(1) benchmark: `q` and `cv` chosen over the
/// AR(1) family `c ≥ c0` by expected length (up to `q_max`).
pub fn ewc_selection(n: usize, c0: f64, alpha: f64, q_max: usize, opts: &CvOptions) -> Result<QSelection> {
    let q_max = q_max.min(n - 1);
    let (design, basis) = ewc_design(n, q_max)?;
    select_q_with_weights(&design, KernelFamily::Exponential, c0, basis.r(), alpha, q_max, opts)
}

/// Checks the margins for the kinked-spectrum alternatives over
/// `theta_grid`, for the cosine-weight test selected at level `alpha`.
pub fn ar1_mixture_check(
    n: usize,
    c0: f64,
    m_bar: f64,
    theta_grid: &[f64],
    alpha: f64,
    q_max: usize,
) -> Result<MixtureReport> {
    if !(m_bar > 1.0) {
        return Err(input_err!("spectral multiplier must exceed 1, got {m_bar}"));
    }
    let sel = ewc_selection(n, c0, alpha, q_max, &CvOptions::default())?;
    let w0 = cosine_weights(n, sel.q)?.w0();
    let sigma0 = ar1_correlation(n, c0);
    let eval = MarginEvaluator::new(&sigma0, &w0, sel.cv)?;
    let mut rows = Vec::with_capacity(theta_grid.len());
    for &theta in theta_grid {
        let sigma = toeplitz(&kinked_autocovariances(n, c0, m_bar, theta)?);
        let m = eval.margins(&sigma).map_err(|e| e.at(alloc::format!("kink at θ = {theta:.4}")))?;
        rows.push(MixtureRow { theta, feasible: m.feasible, worst_partial_sum: m.worst() });
    }
    let all_feasible = rows.iter().all(|r| r.feasible);
    Ok(MixtureReport { n, c0, m_bar, q: sel.q, cv: sel.cv, rows, all_feasible })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::calibrate_c0;
    use crate::eigen::pc_weights;
    use crate::geometry::{sample_design, DesignKind, DesignSpec};
    use alloc::vec;

    fn setup(n: usize, q: usize) -> (SpatialDesign, DMatrix<f64>, DMatrix<f64>, f64) {
        let d = sample_design(&DesignSpec {
            kind: DesignKind::UniformRectangle { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] },
            n,
            seed: 8,
        })
        .unwrap();
        let c0 = calibrate_c0(&d, KernelFamily::Exponential, 0.02).unwrap();
        let sigma0 = covariance_matrix(&CovarianceKernel::exponential(c0).unwrap(), &d);
        let w0 = pc_weights(&sigma0, q).unwrap().w0();
        (d, sigma0, w0, c0)
    }

    #[test]
    fn benchmark_has_zero_margins() {
        let (_, sigma0, w0, _) = setup(40, 5);
        let m = nu_margins(&sigma0, &sigma0, &w0, 2.5).unwrap();
        assert!(m.nu.iter().all(|v| v.abs() < 1e-8), "{:?}", m.nu);
        assert!(m.feasible);
        let scaled = nu_margins(&sigma0, &(&sigma0 * 2.0), &w0, 2.5).unwrap();
        assert!(scaled.nu.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn margins_scale_invariant() {
        let (d, sigma0, w0, c0) = setup(40, 4);
        let alt = covariance_matrix(&CovarianceKernel::new(KernelFamily::Matern32, 2.0 * c0).unwrap(), &d);
        let a = nu_margins(&sigma0, &alt, &w0, 2.4).unwrap();
        let b = nu_margins(&(&sigma0 * 3.0), &(&alt * 0.2), &w0, 2.4).unwrap();
        for (x, y) in a.nu.iter().zip(&b.nu) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    // direct evaluation on 2x2 matrices, independent of the evaluator
    #[test]
    fn two_location_oracle() {
        let d = SpatialDesign::from_points(&[[0.0], [1.0]]).unwrap();
        let sigma0 = covariance_matrix(&CovarianceKernel::exponential(1.0).unwrap(), &d);
        let sigma1 = covariance_matrix(&CovarianceKernel::new(KernelFamily::Gaussian, 1.3).unwrap(), &d);
        let w0 = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]);
        let cv = 1.7;
        let m = nu_margins(&sigma0, &sigma1, &w0, cv).unwrap();

        // A0 = diag(1,-cv²) Ω0 with Ω0 diagonal here, so A0 is diagonal and
        // its unit eigenvectors are the identity (up to sign and order).
        let om = |s: &DMatrix<f64>| w0.transpose() * s * &w0;
        let (o0, o1) = (om(&sigma0), om(&sigma1));
        assert!(o0[(0, 1)].abs() < 1e-14 && o1[(0, 1)].abs() < 1e-14);
        let a0 = [o0[(0, 0)], -cv * cv * o0[(1, 1)]];
        let a1 = [o1[(0, 0)], -cv * cv * o1[(1, 1)]];
        // normalized: λ1 = 1; with q = 1 only ν1 exists
        let neg_a0 = -a0[1] / a0[0];
        let neg_a1 = -a1[1] / a1[0];
        let nu1 = neg_a1 - neg_a0;
        assert_eq!(m.nu.len(), 1);
        assert!((m.nu[0] - nu1).abs() < 1e-12, "{} vs {nu1}", m.nu[0]);
    }

    #[test]
    fn ewc_weights_are_demeaned() {
        let b = cosine_weights(4, 1).unwrap();
        assert!(b.r().column(0).sum().abs() < 1e-12);
        let expect = 2f64.sqrt() * (PI * 0.125).cos();
        assert!((b.r()[(0, 0)] - expect).abs() < 1e-15);
    }

    #[test]
    fn ar1_is_the_exponential_kernel_on_the_grid() {
        let n = 12;
        let d = SpatialDesign::regular_1d(n).unwrap();
        let k = covariance_matrix(&CovarianceKernel::exponential(7.0).unwrap(), &d);
        assert!((ar1_correlation(n, 7.0) - k).abs().max() < 1e-14);
        assert!((ar1_correlation(n, 7.0)[(0, 3)] - (-7.0 * 3.0 / 12.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn kinked_spectrum_limits() {
        let (n, c0, mb) = (60, 10.0, 10.0);
        let rho = (-c0 / n as f64).exp();
        let at_pi = kinked_autocovariances(n, c0, mb, PI).unwrap();
        let at_zero = kinked_autocovariances(n, c0, mb, 0.0).unwrap();
        for k in 0..n {
            let base = rho.powi(k as i32) / (1.0 - rho * rho);
            assert!((at_pi[k] - base).abs() < 1e-12 * base.max(1.0));
            assert!((at_zero[k] - mb * base).abs() < 1e-9 * base.max(1.0), "k={k}");
        }
        let (_, basis) = ewc_design(n, 5).unwrap();
        let w0 = basis.w0();
        let m = nu_margins(&ar1_correlation(n, c0), &toeplitz(&at_zero), &w0, 2.7).unwrap();
        assert!(m.nu.iter().all(|v| v.abs() < 1e-7));
    }
}
