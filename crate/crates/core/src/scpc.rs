//! The estimator pipeline: variance estimator, t-statistic, choice of the
//! number of components by expected length, interval assembly, and score
//! adapters that turn regression coefficients into means.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::covariance::{calibrate_c0, CovarianceKernel, KernelFamily, MAX_DENSE_N};
use crate::eigen::{
    nystrom_pc_weights, pc_weights_for, BasisSource, PCBasis, NYSTROM_AUTO_THRESHOLD, NYSTROM_DEFAULT_SUBSET,
    NYSTROM_DEFAULT_SUBSETS,
};
use crate::error::{input_err, Result, ScpcError};
use crate::geometry::SpatialDesign;
use crate::rejection::{CvOptions, RejectionCurve, SizeEngine};

/// `σ̂² = q⁻¹ Σⱼ (n^{-1/2} r_j'û)²`.
pub fn scpc_sigma_hat(basis: &PCBasis, u_hat: &DVector<f64>) -> Result<f64> {
    if u_hat.len() != basis.n() {
        return Err(input_err!("residual vector has length {}, basis has n = {}", u_hat.len(), basis.n()));
    }
    let proj = basis.project(u_hat);
    Ok(proj.norm_squared() / basis.q() as f64)
}

fn demeaned(y: &DVector<f64>) -> (f64, DVector<f64>) {
    let mean = y.mean();
    (mean, y.add_scalar(-mean))
}

fn check_y(y: &DVector<f64>, n: usize) -> Result<()> {
    if y.len() != n {
        return Err(input_err!("outcome has {} values but the design has {n} locations", y.len()));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(input_err!("outcome value {i} is not finite"));
    }
    Ok(())
}

/// `σ̂` counts as zero below this multiple of `max |y|`, the size of the
/// rounding error left in `y - ȳ`.
pub const DEGENERATE_SIGMA_REL: f64 = 1e-12;

fn sigma_or_degenerate(basis: &PCBasis, y: &DVector<f64>) -> Result<(f64, f64)> {
    let (mean, u) = demeaned(y);
    let sigma = libm::sqrt(scpc_sigma_hat(basis, &u)?);
    let scale = y.amax();
    if !(sigma > DEGENERATE_SIGMA_REL * scale) {
        return Err(ScpcError::Degenerate(alloc::format!(
            "the variance estimate is zero (σ̂ = {sigma:.3e}); the outcome has no variation along the {} principal components",
            basis.q()
        )));
    }
    Ok((mean, sigma))
}

/// `τ = √n (ȳ - μ0) / σ̂`.
pub fn t_statistic(y: &DVector<f64>, mu0: f64, basis: &PCBasis) -> Result<f64> {
    check_y(y, basis.n())?;
    let (mean, sigma) = sigma_or_degenerate(basis, y)?;
    Ok(libm::sqrt(basis.n() as f64) * (mean - mu0) / sigma)
}

/// Expected interval length when the observations are i.i.d. with unit
/// variance: `√8 n^{-1/2} q^{-1/2} cv Γ((q+1)/2) / Γ(q/2)`.
pub fn expected_length_iid(q: usize, cv: f64, n: usize) -> f64 {
    let qf = q as f64;
    let ratio = libm::exp(libm::lgamma(0.5 * (qf + 1.0)) - libm::lgamma(0.5 * qf));
    libm::sqrt(8.0 / (n as f64 * qf)) * cv * ratio
}

/// One row of the component-count table.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QRow {
    pub q: usize,
    pub cv: f64,
    pub expected_length: f64,
    /// Persistence value at which the size supremum is attained.
    pub sup_c: f64,
}

/// Outcome of the component-count search.
#[derive(Debug, Clone, PartialEq)]
pub struct QSelection {
    pub q: usize,
    pub cv: f64,
    pub table: Vec<QRow>,
    /// Rejection curve at the selected `(q, cv)`.
    pub curve: RejectionCurve,
}

/// Chooses the number of components minimizing the i.i.d. expected length
/// among `q ∈ 1..=q_max`, using the first `q` columns of `r_full`.
/// Every `q` is evaluated; ties go to the smaller `q`.
pub fn select_q_with_weights(
    design: &SpatialDesign,
    family: KernelFamily,
    c0: f64,
    r_full: &DMatrix<f64>,
    alpha: f64,
    q_max: usize,
    opts: &CvOptions,
) -> Result<QSelection> {
    if q_max == 0 || q_max > r_full.ncols() {
        return Err(input_err!("q_max = {q_max} must lie in 1..={}", r_full.ncols()));
    }
    let weights = r_full.columns(0, q_max).into_owned();
    let mut engine = SizeEngine::for_basis(design, family, c0, &weights, opts.clone())?;
    let n = design.n();
    let mut table = Vec::with_capacity(q_max);
    let mut best: Option<(f64, usize, RejectionCurve)> = None;
    for q in 1..=q_max {
        let sol = engine.critical_value(q, alpha).map_err(|e| e.at(alloc::format!("critical value for q = {q}")))?;
        let len = expected_length_iid(q, sol.cv, n);
        table.push(QRow { q, cv: sol.cv, expected_length: len, sup_c: sol.curve.sup_c });
        if best.as_ref().map_or(true, |(b, _, _)| len < *b) {
            best = Some((len, q, sol.curve));
        }
    }
    let (_, q, curve) = best.expect("q_max >= 1");
    Ok(QSelection { q, cv: table[q - 1].cv, table, curve })
}

/// [`select_q_with_weights`] with the exact principal components of
/// `Σ(c0)` on the design.
pub fn select_q(
    design: &SpatialDesign,
    family: KernelFamily,
    c0: f64,
    alpha: f64,
    q_max: usize,
    opts: &CvOptions,
) -> Result<QSelection> {
    let kernel = CovarianceKernel::new(family, c0)?;
    let basis = pc_weights_for(design, &kernel, q_max)?;
    select_q_with_weights(design, family, c0, basis.r(), alpha, q_max, opts)
}

/// How the principal components are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum NystromMode {
    /// Exact up to 2000 locations, Nyström beyond.
    Auto,
    On,
    Off,
}

/// Settings of the full pipeline. `Default` gives the documented defaults.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScpcOptions {
    pub family: KernelFamily,
    pub alpha: f64,
    /// Largest number of components considered; `None` means
    /// `min(n - 1, 40)`.
    pub q_max: Option<usize>,
    pub nystrom: NystromMode,
    /// `None` means `min(1000, n)`.
    pub nystrom_subset_size: Option<usize>,
    pub nystrom_subsets: usize,
    pub seed: u64,
    pub cv: CvOptions,
}

/// Default `q_max` cap.
pub const DEFAULT_Q_MAX: usize = 40;

impl Default for ScpcOptions {
    fn default() -> Self {
        ScpcOptions {
            family: KernelFamily::Exponential,
            alpha: 0.05,
            q_max: None,
            nystrom: NystromMode::Auto,
            nystrom_subset_size: None,
            nystrom_subsets: NYSTROM_DEFAULT_SUBSETS,
            seed: 20210201,
            cv: CvOptions::default(),
        }
    }
}

impl ScpcOptions {
    pub fn resolved_q_max(&self, n: usize) -> usize {
        self.q_max.unwrap_or(DEFAULT_Q_MAX).min(n - 1)
    }

    pub fn uses_nystrom(&self, n: usize) -> bool {
        match self.nystrom {
            NystromMode::Auto => n > NYSTROM_AUTO_THRESHOLD,
            NystromMode::On => true,
            NystromMode::Off => false,
        }
    }

    pub fn resolved_subset_size(&self, n: usize) -> usize {
        self.nystrom_subset_size.unwrap_or(NYSTROM_DEFAULT_SUBSET).min(n)
    }
}

/// The data-independent part of the method on a given design: calibrated
/// benchmark, principal components, number of components and critical
/// value. Apply it to any number of outcome vectors.
#[derive(Debug, Clone)]
pub struct ScpcProcedure {
    pub rho0: f64,
    pub c0: f64,
    pub alpha: f64,
    pub family: KernelFamily,
    pub basis: PCBasis,
    pub selection: QSelection,
}

impl ScpcProcedure {
    /// Calibrates `c0` to `rho0`, computes the components and selects `q`.
    pub fn new(design: &SpatialDesign, rho0: f64, opts: &ScpcOptions) -> Result<Self> {
        let n = design.n();
        if !(opts.alpha > 0.0 && opts.alpha < 0.5) {
            return Err(input_err!("alpha must lie in (0, 0.5), got {}", opts.alpha));
        }
        let c0 = calibrate_c0(design, opts.family, rho0).map_err(|e| e.at("calibration"))?;
        let q_max = opts.resolved_q_max(n);
        let kernel = CovarianceKernel::new(opts.family, c0)?;
        let full = if opts.uses_nystrom(n) {
            let m = opts.resolved_subset_size(n);
            nystrom_pc_weights(design, &kernel, q_max, m, opts.nystrom_subsets, opts.seed)
        } else if n > MAX_DENSE_N {
            Err(input_err!("n = {n} exceeds the dense limit {MAX_DENSE_N}; enable the Nyström path"))
        } else {
            pc_weights_for(design, &kernel, q_max)
        }
        .map_err(|e| e.at("principal components"))?;
        Self::with_basis(design, rho0, c0, full, opts)
    }

    /// Uses caller-supplied weights (for example a Nyström basis computed
    /// in parallel) instead of computing them.
    pub fn with_basis(
        design: &SpatialDesign,
        rho0: f64,
        c0: f64,
        full: PCBasis,
        opts: &ScpcOptions,
    ) -> Result<Self> {
        let q_max = opts.resolved_q_max(design.n()).min(full.q());
        let selection = select_q_with_weights(design, opts.family, c0, full.r(), opts.alpha, q_max, &opts.cv)
            .map_err(|e| e.at("critical value"))?;
        let basis = full.truncate(selection.q)?;
        Ok(ScpcProcedure { rho0, c0, alpha: opts.alpha, family: opts.family, basis, selection })
    }

    pub fn q(&self) -> usize {
        self.basis.q()
    }

    pub fn cv(&self) -> f64 {
        self.selection.cv
    }

    /// Interval for the mean of `y`, with the t-statistic for `mu0`.
    pub fn interval(&self, y: &DVector<f64>, mu0: f64) -> Result<ScpcResult> {
        check_y(y, self.basis.n()).map_err(|e| e.at("estimate"))?;
        let (mean, sigma) = sigma_or_degenerate(&self.basis, y).map_err(|e| e.at("estimate"))?;
        let n = self.basis.n() as f64;
        let half = self.cv() * sigma / libm::sqrt(n);
        Ok(ScpcResult {
            mean,
            sigma_hat: sigma,
            se: sigma / libm::sqrt(n),
            q: self.q(),
            cv: self.cv(),
            ci: (mean - half, mean + half),
            mu0,
            t_stat: libm::sqrt(n) * (mean - mu0) / sigma,
            c0: self.c0,
            rho0: self.rho0,
            alpha: self.alpha,
            family: self.family,
            basis_source: self.basis.source(),
            table: self.selection.table.clone(),
            sup_c: self.selection.curve.sup_c,
            quadrature_error_estimate: self.selection.curve.quadrature_error_estimate,
        })
    }

    /// True when `|τ| > cv` for the hypothesis `μ = mu0`.
    pub fn rejects(&self, y: &DVector<f64>, mu0: f64) -> Result<bool> {
        Ok(t_statistic(y, mu0, &self.basis)?.abs() > self.cv())
    }
}

/// Point estimate, interval and diagnostics.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScpcResult {
    pub mean: f64,
    pub sigma_hat: f64,
    /// `σ̂ / √n`.
    pub se: f64,
    pub q: usize,
    pub cv: f64,
    pub ci: (f64, f64),
    pub mu0: f64,
    pub t_stat: f64,
    pub c0: f64,
    pub rho0: f64,
    pub alpha: f64,
    pub family: KernelFamily,
    pub basis_source: BasisSource,
    /// Critical value and expected length for every `q` considered.
    pub table: Vec<QRow>,
    pub sup_c: f64,
    pub quadrature_error_estimate: f64,
}

/// End-to-end interval for the mean of `y` observed at the design
/// locations.
pub fn scpc_interval(
    y: &DVector<f64>,
    design: &SpatialDesign,
    rho0: f64,
    alpha: f64,
    options: &ScpcOptions,
) -> Result<ScpcResult> {
    check_y(y, design.n())?;
    let opts = ScpcOptions { alpha, ..options.clone() };
    ScpcProcedure::new(design, rho0, &opts)?.interval(y, 0.0)
}

/// Linear model `w = xβ + z'δ + ε` for the coefficient on `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionInput {
    pub w: DVector<f64>,
    pub x: DVector<f64>,
    /// Controls, `n × k` (include an intercept column if wanted; `k` may
    /// be zero).
    pub z: DMatrix<f64>,
}

/// Pseudo-observations whose mean is the coefficient estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionScores {
    pub scores: DVector<f64>,
    pub beta_hat: f64,
}

/// Residual maker for the column space of `z`.
struct Partial {
    q: Option<DMatrix<f64>>,
}

impl Partial {
    fn new(z: &DMatrix<f64>, what: &str) -> Result<Self> {
        if z.ncols() == 0 {
            return Ok(Partial { q: None });
        }
        if z.ncols() >= z.nrows() {
            return Err(ScpcError::Rank(alloc::format!(
                "{} {what} columns for {} observations",
                z.ncols(),
                z.nrows()
            )));
        }
        let qr = z.clone().qr();
        let r = qr.r();
        let big = (0..r.ncols()).map(|i| r[(i, i)].abs()).fold(0.0_f64, f64::max);
        if let Some(i) = (0..r.ncols()).find(|&i| !(r[(i, i)].abs() > 1e-10 * big)) {
            return Err(ScpcError::Rank(alloc::format!("{what} column {i} is collinear with the preceding ones")));
        }
        Ok(Partial { q: Some(qr.q()) })
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.q {
            None => v.clone(),
            Some(q) => v - q * q.tr_mul(v),
        }
    }
}

fn check_lengths(n: usize, parts: &[(&str, usize)]) -> Result<()> {
    for (name, len) in parts {
        if *len != n {
            return Err(input_err!("{name} has {len} rows, expected {n}"));
        }
    }
    Ok(())
}

fn positive_variation(v: &DVector<f64>, raw: &DVector<f64>, what: &str) -> Result<f64> {
    let s = v.norm_squared();
    let scale = raw.norm_squared().max(f64::MIN_POSITIVE);
    if !(s > 1e-10 * scale) {
        let msg: String = alloc::format!("{what} has no variation left after partialling out the controls");
        return Err(ScpcError::Rank(msg));
    }
    Ok(s)
}

/// Scores `y_l = β̂ + x̃_l ε̂_l / (n⁻¹ Σ x̃²)` with `x̃` the residual of `x`
/// on the controls. Their mean is the least-squares `β̂`, so running the
/// mean procedure on them gives an interval for `β`.
pub fn regression_scores(input: &RegressionInput) -> Result<RegressionScores> {
    let n = input.w.len();
    check_lengths(n, &[("x", input.x.len()), ("z", input.z.nrows())])?;
    let part = Partial::new(&input.z, "control")?;
    let xt = part.apply(&input.x);
    let sxx = positive_variation(&xt, &input.x, "the regressor of interest")?;
    let wt = part.apply(&input.w);
    let beta = xt.dot(&wt) / sxx;
    let eps = &wt - &xt * beta;
    let denom = sxx / n as f64;
    let scores = DVector::from_fn(n, |l, _| beta + xt[l] * eps[l] / denom);
    Ok(RegressionScores { scores, beta_hat: beta })
}

/// Just-identified linear instrumental-variables scores (experimental):
/// `w = xβ + z'δ + ε` with one instrument `iv` for `x`. The scores are
/// `β̂ + ĩv_l ε̂_l / (n⁻¹ Σ ĩv x̃)`, whose mean is the IV estimate.
pub fn iv_scores(w: &DVector<f64>, x: &DVector<f64>, iv: &DVector<f64>, z: &DMatrix<f64>) -> Result<RegressionScores> {
    let n = w.len();
    check_lengths(n, &[("x", x.len()), ("instrument", iv.len()), ("z", z.nrows())])?;
    let part = Partial::new(z, "control")?;
    let (xt, wt, zt) = (part.apply(x), part.apply(w), part.apply(iv));
    positive_variation(&zt, iv, "the instrument")?;
    let szx = zt.dot(&xt);
    if !(szx.abs() > 1e-10 * libm::sqrt(zt.norm_squared() * xt.norm_squared())) {
        return Err(ScpcError::Rank(String::from("the instrument is orthogonal to the regressor")));
    }
    let beta = zt.dot(&wt) / szx;
    let eps = &wt - &xt * beta;
    let denom = szx / n as f64;
    let scores = DVector::from_fn(n, |l, _| beta + zt[l] * eps[l] / denom);
    Ok(RegressionScores { scores, beta_hat: beta })
}
