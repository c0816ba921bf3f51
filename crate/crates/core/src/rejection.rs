//! Exact null rejection probabilities of quadratic-form t-statistics under
//! Gaussian benchmarks, their supremum over the persistence parameter, and
//! critical values.
//!
//! For weights `W0 = [1, W]` the statistic rejects when
//! `X0² > cv² Σ Xᵢ²` with `X = W0'y ~ N(0, Ω)`, `Ω = W0'ΣW0`. The
//! probability of that event is `P(Z0² ≥ Σ ηᵢ Zᵢ²)` where `ηᵢ = -ωᵢ/ω0` and
//! `ω0 > 0 ≥ ω1 ≥ … ≥ ω_q` are the eigenvalues of `D(cv)Ω`,
//! `D(cv) = diag(1, -cv², …, -cv²)`. The eigenvalues are computed from the
//! symmetric matrix `Ω^{1/2} D(cv) Ω^{1/2}`, which is similar to `D(cv)Ω`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::covariance::{covariance_from_distances, CovarianceKernel, DistanceTable, KernelFamily};
use crate::error::{input_err, numeric_err, Result, ScpcError};
use crate::geometry::SpatialDesign;
use crate::linalg::{psd_sqrt, sym_eigen_desc, sym_eigenvalues_desc, symmetrize};
use crate::quadrature::BsIntegrator;
use crate::root::{brent, RootOptions};

/// Nonnegative eigenvalues above this multiple of `ω0` are an error rather
/// than rounding noise.
pub const OMEGA_POSITIVE_TOL: f64 = 1e-8;

/// `Ω` is treated as rank deficient when its smallest eigenvalue falls
/// below this multiple of its largest.
pub const OMEGA_RANK_TOL: f64 = 1e-13;

/// Eigenvalues of `D(cv)Ω` and the derived ratios `ηᵢ = -ωᵢ/ω0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSpectrum {
    /// `ω0 ≥ ω1 ≥ … ≥ ω_q`.
    pub omega: Vec<f64>,
    /// `η` in descending order, all `≥ 0`.
    pub eta: Vec<f64>,
}

/// `Ω = W0'ΣW0`, symmetrized.
pub fn omega_matrix(w0: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = w0.nrows();
    if sigma.shape() != (n, n) {
        return Err(input_err!(
            "weights have {n} rows but the covariance matrix is {}x{}",
            sigma.nrows(),
            sigma.ncols()
        ));
    }
    if w0.ncols() < 2 {
        return Err(input_err!("weight matrix needs the constant column and at least one more"));
    }
    Ok(symmetrize(&(w0.tr_mul(&(sigma * w0)))))
}

/// Ω with its square root, ready for repeated spectra at different `cv`.
///
/// With `S = Ω^{1/2}` and `s0` its first column,
/// `S D(cv) S = s0 s0' - cv² G` where `G = S J S`, `J = diag(0, 1, …, 1)`.
#[derive(Debug, Clone)]
pub struct OmegaFactor {
    s0: DVector<f64>,
    g: DMatrix<f64>,
}

impl OmegaFactor {
    pub fn new(omega: &DMatrix<f64>) -> Result<Self> {
        let k = omega.nrows();
        let vals = sym_eigenvalues_desc(omega.clone());
        let (top, bottom) = (vals[0], vals[k - 1]);
        if !(top > 0.0) || bottom < OMEGA_RANK_TOL * top {
            return Err(numeric_err!(
                "Ω = W0'ΣW0 is rank deficient: smallest eigenvalue {bottom:.3e} vs largest {top:.3e}"
            ));
        }
        let s = psd_sqrt(omega, 1e-10)?;
        let s0 = s.column(0).into_owned();
        let sr = s.columns(1, k - 1);
        let g = symmetrize(&(sr * sr.transpose()));
        Ok(OmegaFactor { s0, g })
    }

    /// Spectrum of `D(cv)Ω`.
    pub fn spectrum(&self, cv: f64) -> Result<TestSpectrum> {
        if !(cv > 0.0) || !cv.is_finite() {
            return Err(input_err!("critical value must be positive and finite, got {cv}"));
        }
        let m = &self.s0 * self.s0.transpose() - &self.g * (cv * cv);
        let omega = sym_eigenvalues_desc(m);
        spectrum_from_eigenvalues(omega)
    }
}

fn spectrum_from_eigenvalues(mut omega: Vec<f64>) -> Result<TestSpectrum> {
    let w0 = omega[0];
    if !(w0 > 0.0) {
        return Err(numeric_err!("leading eigenvalue ω0 = {w0:.3e} is not positive"));
    }
    for (i, w) in omega.iter_mut().enumerate().skip(1) {
        if *w > OMEGA_POSITIVE_TOL * w0 {
            return Err(numeric_err!(
                "eigenvalue ω{i} = {w:.3e} is positive (ω0 = {w0:.3e}); D(cv)Ω should have exactly one"
            ));
        }
        if *w > 0.0 {
            *w = 0.0;
        }
    }
    let mut eta: Vec<f64> = omega[1..].iter().map(|w| (-w / w0).max(0.0)).collect();
    eta.sort_by(|a, b| b.total_cmp(a));
    Ok(TestSpectrum { omega, eta })
}

/// Eigenvalues of `D(cv)Ω` for `Ω = W0'ΣW0`.
pub fn omega_spectrum(w0: &DMatrix<f64>, sigma: &DMatrix<f64>, cv: f64) -> Result<TestSpectrum> {
    OmegaFactor::new(&omega_matrix(w0, sigma)?)?.spectrum(cv)
}

/// `P(τ² > cv²)` under `y ~ N(μ0 1, Σ)` for the statistic defined by `W0`.
pub fn rejection_probability(w0: &DMatrix<f64>, sigma: &DMatrix<f64>, cv: f64) -> Result<f64> {
    let spec = omega_spectrum(w0, sigma, cv)?;
    BsIntegrator::new().probability(&spec.eta)
}

/// How the persistence grid is laid out.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum GridSpec {
    /// `points` log-spaced values from `c0` to the point where the average
    /// correlation drops below `1e-6`, plus the uncorrelated endpoint.
    LogSpaced { points: usize },
    /// Only the uncorrelated endpoint `Σ = I`.
    IidOnly,
    /// Caller-supplied values; `f64::INFINITY` stands for `Σ = I`.
    Explicit(Vec<f64>),
}

/// Options for [`sup_rejection`] and [`critical_value`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CvOptions {
    pub grid: GridSpec,
    /// Number of bracket-halving passes around the grid argmax.
    pub refine_passes: usize,
    /// Admissible range for the critical value.
    pub cv_bounds: (f64, f64),
    /// Relative tolerance on `cv` for the root finder.
    pub cv_tol: f64,
    /// The log grid ends where the average correlation falls below this.
    pub rho_floor: f64,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            grid: GridSpec::LogSpaced { points: 50 },
            refine_passes: 2,
            cv_bounds: (1e-3, 1e4),
            cv_tol: 1e-9,
            rho_floor: 1e-6,
        }
    }
}

/// Rejection probabilities over the persistence grid at one critical value.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionCurve {
    /// Ascending; the last entry is `f64::INFINITY` (`Σ = I`) when present.
    pub c_grid: Vec<f64>,
    pub probs: Vec<f64>,
    pub cv: f64,
    /// Persistence value attaining the supremum.
    pub sup_c: f64,
    pub sup_prob: f64,
    /// Quadrature error indicator at the supremum.
    pub quadrature_error_estimate: f64,
}

/// Critical value and the rejection curve at that value.
#[derive(Debug, Clone, PartialEq)]
pub struct CvSolution {
    pub cv: f64,
    pub curve: RejectionCurve,
}

/// Largest `c` of the log grid: doubles `c` from `c0` until the average
/// correlation is within `floor` of its limit (the share of coincident
/// location pairs).
pub fn grid_upper_end(table: &DistanceTable, family: KernelFamily, c0: f64, floor: f64) -> f64 {
    let limit = table.avg_correlation(family, f64::INFINITY);
    let mut c = c0;
    for _ in 0..200 {
        if table.avg_correlation(family, c) - limit < floor {
            break;
        }
        c *= 2.0;
    }
    c
}

pub(crate) fn log_grid(c0: f64, c_hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 || c_hi <= c0 {
        return alloc::vec![c0];
    }
    let (a, b) = (libm::log(c0), libm::log(c_hi));
    (0..points)
        .map(|k| {
            if k == 0 {
                c0
            } else {
                libm::exp(a + (b - a) * k as f64 / (points - 1) as f64)
            }
        })
        .collect()
}

/// Benchmark family `Σ(c)` on a design together with full-width weights,
/// caching `Ω(c)` for every persistence value visited.
///
/// The weights are stored as `[1, W]` with `W` holding `k` columns. In
/// basis mode the statistic for `q ≤ k` uses `[1, W_{1..q}/√q]`; in fixed
/// mode `W0 = [1, W]` is used as given.
#[derive(Debug, Clone)]
pub struct SizeEngine {
    family: KernelFamily,
    distances: DMatrix<f64>,
    weights: DMatrix<f64>,
    basis_mode: bool,
    /// `(c, Ω_full(c))`, sorted by `c`.
    cache: Vec<(f64, DMatrix<f64>)>,
    bs: BsIntegrator,
    opts: CvOptions,
}

impl SizeEngine {
    /// Engine for principal-component style weights: `r_full` holds the
    /// `k` weight vectors (`r'r = n`), and statistics with any `q ≤ k` can
    /// be evaluated.
    pub fn for_basis(
        design: &SpatialDesign,
        family: KernelFamily,
        c0: f64,
        r_full: &DMatrix<f64>,
        opts: CvOptions,
    ) -> Result<Self> {
        let n = design.n();
        if r_full.nrows() != n || r_full.ncols() == 0 {
            return Err(input_err!("weights must have {n} rows and at least one column"));
        }
        let mut weights = DMatrix::from_element(n, r_full.ncols() + 1, 1.0);
        weights.columns_mut(1, r_full.ncols()).copy_from(r_full);
        Self::build(design, family, c0, weights, true, opts)
    }

    /// Engine for a fixed weight matrix `W0` whose first column is the
    /// constant.
    pub fn for_w0(
        design: &SpatialDesign,
        family: KernelFamily,
        c0: f64,
        w0: &DMatrix<f64>,
        opts: CvOptions,
    ) -> Result<Self> {
        check_w0(w0, design.n())?;
        Self::build(design, family, c0, w0.clone(), false, opts)
    }

    fn build(
        design: &SpatialDesign,
        family: KernelFamily,
        c0: f64,
        weights: DMatrix<f64>,
        basis_mode: bool,
        opts: CvOptions,
    ) -> Result<Self> {
        if !(c0 > 0.0) {
            return Err(input_err!("benchmark persistence c0 must be positive, got {c0}"));
        }
        let grid = match &opts.grid {
            GridSpec::LogSpaced { points } => {
                if *points == 0 {
                    return Err(input_err!("grid needs at least one point"));
                }
                let table = DistanceTable::new(design);
                let c_hi = grid_upper_end(&table, family, c0, opts.rho_floor);
                let mut g = log_grid(c0, c_hi, *points);
                g.push(f64::INFINITY);
                g
            }
            GridSpec::IidOnly => alloc::vec![f64::INFINITY],
            GridSpec::Explicit(v) => {
                if v.is_empty() || v.iter().any(|c| !(*c > 0.0)) {
                    return Err(input_err!("explicit persistence grid must be non-empty and positive"));
                }
                let mut v = v.clone();
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            }
        };
        let mut engine = SizeEngine {
            family,
            distances: design.pairwise_distances(),
            weights,
            basis_mode,
            cache: Vec::with_capacity(grid.len() + 16),
            bs: BsIntegrator::new(),
            opts,
        };
        for c in grid {
            engine.insert(c)?;
        }
        Ok(engine)
    }

    /// Number of weight columns beyond the constant.
    pub fn width(&self) -> usize {
        self.weights.ncols() - 1
    }

    /// Persistence values currently in the cache.
    pub fn grid(&self) -> Vec<f64> {
        self.cache.iter().map(|(c, _)| *c).collect()
    }

    fn sigma(&self, c: f64) -> DMatrix<f64> {
        let n = self.distances.nrows();
        if c == f64::INFINITY {
            DMatrix::identity(n, n)
        } else {
            covariance_from_distances(&CovarianceKernel { family: self.family, c }, &self.distances)
        }
    }

    fn insert(&mut self, c: f64) -> Result<usize> {
        match self.cache.binary_search_by(|(x, _)| x.total_cmp(&c)) {
            Ok(i) => Ok(i),
            Err(i) => {
                let sigma = self.sigma(c);
                let omega = symmetrize(&self.weights.tr_mul(&(&sigma * &self.weights)));
                self.cache.insert(i, (c, omega));
                Ok(i)
            }
        }
    }

    fn omega_q(&self, full: &DMatrix<f64>, q: usize) -> DMatrix<f64> {
        if !self.basis_mode {
            return full.clone();
        }
        let s = 1.0 / libm::sqrt(q as f64);
        DMatrix::from_fn(q + 1, q + 1, |i, j| {
            let f = if i == 0 { 1.0 } else { s } * if j == 0 { 1.0 } else { s };
            f * full[(i, j)]
        })
    }

    fn check_q(&self, q: usize) -> Result<usize> {
        if self.basis_mode {
            if q == 0 || q > self.width() {
                return Err(input_err!("q = {q} outside 1..={}", self.width()));
            }
            Ok(q)
        } else {
            Ok(self.width())
        }
    }

    fn factors(&self, q: usize) -> Result<Vec<OmegaFactor>> {
        self.cache
            .iter()
            .map(|(c, full)| {
                OmegaFactor::new(&self.omega_q(full, q)).map_err(|e| e.at(alloc::format!("persistence c = {c:.6e}")))
            })
            .collect()
    }

    /// Rejection probability at every cached persistence value.
    pub fn curve(&mut self, q: usize, cv: f64) -> Result<RejectionCurve> {
        let q = self.check_q(q)?;
        let factors = self.factors(q)?;
        self.curve_with(&factors, cv)
    }

    fn curve_with(&self, factors: &[OmegaFactor], cv: f64) -> Result<RejectionCurve> {
        let mut probs = Vec::with_capacity(factors.len());
        for f in factors {
            probs.push(self.bs.probability(&f.spectrum(cv)?.eta)?);
        }
        let (arg, &sup) = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty grid");
        let err = self.bs.probability_with_error(&factors[arg].spectrum(cv)?.eta)?.error_estimate;
        Ok(RejectionCurve {
            c_grid: self.grid(),
            probs,
            cv,
            sup_c: self.cache[arg].0,
            sup_prob: sup,
            quadrature_error_estimate: err,
        })
    }

    fn sup_with(&self, factors: &[OmegaFactor], cv: f64) -> Result<(f64, usize)> {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, f) in factors.iter().enumerate() {
            let p = self.bs.probability(&f.spectrum(cv)?.eta)?;
            if p > best.0 {
                best = (p, i);
            }
        }
        Ok(best)
    }

    /// Adds geometric midpoints next to the grid argmax at `cv`, repeated
    /// `refine_passes` times. Returns true if any point was added.
    fn refine(&mut self, q: usize, cv: f64, factors: &mut Vec<OmegaFactor>) -> Result<bool> {
        let mut added = false;
        for _ in 0..self.opts.refine_passes {
            let (_, arg) = self.sup_with(factors, cv)?;
            let c = self.cache[arg].0;
            if !c.is_finite() {
                break;
            }
            let mut new_points = Vec::new();
            if arg > 0 {
                new_points.push(libm::sqrt(self.cache[arg - 1].0 * c));
            }
            if let Some((next, _)) = self.cache.get(arg + 1) {
                if next.is_finite() {
                    new_points.push(libm::sqrt(c * next));
                }
            }
            for p in new_points {
                if self.cache.iter().any(|(x, _)| *x == p) {
                    continue;
                }
                let i = self.insert(p)?;
                let f = OmegaFactor::new(&self.omega_q(&self.cache[i].1, q))?;
                factors.insert(i, f);
                added = true;
            }
        }
        Ok(added)
    }

    /// Supremum of the rejection probability over the grid (after
    /// refinement around the argmax) at critical value `cv`.
    pub fn sup_rejection(&mut self, q: usize, cv: f64) -> Result<RejectionCurve> {
        let q = self.check_q(q)?;
        let mut factors = self.factors(q)?;
        self.refine(q, cv, &mut factors)?;
        self.curve_with(&factors, cv)
    }

    /// Critical value at which the supremum of the rejection probability
    /// equals `alpha`.
    pub fn critical_value(&mut self, q: usize, alpha: f64) -> Result<CvSolution> {
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(input_err!("alpha must lie in (0, 0.5), got {alpha}"));
        }
        let q = self.check_q(q)?;
        let mut factors = self.factors(q)?;
        let mut cv = self.solve(&factors, alpha)?;
        for _ in 0..3 {
            if !self.refine(q, cv, &mut factors)? {
                break;
            }
            let next = self.solve(&factors, alpha)?;
            let moved = (next - cv).abs() <= self.opts.cv_tol * cv.max(1.0);
            cv = next;
            if moved {
                break;
            }
        }
        let curve = self.curve_with(&factors, cv)?;
        Ok(CvSolution { cv, curve })
    }

    fn solve(&self, factors: &[OmegaFactor], alpha: f64) -> Result<f64> {
        let (lo_bound, hi_bound) = self.opts.cv_bounds;
        let f = |cv: f64| -> Result<f64> { Ok(self.sup_with(factors, cv)?.0 - alpha) };
        // The supremum is at least the probability at any single grid point,
        // so the root lies above the root for the first point checked.
        let mut lo = lo_bound;
        let mut flo = f(lo)?;
        if flo < 0.0 {
            return Err(ScpcError::Solver(alloc::format!(
                "rejection probability is below alpha = {alpha} already at cv = {lo_bound}"
            )));
        }
        let mut hi = (lo * 2.0).max(1.0);
        let mut fhi = f(hi)?;
        while fhi > 0.0 {
            lo = hi;
            flo = fhi;
            if hi >= hi_bound {
                return Err(ScpcError::Solver(alloc::format!(
                    "rejection probability still exceeds alpha = {alpha} at cv = {hi_bound}"
                )));
            }
            hi = (hi * 2.0).min(hi_bound);
            fhi = f(hi)?;
        }
        brent(f, lo, hi, flo, fhi, RootOptions { xtol: self.opts.cv_tol, ftol: 0.0, max_iter: 200 })
    }
}

fn check_w0(w0: &DMatrix<f64>, n: usize) -> Result<()> {
    if w0.nrows() != n || w0.ncols() < 2 {
        return Err(input_err!("W0 must be {n} x (q+1) with q >= 1, got {}x{}", w0.nrows(), w0.ncols()));
    }
    if w0.column(0).iter().any(|x| *x != 1.0) {
        return Err(input_err!("first column of W0 must be all ones"));
    }
    Ok(())
}

/// Rejection probabilities of the statistic defined by `W0` over the
/// benchmark family `Σ(c)`, `c ≥ c0`, with refinement around the argmax.
pub fn sup_rejection(
    w0: &DMatrix<f64>,
    design: &SpatialDesign,
    family: KernelFamily,
    c0: f64,
    cv: f64,
    opts: &CvOptions,
) -> Result<RejectionCurve> {
    let mut engine = SizeEngine::for_w0(design, family, c0, w0, opts.clone())?;
    let q = engine.width();
    engine.sup_rejection(q, cv)
}

/// Critical value making the statistic defined by `W0` have size `alpha`
/// over the benchmark family `Σ(c)`, `c ≥ c0`.
pub fn critical_value(
    w0: &DMatrix<f64>,
    design: &SpatialDesign,
    family: KernelFamily,
    c0: f64,
    alpha: f64,
    opts: &CvOptions,
) -> Result<CvSolution> {
    let mut engine = SizeEngine::for_w0(design, family, c0, w0, opts.clone())?;
    let q = engine.width();
    engine.critical_value(q, alpha)
}

/// Weight matrix `W0 = [1, W]` for the statistic with variance estimator
/// `n⁻¹ û'Qû`, where `Q` is symmetric positive semidefinite (negative
/// eigenvalues are clipped). Returns `None` if `MQM` vanishes.
pub fn w0_from_quadratic_form(q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = q.nrows();
    let (vals, vecs) = sym_eigen_desc(crate::linalg::double_center(q));
    let top = vals[0];
    if !(top > 0.0) {
        return None;
    }
    let keep: Vec<usize> = (0..n).filter(|&j| vals[j] > 1e-12 * top).collect();
    let mut w0 = DMatrix::from_element(n, keep.len() + 1, 1.0);
    for (k, &j) in keep.iter().enumerate() {
        let s = libm::sqrt(vals[j]);
        for i in 0..n {
            w0[(i, k + 1)] = s * vecs[(i, j)];
        }
    }
    Some(w0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::pc_weights;
    use crate::geometry::{sample_design, DesignKind, DesignSpec};
    use alloc::vec;
    use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

    fn square(n: usize, seed: u64) -> SpatialDesign {
        sample_design(&DesignSpec {
            kind: DesignKind::UniformRectangle { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] },
            n,
            seed,
        })
        .unwrap()
    }

    fn iid_basis(n: usize, q: usize) -> DMatrix<f64> {
        pc_weights(&DMatrix::identity(n, n), q).unwrap().w0()
    }

    #[test]
    fn identity_spectrum() {
        let (n, q, cv) = (12, 4, 1.7);
        let spec = omega_spectrum(&iid_basis(n, q), &DMatrix::identity(n, n), cv).unwrap();
        assert!((spec.omega[0] - n as f64).abs() < 1e-10);
        for e in &spec.eta {
            assert!((e - cv * cv / q as f64).abs() < 1e-12);
        }
        let tiny = omega_spectrum(&iid_basis(n, q), &DMatrix::identity(n, n), 1e-7).unwrap();
        assert!(tiny.eta.iter().all(|e| *e < 1e-13));
    }

    #[test]
    fn matches_nonsymmetric_eigensolve() {
        let b = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, -0.2, 0.5, 1.2, 0.1, 0.0, -0.4, 0.8]);
        let omega = &b * b.transpose();
        let cv = 2.0;
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -cv * cv, -cv * cv]));
        let a = &d * &omega;
        let mut oracle: Vec<f64> = a.complex_eigenvalues().iter().map(|z: &nalgebra::Complex<f64>| {
            assert!(z.im.abs() < 1e-10);
            z.re
        }).collect();
        oracle.sort_by(|x, y| y.total_cmp(x));
        let spec = OmegaFactor::new(&omega).unwrap().spectrum(cv).unwrap();
        for (x, y) in spec.omega.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-10 * y.abs().max(1.0));
        }
    }

    #[test]
    fn f_reduction() {
        let n = 30;
        for q in [1usize, 3, 8, 20] {
            let f = FisherSnedecor::new(1.0, q as f64).unwrap();
            let cv = f.inverse_cdf(0.95).sqrt();
            let p = rejection_probability(&iid_basis(n, q), &DMatrix::identity(n, n), cv).unwrap();
            assert!((p - 0.05).abs() < 1e-6, "q={q}: {p}");
        }
    }

    #[test]
    fn scale_invariance() {
        let d = square(40, 1);
        let k = CovarianceKernel::exponential(3.0).unwrap();
        let sigma = crate::covariance::covariance_matrix(&k, &d);
        let w0 = pc_weights(&sigma, 5).unwrap().w0();
        let p1 = rejection_probability(&w0, &sigma, 2.3).unwrap();
        let p2 = rejection_probability(&w0, &(&sigma * 7.5), 2.3).unwrap();
        assert!((p1 - p2).abs() < 1e-12);
        let far = rejection_probability(&w0, &sigma, 1e3).unwrap();
        assert!(far < 1e-5);
    }

    #[test]
    fn iid_only_grid_gives_student_t() {
        let n = 40;
        let d = square(n, 3);
        let w0 = iid_basis(n, 8);
        let opts = CvOptions { grid: GridSpec::IidOnly, ..Default::default() };
        let sol = critical_value(&w0, &d, KernelFamily::Exponential, 1.0, 0.05, &opts).unwrap();
        let t = StudentsT::new(0.0, 1.0, 8.0).unwrap().inverse_cdf(0.975);
        assert!((sol.cv - t).abs() < 1e-7, "{} vs {t}", sol.cv);
        assert!((t - 2.306).abs() < 1e-3);
    }

    #[test]
    fn benchmark_critical_value_properties() {
        let d = square(60, 2);
        let c0 = crate::covariance::calibrate_c0(&d, KernelFamily::Exponential, 0.02).unwrap();
        let sigma = crate::covariance::covariance_matrix(&CovarianceKernel::exponential(c0).unwrap(), &d);
        let w0 = pc_weights(&sigma, 6).unwrap().w0();
        let opts = CvOptions::default();
        let s05 = critical_value(&w0, &d, KernelFamily::Exponential, c0, 0.05, &opts).unwrap();
        let s01 = critical_value(&w0, &d, KernelFamily::Exponential, c0, 0.01, &opts).unwrap();
        assert!(s01.cv > s05.cv);
        assert!((s05.curve.sup_prob - 0.05).abs() < 2e-4);
        assert_eq!(s05.curve.c_grid[0], c0);
        assert_eq!(*s05.curve.c_grid.last().unwrap(), f64::INFINITY);
        assert!(s05.curve.probs.iter().all(|p| *p <= s05.curve.sup_prob));
        // never below the Student-t value that is exact under Σ = I
        let t = StudentsT::new(0.0, 1.0, 6.0).unwrap().inverse_cdf(0.975);
        assert!(s05.cv >= t - 1e-9);
        // the curve recomputed at the solution agrees
        let curve = sup_rejection(&w0, &d, KernelFamily::Exponential, c0, s05.cv, &opts).unwrap();
        assert!((curve.sup_prob - 0.05).abs() < 2e-4);
        assert!(curve.quadrature_error_estimate < 1e-9);
    }

    #[test]
    fn bad_inputs() {
        let d = square(10, 1);
        let mut w0 = iid_basis(10, 2);
        assert!(critical_value(&w0, &d, KernelFamily::Exponential, 1.0, 0.7, &CvOptions::default())
            .unwrap_err()
            .is_input());
        w0[(0, 0)] = 2.0;
        assert!(critical_value(&w0, &d, KernelFamily::Exponential, 1.0, 0.05, &CvOptions::default())
            .unwrap_err()
            .is_input());
    }

    #[test]
    fn quadratic_form_weights() {
        let n = 15;
        let b = DMatrix::from_fn(n, 4, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let q = &b * b.transpose();
        let w0 = w0_from_quadratic_form(&q).unwrap();
        let w = w0.columns(1, w0.ncols() - 1);
        let m = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
        assert!((&w * w.transpose() - &m * &q * &m).abs().max() < 1e-9);
    }
}
