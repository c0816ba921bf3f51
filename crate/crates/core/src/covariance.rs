//! Isotropic correlation kernels, benchmark covariance matrices `Σ(c)`,
//! the average pairwise correlation `ρ̄` and calibration of the benchmark
//! persistence `c0` from a target `ρ̄0`.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{input_err, Result, ScpcError};
use crate::geometry::SpatialDesign;

/// Largest `n` for which dense `n × n` matrices are formed.
pub const MAX_DENSE_N: usize = 20_000;

/// Largest number of locations whose pairwise distances enter `ρ̄` exactly.
/// Larger designs use an evenly strided subset of this many locations.
pub const MAX_EXACT_RHO_N: usize = 3_000;

/// Smoothness class of a Matérn correlation function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum KernelFamily {
    /// `ν = 1/2`: `exp(-c d)`.
    Exponential,
    /// `ν = 3/2`: `(1 + √3 c d) exp(-√3 c d)`.
    Matern32,
    /// `ν = 5/2`: `(1 + √5 c d + 5 c² d² / 3) exp(-√5 c d)`.
    Matern52,
    /// `ν = ∞`: `exp(-c² d² / 2)`.
    Gaussian,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 4] = [
        KernelFamily::Exponential,
        KernelFamily::Matern32,
        KernelFamily::Matern52,
        KernelFamily::Gaussian,
    ];

    /// Smoothness parameter (`f64::INFINITY` for the Gaussian kernel).
    pub fn nu(self) -> f64 {
        match self {
            KernelFamily::Exponential => 0.5,
            KernelFamily::Matern32 => 1.5,
            KernelFamily::Matern52 => 2.5,
            KernelFamily::Gaussian => f64::INFINITY,
        }
    }

    /// Family with the given smoothness, if it is one of the four supported.
    pub fn from_nu(nu: f64) -> Option<Self> {
        KernelFamily::ALL.into_iter().find(|f| f.nu() == nu)
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Exponential => "exponential",
            KernelFamily::Matern32 => "matern32",
            KernelFamily::Matern52 => "matern52",
            KernelFamily::Gaussian => "gaussian",
        }
    }

    /// Correlation at scaled distance `x = c d ≥ 0`.
    #[inline]
    pub fn correlation(self, x: f64) -> f64 {
        if x == 0.0 {
            return 1.0;
        }
        if x == f64::INFINITY {
            return 0.0;
        }
        match self {
            KernelFamily::Exponential => libm::exp(-x),
            KernelFamily::Matern32 => {
                let t = SQRT_3 * x;
                (1.0 + t) * libm::exp(-t)
            }
            KernelFamily::Matern52 => {
                let t = SQRT_5 * x;
                (1.0 + t + t * t / 3.0) * libm::exp(-t)
            }
            KernelFamily::Gaussian => libm::exp(-0.5 * x * x),
        }
    }
}

const SQRT_3: f64 = 1.732_050_807_568_877_2;
const SQRT_5: f64 = 2.236_067_977_499_79;

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = ScpcError;

    /// Accepts family names (`exponential`, `matern32`, `matern52`,
    /// `gaussian`) or smoothness values (`0.5`, `1/2`, `1.5`, `3/2`, `2.5`,
    /// `5/2`, `inf`).
    fn from_str(s: &str) -> Result<Self> {
        let t: String = s.trim().chars().map(|c| c.to_ascii_lowercase()).collect();
        let fam = match t.as_str() {
            "exponential" | "exp" | "0.5" | "1/2" | ".5" => KernelFamily::Exponential,
            "matern32" | "1.5" | "3/2" => KernelFamily::Matern32,
            "matern52" | "2.5" | "5/2" => KernelFamily::Matern52,
            "gaussian" | "inf" | "infinity" => KernelFamily::Gaussian,
            _ => return Err(input_err!("unknown kernel family '{s}'")),
        };
        Ok(fam)
    }
}

/// A correlation family with persistence parameter `c`. Larger `c` means
/// weaker correlation; `c = ∞` is the uncorrelated limit.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CovarianceKernel {
    pub family: KernelFamily,
    pub c: f64,
}

impl CovarianceKernel {
    pub fn new(family: KernelFamily, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(input_err!("persistence parameter must be positive, got {c}"));
        }
        Ok(CovarianceKernel { family, c })
    }

    pub fn exponential(c: f64) -> Result<Self> {
        Self::new(KernelFamily::Exponential, c)
    }

    /// Correlation at distance `d`, which must be nonnegative.
    pub fn value(&self, d: f64) -> Result<f64> {
        if !(d >= 0.0) {
            return Err(input_err!("distance must be nonnegative, got {d}"));
        }
        Ok(self.eval(d))
    }

    #[inline]
    pub(crate) fn eval(&self, d: f64) -> f64 {
        if d == 0.0 {
            1.0
        } else {
            self.family.correlation(self.c * d)
        }
    }
}

/// Correlation at `distance` for `kernel`.
pub fn kernel_value(kernel: &CovarianceKernel, distance: f64) -> Result<f64> {
    kernel.value(distance)
}

/// Benchmark correlation matrix `Σ(c)` on the design.
pub fn covariance_matrix(kernel: &CovarianceKernel, design: &SpatialDesign) -> DMatrix<f64> {
    let n = design.n();
    let mut m = DMatrix::identity(n, n);
    for j in 0..n {
        for i in (j + 1)..n {
            let v = kernel.eval(design.distance(i, j));
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// `Σ(c)` from a precomputed distance matrix.
pub fn covariance_from_distances(kernel: &CovarianceKernel, dist: &DMatrix<f64>) -> DMatrix<f64> {
    dist.map(|d| kernel.eval(d))
}

/// Mean off-diagonal correlation of a covariance matrix. Entries are
/// divided by the geometric mean of their diagonals first, so any
/// covariance matrix is accepted.
pub fn avg_pairwise_correlation(sigma: &DMatrix<f64>) -> Result<f64> {
    let n = sigma.nrows();
    if n < 2 || sigma.ncols() != n {
        return Err(input_err!("need a square matrix with at least 2 rows, got {}x{}", n, sigma.ncols()));
    }
    let sd: Vec<f64> = (0..n)
        .map(|i| {
            let v = sigma[(i, i)];
            if v > 0.0 {
                Ok(libm::sqrt(v))
            } else {
                Err(input_err!("diagonal entry {i} is not positive ({v})"))
            }
        })
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    for j in 0..n {
        let mut col = 0.0;
        for i in (j + 1)..n {
            col += 0.5 * (sigma[(i, j)] + sigma[(j, i)]) / (sd[i] * sd[j]);
        }
        total += col;
    }
    Ok(2.0 * total / (n as f64 * (n as f64 - 1.0)))
}

/// Pairwise distances of a design, flattened, for fast `ρ̄(c)` evaluation.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    dists: Vec<f64>,
    median_positive: Option<f64>,
}

impl DistanceTable {
    pub fn new(design: &SpatialDesign) -> Self {
        let n = design.n();
        let idx: Vec<usize> = if n <= MAX_EXACT_RHO_N {
            (0..n).collect()
        } else {
            (0..MAX_EXACT_RHO_N).map(|k| k * n / MAX_EXACT_RHO_N).collect()
        };
        let mut dists = Vec::with_capacity(idx.len() * (idx.len() - 1) / 2);
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                dists.push(design.distance(i, j));
            }
        }
        let mut pos: Vec<f64> = dists.iter().copied().filter(|d| *d > 0.0).collect();
        let median_positive = if pos.is_empty() {
            None
        } else {
            let mid = pos.len() / 2;
            let (_, m, _) = pos.select_nth_unstable_by(mid, f64::total_cmp);
            Some(*m)
        };
        DistanceTable { dists, median_positive }
    }

    /// Median of the nonzero pairwise distances.
    pub fn median_positive(&self) -> Option<f64> {
        self.median_positive
    }

    /// `ρ̄` of `Σ(c)` for the given family.
    pub fn avg_correlation(&self, family: KernelFamily, c: f64) -> f64 {
        let mut s = 0.0;
        for &d in &self.dists {
            s += if d == 0.0 { 1.0 } else { family.correlation(c * d) };
        }
        s / self.dists.len() as f64
    }
}

/// `ρ̄(c)` directly from the design.
pub fn avg_correlation_at(design: &SpatialDesign, family: KernelFamily, c: f64) -> f64 {
    DistanceTable::new(design).avg_correlation(family, c)
}

/// Search interval for `c`, relative to `1 / median nonzero distance`.
pub const CALIBRATION_BRACKET: (f64, f64) = (1e-6, 1e8);

/// Stopping tolerance of the bisection, on the `log c` scale.
pub const CALIBRATION_LOG_TOL: f64 = 1e-10;

/// Persistence `c0` at which `Σ(c0)` has average pairwise correlation `rho0`.
///
/// `ρ̄` is strictly decreasing in `c` whenever some pair of locations is
/// distinct, so bisection on `log c` over a scale-free bracket suffices.
pub fn calibrate_c0(design: &SpatialDesign, family: KernelFamily, rho0: f64) -> Result<f64> {
    calibrate_with_table(&DistanceTable::new(design), family, rho0)
}

/// [`calibrate_c0`] on a precomputed distance table.
pub fn calibrate_with_table(table: &DistanceTable, family: KernelFamily, rho0: f64) -> Result<f64> {
    if !(rho0 > 0.0 && rho0 < 1.0) {
        return Err(input_err!("target average correlation must lie in (0, 1), got {rho0}"));
    }
    let med = table
        .median_positive()
        .ok_or_else(|| input_err!("all locations coincide; the persistence parameter is not identified"))?;
    let mut lo = libm::log(CALIBRATION_BRACKET.0 / med);
    let mut hi = libm::log(CALIBRATION_BRACKET.1 / med);
    let rho = |logc: f64| table.avg_correlation(family, libm::exp(logc));
    let (rho_max, rho_min) = (rho(lo), rho(hi));
    if !(rho0 < rho_max && rho0 > rho_min) {
        return Err(ScpcError::Calibration { rho0, min: rho_min, max: rho_max });
    }
    while hi - lo > CALIBRATION_LOG_TOL {
        let mid = 0.5 * (lo + hi);
        if rho(mid) > rho0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(libm::exp(0.5 * (lo + hi)))
}

/// Benchmark calibration record.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BenchmarkSpec {
    pub family: KernelFamily,
    pub rho0: f64,
    pub c0: f64,
    pub alpha: f64,
}

impl BenchmarkSpec {
    /// Calibrates `c0` on the design and validates `alpha`.
    pub fn calibrate(design: &SpatialDesign, family: KernelFamily, rho0: f64, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(input_err!("alpha must lie in (0, 0.5), got {alpha}"));
        }
        let c0 = calibrate_c0(design, family, rho0)?;
        Ok(BenchmarkSpec { family, rho0, c0, alpha })
    }

    pub fn kernel(&self) -> CovarianceKernel {
        CovarianceKernel { family: self.family, c: self.c0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_design, DesignKind, DesignSpec};
    use crate::linalg::sym_eigenvalues_desc;
    use alloc::vec;
    use proptest::prelude::*;

    fn four_point() -> SpatialDesign {
        SpatialDesign::from_points(&[[0.0], [1.0 / 3.0], [2.0 / 3.0], [1.0]]).unwrap()
    }

    #[test]
    fn kernel_values() {
        let k = CovarianceKernel::exponential(1.0).unwrap();
        assert_eq!(k.value(0.0).unwrap(), 1.0);
        let k2 = CovarianceKernel::exponential(2.0).unwrap();
        assert!((k2.value(0.5).unwrap() - libm::exp(-1.0)).abs() < 1e-15);
        let m = CovarianceKernel::new(KernelFamily::Matern32, 1.0).unwrap();
        let expect = (1.0 + 3f64.sqrt()) * (-(3f64.sqrt())).exp();
        assert!((m.value(1.0).unwrap() - expect).abs() < 1e-15);
        assert!((expect - 0.48335).abs() < 1e-5);
        assert!(k.value(-1.0).unwrap_err().is_input());
        assert!(CovarianceKernel::exponential(0.0).is_err());
    }

    #[test]
    fn gaussian_and_matern52_formulas() {
        let g = CovarianceKernel::new(KernelFamily::Gaussian, 2.0).unwrap();
        assert!((g.value(0.5).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
        let m = CovarianceKernel::new(KernelFamily::Matern52, 1.0).unwrap();
        let t = 5f64.sqrt();
        assert!((m.value(1.0).unwrap() - (1.0 + t + 5.0 / 3.0) * (-t).exp()).abs() < 1e-15);
    }

    #[test]
    fn family_parsing() {
        for (s, f) in [
            ("0.5", KernelFamily::Exponential),
            ("3/2", KernelFamily::Matern32),
            ("2.5", KernelFamily::Matern52),
            ("inf", KernelFamily::Gaussian),
            ("Gaussian", KernelFamily::Gaussian),
        ] {
            assert_eq!(s.parse::<KernelFamily>().unwrap(), f);
        }
        assert!("matern7".parse::<KernelFamily>().is_err());
        assert_eq!(KernelFamily::from_nu(1.5), Some(KernelFamily::Matern32));
    }

    #[test]
    fn matrix_limits() {
        let d = SpatialDesign::from_points(&[[0.0], [1.0], [1.0], [3.0]]).unwrap();
        let big = covariance_matrix(&CovarianceKernel::exponential(1e8).unwrap(), &d);
        // locations 1 and 2 coincide, so their correlation stays exactly 1
        assert_eq!(big[(1, 2)], 1.0);
        let mut id = DMatrix::identity(4, 4);
        id[(1, 2)] = 1.0;
        id[(2, 1)] = 1.0;
        assert!((big - id).abs().max() < 1e-8);

        let two = SpatialDesign::from_points(&[[0.0], [1.0]]).unwrap();
        let s = covariance_matrix(&CovarianceKernel::exponential(core::f64::consts::LN_2).unwrap(), &two);
        assert!((s[(0, 1)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn average_correlation_examples() {
        assert_eq!(avg_pairwise_correlation(&DMatrix::identity(5, 5)).unwrap(), 0.0);
        let two = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        assert!((avg_pairwise_correlation(&two).unwrap() - 0.3).abs() < 1e-15);
        // covariance with non-unit diagonal is converted to correlations
        let cov = DMatrix::from_row_slice(2, 2, &[4.0, 0.6, 0.6, 1.0]);
        assert!((avg_pairwise_correlation(&cov).unwrap() - 0.3).abs() < 1e-15);
        let bad = DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.1, 1.0]);
        assert!(avg_pairwise_correlation(&bad).unwrap_err().is_input());

        // direct pairwise summation oracle
        let d = four_point();
        let mut sum = 0.0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                sum += (-((i as f64 - j as f64).abs() / 3.0)).exp();
            }
        }
        let oracle = sum / 6.0;
        assert!((oracle - 0.59072).abs() < 1e-5);
        let sigma = covariance_matrix(&CovarianceKernel::exponential(1.0).unwrap(), &d);
        assert!((avg_pairwise_correlation(&sigma).unwrap() - oracle).abs() < 1e-14);
        assert!((avg_correlation_at(&d, KernelFamily::Exponential, 1.0) - oracle).abs() < 1e-14);
    }

    #[test]
    fn calibration_examples() {
        let two = SpatialDesign::from_points(&[[0.0], [1.0]]).unwrap();
        let c0 = calibrate_c0(&two, KernelFamily::Exponential, 0.5).unwrap();
        assert!((c0 - core::f64::consts::LN_2).abs() < 1e-9);

        let d = four_point();
        let target = avg_correlation_at(&d, KernelFamily::Exponential, 1.0);
        let c0 = calibrate_c0(&d, KernelFamily::Exponential, target).unwrap();
        assert!((c0 - 1.0).abs() < 1e-8);

        let small = calibrate_c0(&d, KernelFamily::Exponential, 0.001).unwrap();
        let large = calibrate_c0(&d, KernelFamily::Exponential, 0.10).unwrap();
        assert!(small > large);
    }

    #[test]
    fn calibration_hits_target_and_reports_range() {
        let spec = DesignSpec {
            kind: DesignKind::UniformRectangle { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] },
            n: 150,
            seed: 4,
        };
        let d = sample_design(&spec).unwrap();
        for fam in KernelFamily::ALL {
            for rho0 in [0.001, 0.02, 0.1] {
                let c0 = calibrate_c0(&d, fam, rho0).unwrap();
                let got = avg_correlation_at(&d, fam, c0);
                assert!(((got - rho0) / rho0).abs() < 1e-8, "{fam} {rho0}: {got}");
            }
        }
        // half the pairs coincide, so ρ̄ never drops below about one half
        let dup = SpatialDesign::from_points(&[[0.0], [0.0], [0.0], [1.0]]).unwrap();
        match calibrate_c0(&dup, KernelFamily::Exponential, 0.1) {
            Err(ScpcError::Calibration { min, .. }) => assert!((min - 0.5).abs() < 1e-9),
            other => panic!("expected calibration error, got {other:?}"),
        }
        assert!(calibrate_c0(&d, KernelFamily::Exponential, 1.5).unwrap_err().is_input());
    }

    fn design_strategy() -> impl Strategy<Value = SpatialDesign> {
        (5usize..40, any::<u64>()).prop_map(|(n, seed)| {
            sample_design(&DesignSpec {
                kind: DesignKind::UniformRectangle { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] },
                n,
                seed,
            })
            .unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn rho_bar_strictly_decreasing(d in design_strategy()) {
            let table = DistanceTable::new(&d);
            for fam in KernelFamily::ALL {
                let mut prev = f64::INFINITY;
                for k in 0..30 {
                    let c = 10f64.powf(-1.0 + 3.0 * k as f64 / 29.0);
                    let r = table.avg_correlation(fam, c);
                    prop_assert!(r < prev);
                    prev = r;
                }
            }
        }

        #[test]
        fn kernel_in_unit_interval_and_nonincreasing(c in 1e-3f64..1e3, a in 0.0f64..10.0, b in 0.0f64..10.0) {
            for fam in KernelFamily::ALL {
                let k = CovarianceKernel::new(fam, c).unwrap();
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                let (vlo, vhi) = (k.value(lo).unwrap(), k.value(hi).unwrap());
                prop_assert!((0.0..=1.0).contains(&vhi));
                prop_assert!(vhi <= vlo);
            }
        }

        #[test]
        fn families_are_psd(d in design_strategy(), logc in -0.5f64..1.5) {
            let c = 10f64.powf(logc);
            for fam in KernelFamily::ALL {
                let s = covariance_matrix(&CovarianceKernel::new(fam, c).unwrap(), &d);
                let min = *sym_eigenvalues_desc(s).last().unwrap();
                prop_assert!(min >= -1e-8 * d.n() as f64, "{} c={} min={}", fam, c, min);
            }
        }

        #[test]
        fn calibration_scale_equivariance(d in design_strategy(), a in 0.01f64..100.0) {
            let scaled = d.map_points(|s, t| for (x, y) in s.iter().zip(t) { *y = a * x }).unwrap();
            let c0 = calibrate_c0(&d, KernelFamily::Exponential, 0.05).unwrap();
            let c1 = calibrate_c0(&scaled, KernelFamily::Exponential, 0.05).unwrap();
            prop_assert!((c1 * a / c0 - 1.0).abs() < 1e-8);
            let s0 = covariance_matrix(&CovarianceKernel::exponential(c0).unwrap(), &d);
            let s1 = covariance_matrix(&CovarianceKernel::exponential(c1).unwrap(), &scaled);
            prop_assert!((s0 - s1).abs().max() < 1e-10);
        }
    }
}
