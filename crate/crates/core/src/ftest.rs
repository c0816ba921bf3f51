//! Joint tests of `m` means: Hotelling's T² with principal-component
//! weights, Monte Carlo critical values with a supremum over a persistence
//! vector `c = (c_1, …, c_m)`, and the volume-minimizing number of
//! components.
//!
//! Under the block-diagonal benchmark `Σ(c) = diag(Σ(c_1), …, Σ(c_m))` the
//! statistic depends on the data only through the `(q+1) × m` matrix
//! `X = E'U`, with `E = n^{-1/2}[1, R]`. Its columns are independent with
//! covariance `Ω(c_k) = E'Σ(c_k)E`, so each replication draws `(q+1)m`
//! normals instead of `nm`.
//!
//! The simulation is split into cells (one per point of the product grid)
//! so that a caller with threads can run [`FtestPlan::simulate_cell`] in
//! parallel and merge with [`FtestPlan::finish`]. Every coordinate reuses
//! the same random stream in every cell, which keeps the supremum over the
//! grid free of independent noise across cells.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::covariance::{covariance_from_distances, CovarianceKernel, DistanceTable, KernelFamily};
use crate::eigen::PCBasis;
use crate::error::{input_err, numeric_err, Result, ScpcError};
use crate::geometry::SpatialDesign;
use crate::linalg::sym_eigen_desc;
use crate::rejection::{grid_upper_end, log_grid, CvOptions, SizeEngine};

/// Largest `m` accepted with the automatic product grid.
pub const FTEST_MAX_M: usize = 3;
/// Largest number of grid cells.
pub const FTEST_MAX_CELLS: usize = 10_000;
/// Smallest number of Monte Carlo replications.
pub const FTEST_MIN_REPS: usize = 100_000;

/// `T² = n (ȳ - μ0)' (Y'ŴŴ'Y)⁻¹ (ȳ - μ0)` with `Ŵ = R / √(nq)`, so that
/// every column of `Ŵ` has length `1/√q`. For `m = 1` this is `τ²`.
pub fn hotelling_t2(y: &DMatrix<f64>, mu0: &[f64], basis: &PCBasis) -> Result<f64> {
    let (n, m) = y.shape();
    let q = basis.q();
    if n != basis.n() {
        return Err(input_err!("outcome matrix has {n} rows but the basis has n = {}", basis.n()));
    }
    if mu0.len() != m {
        return Err(input_err!("mu0 has {} entries for {m} outcome columns", mu0.len()));
    }
    if m == 0 {
        return Err(input_err!("need at least one outcome column"));
    }
    if q < m {
        return Err(input_err!("the test of {m} means needs q >= {m} components, got q = {q}"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(input_err!("outcome matrix has non-finite entries"));
    }
    let nf = n as f64;
    let a = basis.r().tr_mul(y) / libm::sqrt(nf * q as f64);
    let inner = a.tr_mul(&a);
    let d = DVector::from_fn(m, |k, _| y.column(k).mean() - mu0[k]);
    let chol = inner.cholesky().ok_or_else(|| {
        numeric_err!("Y'ŴŴ'Y is singular with q = {q}; use more components or drop collinear outcomes")
    })?;
    let s = chol.solve(&d);
    Ok(nf * d.dot(&s))
}

/// Persistence grid for the Monte Carlo supremum.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FtestGrid {
    /// Per coordinate: `points` log-spaced values from `c0` to the point
    /// where the average correlation has settled, plus the i.i.d. limit.
    LogSpaced { points: usize },
    /// Only `c = (∞, …, ∞)`, that is `Σ = I`.
    IidOnly,
    /// Caller-supplied cells, each a vector of `m` persistence values
    /// (`f64::INFINITY` for the i.i.d. limit).
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FtestOptions {
    pub reps: usize,
    pub grid: FtestGrid,
    pub seed: u64,
    /// Average-correlation tolerance that ends the log grid.
    pub rho_floor: f64,
}

impl Default for FtestOptions {
    fn default() -> Self {
        FtestOptions { reps: FTEST_MIN_REPS, grid: FtestGrid::LogSpaced { points: 8 }, seed: 20210201, rho_floor: 1e-6 }
    }
}

/// Rejection frequency at the final critical value for one grid cell.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FtestCell {
    pub c: Vec<f64>,
    pub rejection: f64,
}

/// Monte Carlo critical value for `T²`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FtestCv {
    pub cv: f64,
    pub q: usize,
    pub m: usize,
    pub reps: usize,
    /// `√(α(1-α)/reps)`.
    pub mc_se: f64,
    pub sup_rejection: f64,
    pub sup_c: Vec<f64>,
    pub cells: Vec<FtestCell>,
}

/// Largest simulated values of `T²` in one cell, in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTail {
    pub cell: usize,
    pub top: Vec<f64>,
}

/// Precomputed factors and grid for one `(design, basis, c0, m)` problem.
#[derive(Debug, Clone)]
pub struct FtestPlan {
    q: usize,
    m: usize,
    alpha: f64,
    reps: usize,
    seed: u64,
    /// Distinct persistence values and the factor `F` with `FF' = Ω(c)`.
    values: Vec<f64>,
    factors: Vec<DMatrix<f64>>,
    /// Each cell as indices into `values`.
    cells: Vec<Vec<usize>>,
}

fn omega_factor(e: &DMatrix<f64>, dist: &DMatrix<f64>, family: KernelFamily, c: f64) -> Result<DMatrix<f64>> {
    let omega = if c.is_infinite() {
        e.tr_mul(e)
    } else {
        let sigma = covariance_from_distances(&CovarianceKernel::new(family, c)?, dist);
        e.tr_mul(&(sigma * e))
    };
    let (vals, vecs) = sym_eigen_desc(omega);
    if vals.iter().any(|v| !v.is_finite()) || !(vals[0] > 0.0) {
        return Err(numeric_err!("covariance of the projected outcomes is degenerate at c = {c}"));
    }
    let mut f = vecs;
    for (j, v) in vals.iter().enumerate() {
        let s = libm::sqrt(v.max(0.0));
        f.column_mut(j).scale_mut(s);
    }
    Ok(f)
}

/// Nondecreasing index tuples of length `m` over `0..g`. `T²` is invariant
/// to permuting the outcome columns, so one ordering per multiset suffices.
fn multisets(g: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = alloc::vec![0usize; m];
    loop {
        out.push(cur.clone());
        let mut k = m;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if cur[k] + 1 < g {
                let v = cur[k] + 1;
                for slot in cur[k..].iter_mut() {
                    *slot = v;
                }
                break;
            }
        }
    }
}

fn binomial(n: usize, k: usize) -> usize {
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
        if r > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    r as usize
}

impl FtestPlan {
    pub fn new(
        design: &SpatialDesign,
        basis: &PCBasis,
        family: KernelFamily,
        c0: f64,
        alpha: f64,
        m: usize,
        opts: &FtestOptions,
    ) -> Result<Self> {
        let n = design.n();
        let q = basis.q();
        if basis.n() != n {
            return Err(input_err!("basis has n = {} but the design has {n} locations", basis.n()));
        }
        if m == 0 || q < m {
            return Err(input_err!("need 1 <= m <= q, got m = {m}, q = {q}"));
        }
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(input_err!("alpha must lie in (0, 0.5), got {alpha}"));
        }
        if !(c0 > 0.0) {
            return Err(input_err!("benchmark persistence c0 must be positive, got {c0}"));
        }
        if opts.reps < FTEST_MIN_REPS {
            return Err(input_err!("the Monte Carlo critical value needs at least {FTEST_MIN_REPS} replications"));
        }
        let (values, cells) = match &opts.grid {
            FtestGrid::LogSpaced { points } => {
                if m > FTEST_MAX_M {
                    return Err(input_err!(
                        "the automatic grid supports m <= {FTEST_MAX_M}; supply an explicit grid for m = {m}"
                    ));
                }
                if *points == 0 {
                    return Err(input_err!("grid needs at least one point per coordinate"));
                }
                let count = binomial(points + 1 + m - 1, m);
                if count > FTEST_MAX_CELLS {
                    return Err(input_err!("grid has {count} cells, more than {FTEST_MAX_CELLS}"));
                }
                let table = DistanceTable::new(design);
                let c_hi = grid_upper_end(&table, family, c0, opts.rho_floor);
                let mut v = log_grid(c0, c_hi, *points);
                v.push(f64::INFINITY);
                let g = v.len();
                (v, multisets(g, m))
            }
            FtestGrid::IidOnly => (alloc::vec![f64::INFINITY], alloc::vec![alloc::vec![0; m]]),
            FtestGrid::Explicit(list) => {
                if list.is_empty() || list.len() > FTEST_MAX_CELLS {
                    return Err(input_err!("explicit grid needs between 1 and {FTEST_MAX_CELLS} cells"));
                }
                let mut values: Vec<f64> = Vec::new();
                let mut cells = Vec::with_capacity(list.len());
                for cell in list {
                    if cell.len() != m || cell.iter().any(|c| !(*c > 0.0)) {
                        return Err(input_err!("every grid cell needs {m} positive persistence values"));
                    }
                    let idx = cell
                        .iter()
                        .map(|c| match values.iter().position(|v| v == c) {
                            Some(i) => i,
                            None => {
                                values.push(*c);
                                values.len() - 1
                            }
                        })
                        .collect();
                    cells.push(idx);
                }
                (values, cells)
            }
        };
        let scale = 1.0 / libm::sqrt(n as f64);
        let e = DMatrix::from_fn(n, q + 1, |i, j| scale * if j == 0 { 1.0 } else { basis.r()[(i, j - 1)] });
        let needs_dist = values.iter().any(|c| c.is_finite());
        let dist = if needs_dist { design.pairwise_distances() } else { DMatrix::zeros(0, 0) };
        let factors =
            values.iter().map(|&c| omega_factor(&e, &dist, family, c)).collect::<Result<Vec<_>>>()?;
        Ok(FtestPlan { q, m, alpha, reps: opts.reps, seed: opts.seed, values, factors, cells })
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_c(&self, cell: usize) -> Vec<f64> {
        self.cells[cell].iter().map(|&i| self.values[i]).collect()
    }

    /// Number of upper order statistics kept per cell.
    fn tail_len(&self) -> usize {
        libm::floor(self.alpha * self.reps as f64) as usize + 1
    }

    /// Simulates `T²` in one cell and keeps its upper tail.
    pub fn simulate_cell(&self, cell: usize) -> Result<CellTail> {
        let (q, m) = (self.q, self.m);
        let dim = q + 1;
        let factors: Vec<&DMatrix<f64>> = self.cells[cell].iter().map(|&i| &self.factors[i]).collect();
        let mut rngs: Vec<ChaCha8Rng> = (0..m)
            .map(|k| {
                let mut r = ChaCha8Rng::seed_from_u64(self.seed);
                r.set_stream(k as u64);
                r
            })
            .collect();
        let mut z = alloc::vec![0.0; dim];
        let mut x = alloc::vec![0.0; dim * m];
        let mut s = alloc::vec![0.0; m * m];
        let mut b = alloc::vec![0.0; m];
        let mut values = Vec::with_capacity(self.reps);
        let inv_q = 1.0 / q as f64;
        for _ in 0..self.reps {
            for k in 0..m {
                for zi in z.iter_mut() {
                    *zi = StandardNormal.sample(&mut rngs[k]);
                }
                let f = factors[k];
                let col = &mut x[k * dim..(k + 1) * dim];
                for (i, xi) in col.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (j, zj) in z.iter().enumerate() {
                        acc += f[(i, j)] * zj;
                    }
                    *xi = acc;
                }
            }
            for a in 0..m {
                for c in 0..=a {
                    let (xa, xc) = (&x[a * dim..(a + 1) * dim], &x[c * dim..(c + 1) * dim]);
                    let mut acc = 0.0;
                    for j in 1..dim {
                        acc += xa[j] * xc[j];
                    }
                    s[a * m + c] = acc * inv_q;
                }
                b[a] = x[a * dim];
            }
            values.push(small_quadratic_inverse(&mut s, &mut b, m));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(numeric_err!("simulated T² is not finite in cell {cell}"));
        }
        let k = self.tail_len().min(values.len());
        let split = values.len() - k;
        values.select_nth_unstable_by(split, f64::total_cmp);
        let mut top = values.split_off(split);
        top.sort_by(|a, b| b.total_cmp(a));
        Ok(CellTail { cell, top })
    }

    /// Merges the cell tails into the critical value: the smallest `cv`
    /// with at most `⌊α·reps⌋` exceedances in every cell.
    pub fn finish(&self, mut tails: Vec<CellTail>) -> Result<FtestCv> {
        tails.sort_by_key(|t| t.cell);
        if tails.len() != self.cells.len() || tails.iter().enumerate().any(|(i, t)| t.cell != i) {
            return Err(input_err!("expected one tail for each of the {} cells", self.cells.len()));
        }
        let k = self.tail_len();
        let cv = tails.iter().map(|t| t.top[k - 1]).fold(f64::NEG_INFINITY, f64::max);
        let reps = self.reps as f64;
        let cells: Vec<FtestCell> = tails
            .iter()
            .map(|t| FtestCell {
                c: self.cell_c(t.cell),
                rejection: t.top.iter().take_while(|v| **v > cv).count() as f64 / reps,
            })
            .collect();
        let (arg, sup) = cells
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(ai, av), (i, c)| if c.rejection > av { (i, c.rejection) } else { (ai, av) });
        Ok(FtestCv {
            cv,
            q: self.q,
            m: self.m,
            reps: self.reps,
            mc_se: libm::sqrt(self.alpha * (1.0 - self.alpha) / reps),
            sup_rejection: sup,
            sup_c: cells[arg].c.clone(),
            cells,
        })
    }
}

/// `b'S⁻¹b` for a small symmetric positive definite `S` stored row-major
/// (lower triangle used). Overwrites both buffers. Returns `∞` when `S` is
/// numerically singular, which always counts as a rejection.
fn small_quadratic_inverse(s: &mut [f64], b: &mut [f64], m: usize) -> f64 {
    for j in 0..m {
        let mut d = s[j * m + j];
        for k in 0..j {
            d -= s[j * m + k] * s[j * m + k];
        }
        if !(d > 0.0) {
            return f64::INFINITY;
        }
        let d = libm::sqrt(d);
        s[j * m + j] = d;
        for i in j + 1..m {
            let mut v = s[i * m + j];
            for k in 0..j {
                v -= s[i * m + k] * s[j * m + k];
            }
            s[i * m + j] = v / d;
        }
    }
    let mut acc = 0.0;
    for i in 0..m {
        let mut v = b[i];
        for k in 0..i {
            v -= s[i * m + k] * b[k];
        }
        b[i] = v / s[i * m + i];
        acc += b[i] * b[i];
    }
    acc
}

/// Sequential Monte Carlo critical value for `T²` with `m` outcomes and
/// the first `q = basis.q()` components.
pub fn ftest_critical_value(
    design: &SpatialDesign,
    basis: &PCBasis,
    family: KernelFamily,
    c0: f64,
    alpha: f64,
    m: usize,
    opts: &FtestOptions,
) -> Result<FtestCv> {
    let plan = FtestPlan::new(design, basis, family, c0, alpha, m, opts)?;
    let tails = (0..plan.cell_count()).map(|i| plan.simulate_cell(i)).collect::<Result<Vec<_>>>()?;
    plan.finish(tails)
}

/// Expected volume of the `T²` confidence ellipsoid for i.i.d. unit
/// variance data:
/// `(2π cv/n)^{m/2} Γ((q+1)/2) / (q^{m/2} Γ((q-m+1)/2) Γ(m/2+1))`.
///
/// For `m = 1` and `cv = cv_t²` this equals the expected interval length.
pub fn volume_objective(q: usize, m: usize, cv: f64, n: usize) -> f64 {
    let (qf, mf) = (q as f64, m as f64);
    let log = 0.5 * mf * libm::log(2.0 * core::f64::consts::PI * cv / n as f64)
        + libm::lgamma(0.5 * (qf + 1.0))
        - 0.5 * mf * libm::log(qf)
        - libm::lgamma(0.5 * (qf - mf + 1.0))
        - libm::lgamma(0.5 * mf + 1.0);
    libm::exp(log)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VolumeRow {
    pub q: usize,
    pub cv: f64,
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VolumeSelection {
    pub q: usize,
    pub cv: f64,
    pub table: Vec<VolumeRow>,
}

/// Minimizes [`volume_objective`] over `q ∈ m..=q_max`, with `cv_for(q)`
/// supplying the critical value of `T²`. Ties go to the smaller `q`.
pub fn select_q_volume_with<F>(n: usize, m: usize, q_max: usize, mut cv_for: F) -> Result<VolumeSelection>
where
    F: FnMut(usize) -> Result<f64>,
{
    if m == 0 || q_max < m {
        return Err(input_err!("need q_max >= m >= 1, got m = {m}, q_max = {q_max}"));
    }
    let mut table = Vec::with_capacity(q_max - m + 1);
    for q in m..=q_max {
        let cv = cv_for(q).map_err(|e| e.at(alloc::format!("critical value for q = {q}")))?;
        table.push(VolumeRow { q, cv, volume: volume_objective(q, m, cv, n) });
    }
    let best = table.iter().fold(table[0], |b, r| if r.volume < b.volume { *r } else { b });
    Ok(VolumeSelection { q: best.q, cv: best.cv, table })
}

/// Volume-minimizing `q` on a design. For `m = 1` the critical values come
/// from exact quadrature (squared, since `T² = τ²`); otherwise from the
/// Monte Carlo plan, one plan per `q`.
pub fn select_q_volume(
    design: &SpatialDesign,
    basis_full: &PCBasis,
    family: KernelFamily,
    c0: f64,
    alpha: f64,
    m: usize,
    q_max: usize,
    opts: &FtestOptions,
) -> Result<VolumeSelection> {
    if q_max > basis_full.q() {
        return Err(input_err!("q_max = {q_max} exceeds the {} available components", basis_full.q()));
    }
    let n = design.n();
    if m == 1 {
        let weights = basis_full.r().columns(0, q_max).into_owned();
        let mut engine = SizeEngine::for_basis(design, family, c0, &weights, CvOptions::default())?;
        return select_q_volume_with(n, m, q_max, |q| {
            let cv = engine.critical_value(q, alpha)?.cv;
            Ok(cv * cv)
        });
    }
    select_q_volume_with(n, m, q_max, |q| {
        let basis = basis_full.truncate(q)?;
        Ok(ftest_critical_value(design, &basis, family, c0, alpha, m, opts)?.cv)
    })
}

/// Outcome of a joint test.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HotellingResult {
    pub t2: f64,
    pub q: usize,
    pub m: usize,
    pub cv: f64,
    pub reject: bool,
    pub means: Vec<f64>,
    pub mu0: Vec<f64>,
    pub c0: f64,
    pub alpha: f64,
    pub volume_table: Vec<VolumeRow>,
}

/// Applies a selected `(q, cv)` to an outcome matrix.
pub fn hotelling_test(
    y: &DMatrix<f64>,
    mu0: &[f64],
    basis_full: &PCBasis,
    selection: &VolumeSelection,
    c0: f64,
    alpha: f64,
) -> Result<HotellingResult> {
    let basis = basis_full.truncate(selection.q)?;
    let t2 = hotelling_t2(y, mu0, &basis)?;
    if t2.is_nan() {
        return Err(ScpcError::Degenerate(alloc::string::String::from("T² is undefined")));
    }
    Ok(HotellingResult {
        t2,
        q: selection.q,
        m: y.ncols(),
        cv: selection.cv,
        reject: t2 > selection.cv,
        means: (0..y.ncols()).map(|k| y.column(k).mean()).collect(),
        mu0: mu0.to_vec(),
        c0,
        alpha,
        volume_table: selection.table.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::calibrate_c0;
    use crate::eigen::pc_weights_for;
    use crate::geometry::{sample_design, DesignKind, DesignSpec};
    use crate::scpc::{expected_length_iid, t_statistic};
    use rand::Rng;
    use statrs::distribution::{ContinuousCDF, FisherSnedecor};

    fn setup(n: usize, q: usize, seed: u64) -> (SpatialDesign, PCBasis, f64) {
        let design = sample_design(&DesignSpec {
            kind: DesignKind::UniformRectangle { lo: alloc::vec![0.0, 0.0], hi: alloc::vec![1.0, 1.0] },
            n,
            seed,
        })
        .unwrap();
        let c0 = calibrate_c0(&design, KernelFamily::Exponential, 0.05).unwrap();
        let basis = pc_weights_for(&design, &CovarianceKernel::exponential(c0).unwrap(), q).unwrap();
        (design, basis, c0)
    }

    fn random_matrix(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn t2_reduces_to_squared_t_for_one_outcome() {
        let (_, basis, _) = setup(40, 6, 3);
        let y = random_matrix(40, 1, 9);
        let t2 = hotelling_t2(&y, &[0.3], &basis).unwrap();
        let tau = t_statistic(&y.column(0).into_owned(), 0.3, &basis).unwrap();
        assert!((t2 - tau * tau).abs() < 1e-10 * t2.max(1.0));
    }

    #[test]
    fn t2_is_zero_at_the_sample_mean() {
        let (_, basis, _) = setup(40, 6, 3);
        let y = random_matrix(40, 2, 1);
        let mu: Vec<f64> = (0..2).map(|k| y.column(k).mean()).collect();
        assert!(hotelling_t2(&y, &mu, &basis).unwrap().abs() < 1e-20);
    }

    #[test]
    fn t2_invariant_to_linear_recombination_of_outcomes() {
        let (_, basis, _) = setup(50, 8, 5);
        let y = random_matrix(50, 3, 2);
        let mu0 = [0.1, -0.2, 0.05];
        let h = DMatrix::from_row_slice(3, 3, &[1.0, 0.4, -0.3, 0.2, 2.0, 0.1, -0.5, 0.3, 0.7]);
        let yh = &y * &h;
        let mu_h: Vec<f64> = (h.transpose() * DVector::from_column_slice(&mu0)).iter().copied().collect();
        let a = hotelling_t2(&y, &mu0, &basis).unwrap();
        let b = hotelling_t2(&yh, &mu_h, &basis).unwrap();
        assert!((a - b).abs() < 1e-8 * a.max(1.0), "{a} vs {b}");
    }

    #[test]
    fn t2_rejects_too_few_components() {
        let (_, basis, _) = setup(30, 2, 5);
        let y = random_matrix(30, 3, 2);
        assert!(hotelling_t2(&y, &[0.0; 3], &basis).unwrap_err().is_input());
    }

    #[test]
    fn small_solver_matches_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for m in 1..=4 {
            let a = DMatrix::from_fn(m + 2, m, |_, _| rng.random::<f64>() - 0.5);
            let s = a.tr_mul(&a);
            let b = DVector::from_fn(m, |_, _| rng.random::<f64>());
            let want = b.dot(&s.clone().cholesky().unwrap().solve(&b));
            let mut sbuf: Vec<f64> = (0..m * m).map(|i| s[(i / m, i % m)]).collect();
            let mut bbuf: Vec<f64> = b.iter().copied().collect();
            let got = small_quadratic_inverse(&mut sbuf, &mut bbuf, m);
            assert!((got - want).abs() < 1e-10 * want.max(1.0));
        }
    }

    #[test]
    fn multiset_grid_sizes() {
        assert_eq!(multisets(9, 1).len(), 9);
        assert_eq!(multisets(9, 2).len(), 45);
        assert_eq!(multisets(9, 3).len(), 165);
        assert_eq!(binomial(11, 3), 165);
        assert!(multisets(4, 3).iter().all(|c| c.windows(2).all(|w| w[0] <= w[1])));
    }

    #[test]
    fn iid_two_outcomes_match_hotelling_law() {
        // Under Σ = I, (q-m+1)/(qm)·T² ~ F(m, q-m+1).
        let (design, basis, c0) = setup(60, 10, 11);
        let opts = FtestOptions { grid: FtestGrid::IidOnly, ..FtestOptions::default() };
        let res = ftest_critical_value(&design, &basis, KernelFamily::Exponential, c0, 0.05, 2, &opts).unwrap();
        let (q, m) = (10.0, 2.0);
        let f = FisherSnedecor::new(m, q - m + 1.0).unwrap();
        let p = f.sf(res.cv * (q - m + 1.0) / (q * m));
        assert!((p - 0.05).abs() < 3.0 * res.mc_se, "p = {p}, se = {}", res.mc_se);
    }

    #[test]
    fn larger_alpha_gives_smaller_cv() {
        let (design, basis, c0) = setup(40, 5, 2);
        let opts = FtestOptions { grid: FtestGrid::LogSpaced { points: 3 }, ..FtestOptions::default() };
        let a = ftest_critical_value(&design, &basis, KernelFamily::Exponential, c0, 0.01, 1, &opts).unwrap();
        let b = ftest_critical_value(&design, &basis, KernelFamily::Exponential, c0, 0.05, 1, &opts).unwrap();
        assert!(a.cv > b.cv);
    }

    #[test]
    fn reproducible_given_seed() {
        let (design, basis, c0) = setup(30, 4, 2);
        let opts = FtestOptions { grid: FtestGrid::LogSpaced { points: 2 }, ..FtestOptions::default() };
        let a = ftest_critical_value(&design, &basis, KernelFamily::Exponential, c0, 0.05, 2, &opts).unwrap();
        let b = ftest_critical_value(&design, &basis, KernelFamily::Exponential, c0, 0.05, 2, &opts).unwrap();
        assert_eq!(a, b);
        let other = FtestOptions { seed: 7, ..opts };
        let c = ftest_critical_value(&design, &basis, KernelFamily::Exponential, c0, 0.05, 2, &other).unwrap();
        assert_ne!(a.cv, c.cv);
    }

    #[test]
    fn grid_and_replication_guards() {
        let (design, basis, c0) = setup(30, 6, 2);
        let few = FtestOptions { reps: 1000, ..FtestOptions::default() };
        assert!(ftest_critical_value(&design, &basis, KernelFamily::Exponential, c0, 0.05, 1, &few).is_err());
        let wide = FtestOptions::default();
        let err = FtestPlan::new(&design, &basis, KernelFamily::Exponential, c0, 0.05, 4, &wide).unwrap_err();
        assert!(err.is_input());
        let huge = FtestOptions { grid: FtestGrid::LogSpaced { points: 60 }, ..FtestOptions::default() };
        assert!(FtestPlan::new(&design, &basis, KernelFamily::Exponential, c0, 0.05, 3, &huge).is_err());
    }

    #[test]
    fn volume_at_q_equal_m_matches_formula() {
        for m in 1..=4usize {
            let mf = m as f64;
            let cv = 7.0;
            let n = 100;
            let gamma_part = libm::exp(
                libm::lgamma(0.5 * (mf + 1.0)) - libm::lgamma(0.5) - libm::lgamma(0.5 * mf + 1.0),
            ) / libm::pow(mf, 0.5 * mf);
            let want = libm::pow(2.0 * core::f64::consts::PI * cv / n as f64, 0.5 * mf) * gamma_part;
            let got = volume_objective(m, m, cv, n);
            assert!((got - want).abs() < 1e-12 * want);
        }
    }

    #[test]
    fn volume_for_one_outcome_is_expected_length() {
        for q in 1..30 {
            let cv = 1.5 + 0.1 * q as f64;
            let v = volume_objective(q, 1, cv * cv, 80);
            assert!(v > 0.0);
            assert!((v - expected_length_iid(q, cv, 80)).abs() < 1e-12 * v);
        }
    }

    #[test]
    fn volume_matches_simulated_ellipsoid_volume() {
        // E[vol] = π^{m/2}/Γ(m/2+1)·(cv/n)^{m/2}·E[det(S/q)^{1/2}], S ~ Wishart(q, I_m).
        let (q, m, cv, n) = (6usize, 2usize, 9.0, 50usize);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let reps = 200_000;
        let mut acc = 0.0;
        for _ in 0..reps {
            let z = DMatrix::from_fn(q, m, |_, _| StandardNormal.sample(&mut rng));
            let s: DMatrix<f64> = z.tr_mul(&z) / q as f64;
            acc += libm::sqrt(s.determinant());
        }
        let mf = m as f64;
        let unit = libm::pow(core::f64::consts::PI, 0.5 * mf) / libm::exp(libm::lgamma(0.5 * mf + 1.0));
        let mc = unit * libm::pow(cv / n as f64, 0.5 * mf) * acc / reps as f64;
        let exact = volume_objective(q, m, cv, n);
        assert!((mc - exact).abs() < 0.01 * exact, "{mc} vs {exact}");
    }

    #[test]
    fn volume_selection_for_one_outcome_matches_length_selection() {
        let (design, basis, c0) = setup(60, 12, 8);
        let sel = select_q_volume(&design, &basis, KernelFamily::Exponential, c0, 0.05, 1, 12, &FtestOptions::default())
            .unwrap();
        let len = crate::scpc::select_q_with_weights(
            &design,
            KernelFamily::Exponential,
            c0,
            basis.r(),
            0.05,
            12,
            &CvOptions::default(),
        )
        .unwrap();
        assert_eq!(sel.q, len.q);
        assert!((sel.cv - len.cv * len.cv).abs() < 1e-9 * sel.cv);
    }
}
