//! Multi-threaded versions of the core's embarrassingly parallel loops.
//! Results equal the sequential ones exactly.

use rayon::prelude::*;
use scpc_core::eigen::{nystrom_merge, nystrom_subset_columns, nystrom_subsets};
use scpc_core::ftest::{select_q_volume_with, FtestCv, FtestOptions, FtestPlan, VolumeSelection};
use scpc_core::rejection::{CvOptions, SizeEngine};
use scpc_core::{BasisSource, CovarianceKernel, KernelFamily, PCBasis, Result, ScpcError, SpatialDesign};

/// Nyström basis with the subsets processed in parallel.
pub fn nystrom_pc_weights_par(
    design: &SpatialDesign,
    kernel: &CovarianceKernel,
    q: usize,
    subset_size: usize,
    n_subsets: usize,
    seed: u64,
) -> Result<PCBasis> {
    let n = design.n();
    if subset_size <= q || subset_size > n || n_subsets == 0 {
        return Err(ScpcError::Input(format!(
            "Nyström needs q < subset size <= n and at least one subset (q = {q}, subset size = {subset_size}, n = {n})"
        )));
    }
    let blocks = nystrom_subsets(n, subset_size, n_subsets, seed)
        .par_iter()
        .map(|idx| nystrom_subset_columns(design, kernel, q, idx))
        .collect::<Result<Vec<_>>>()?;
    nystrom_merge(&blocks, q, BasisSource::Nystrom { subset_size, subsets: n_subsets, seed })
}

/// Monte Carlo critical value for `T²` with the grid cells simulated in
/// parallel.
pub fn ftest_critical_value_par(
    design: &SpatialDesign,
    basis: &PCBasis,
    family: KernelFamily,
    c0: f64,
    alpha: f64,
    m: usize,
    opts: &FtestOptions,
) -> Result<FtestCv> {
    let plan = FtestPlan::new(design, basis, family, c0, alpha, m, opts)?;
    let tails = (0..plan.cell_count())
        .into_par_iter()
        .map(|i| plan.simulate_cell(i))
        .collect::<Result<Vec<_>>>()?;
    plan.finish(tails)
}

/// Volume-minimizing `q` for `m` outcomes, using the parallel Monte Carlo
/// critical values (exact quadrature for `m = 1`).
#[allow(clippy::too_many_arguments)]
pub fn select_q_volume_par(
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
        return Err(ScpcError::Input(format!("q_max = {q_max} exceeds the {} available components", basis_full.q())));
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
        Ok(ftest_critical_value_par(design, &basis, family, c0, alpha, m, opts)?.cv)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use scpc_core::eigen::nystrom_pc_weights;
    use scpc_core::ftest::{ftest_critical_value, FtestGrid};
    use scpc_core::geometry::{sample_design, DesignKind, DesignSpec};
    use scpc_core::{calibrate_c0, pc_weights};

    fn square(n: usize) -> SpatialDesign {
        sample_design(&DesignSpec {
            kind: DesignKind::UniformRectangle { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] },
            n,
            seed: 2,
        })
        .unwrap()
    }

    #[test]
    fn parallel_nystrom_equals_sequential() {
        let d = square(300);
        let k = CovarianceKernel::exponential(5.0).unwrap();
        let a = nystrom_pc_weights(&d, &k, 5, 100, 3, 9).unwrap();
        let b = nystrom_pc_weights_par(&d, &k, 5, 100, 3, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parallel_ftest_equals_sequential() {
        let d = square(40);
        let c0 = calibrate_c0(&d, KernelFamily::Exponential, 0.05).unwrap();
        let sigma = scpc_core::covariance::covariance_matrix(&CovarianceKernel::exponential(c0).unwrap(), &d);
        let basis = pc_weights(&sigma, 5).unwrap();
        let opts = FtestOptions { grid: FtestGrid::LogSpaced { points: 2 }, ..FtestOptions::default() };
        let a = ftest_critical_value(&d, &basis, KernelFamily::Exponential, c0, 0.05, 2, &opts).unwrap();
        let b = ftest_critical_value_par(&d, &basis, KernelFamily::Exponential, c0, 0.05, 2, &opts).unwrap();
        assert_eq!(a, b);
    }
}
