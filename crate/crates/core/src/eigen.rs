//! Principal-component weights of the demeaned benchmark covariance.
//!
//! The weights `r_j` are the leading eigenvectors of `MΣ(c0)M`, scaled so
//! that `r_j'r_j = n`. For large designs a Nyström approximation evaluates
//! kernel eigenfunctions estimated on random location subsets at every
//! location and merges the subsets with a principal component analysis.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::covariance::{covariance_matrix, CovarianceKernel};
use crate::error::{input_err, numeric_err, Result};
use crate::geometry::SpatialDesign;
use crate::linalg::{double_center, sign_normalize, sym_eigen_desc};

/// Where a basis came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case", tag = "kind"))]
pub enum BasisSource {
    /// Dense eigendecomposition of `MΣM`.
    Exact,
    /// Nyström approximation.
    Nystrom { subset_size: usize, subsets: usize, seed: u64 },
    /// Weights supplied by the caller (for example cosine weights).
    Custom,
}

/// `q` principal-component weight vectors with their eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct PCBasis {
    r: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    source: BasisSource,
}

impl PCBasis {
    /// Wraps caller-supplied weights. Each column must satisfy
    /// `n⁻¹ r'r = 1` and `r'1 = 0` up to `1e-6·n`.
    pub fn from_columns(r: DMatrix<f64>, eigenvalues: Vec<f64>, source: BasisSource) -> Result<Self> {
        let (n, q) = r.shape();
        if q == 0 || q >= n {
            return Err(input_err!("need 1 <= q < n weight vectors, got q = {q} with n = {n}"));
        }
        if eigenvalues.len() != q {
            return Err(input_err!("{} eigenvalues for {q} weight vectors", eigenvalues.len()));
        }
        let nf = n as f64;
        for j in 0..q {
            let col = r.column(j);
            if (col.norm_squared() / nf - 1.0).abs() > 1e-6 || col.sum().abs() > 1e-6 * nf {
                return Err(input_err!("weight vector {j} is not normalized and demeaned"));
            }
        }
        Ok(PCBasis { r, eigenvalues, source })
    }

    pub fn n(&self) -> usize {
        self.r.nrows()
    }

    pub fn q(&self) -> usize {
        self.r.ncols()
    }

    /// `n × q` matrix of weight vectors, leading component first.
    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn source(&self) -> BasisSource {
        self.source
    }

    /// The first `q` components.
    pub fn truncate(&self, q: usize) -> Result<Self> {
        if q == 0 || q > self.q() {
            return Err(input_err!("cannot keep {q} of {} components", self.q()));
        }
        Ok(PCBasis {
            r: self.r.columns(0, q).into_owned(),
            eigenvalues: self.eigenvalues[..q].to_vec(),
            source: self.source,
        })
    }

    /// `W0 = [1, R/√q]`, the `n × (q+1)` matrix whose quadratic forms define
    /// the test statistic.
    pub fn w0(&self) -> DMatrix<f64> {
        let (n, q) = self.r.shape();
        let s = 1.0 / libm::sqrt(q as f64);
        DMatrix::from_fn(n, q + 1, |i, j| if j == 0 { 1.0 } else { s * self.r[(i, j - 1)] })
    }

    /// Projections `n^{-1/2} r_j'u` of a vector on the weights.
    pub fn project(&self, u: &DVector<f64>) -> DVector<f64> {
        self.r.tr_mul(u) / libm::sqrt(self.n() as f64)
    }
}

/// Leading `q` eigenvectors of `MΣM`, scaled to `r'r = n`.
///
/// Within a repeated eigenvalue any orthonormal basis of the eigenspace may
/// be returned; downstream statistics depend only on the spanned space.
pub fn pc_weights(sigma: &DMatrix<f64>, q: usize) -> Result<PCBasis> {
    let n = sigma.nrows();
    if sigma.ncols() != n {
        return Err(input_err!("covariance matrix must be square, got {}x{}", n, sigma.ncols()));
    }
    if q == 0 || q >= n {
        return Err(input_err!("need 1 <= q <= n - 1 = {}, got q = {q}", n.saturating_sub(1)));
    }
    let (vals, vecs) = sym_eigen_desc(double_center(sigma));
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(numeric_err!("eigensolver returned non-finite eigenvalues"));
    }
    let scale = libm::sqrt(n as f64);
    let mut r = DMatrix::zeros(n, q);
    for j in 0..q {
        let mut col: Vec<f64> = vecs.column(j).iter().map(|x| x * scale).collect();
        sign_normalize(&mut col);
        r.set_column(j, &DVector::from_vec(col));
    }
    let eigenvalues = vals[..q].iter().map(|v| if *v < 0.0 && *v > -1e-10 { 0.0 } else { *v }).collect();
    Ok(PCBasis { r, eigenvalues, source: BasisSource::Exact })
}

/// Exact basis straight from a design and kernel.
pub fn pc_weights_for(design: &SpatialDesign, kernel: &CovarianceKernel, q: usize) -> Result<PCBasis> {
    pc_weights(&covariance_matrix(kernel, design), q)
}

/// Default subset size for the Nyström path.
pub const NYSTROM_DEFAULT_SUBSET: usize = 1000;
/// Default number of subsets for the Nyström path.
pub const NYSTROM_DEFAULT_SUBSETS: usize = 3;
/// Designs up to this size use the exact eigensolve when the path is
/// chosen automatically.
pub const NYSTROM_AUTO_THRESHOLD: usize = 2000;

/// Random location subsets for the Nyström path. Subset `k` is drawn from
/// stream `k` of a ChaCha8 generator seeded with `seed`; a subset as large
/// as the design is the whole design in its original order.
pub fn nystrom_subsets(n: usize, subset_size: usize, subsets: usize, seed: u64) -> Vec<Vec<usize>> {
    (0..subsets)
        .map(|k| {
            if subset_size >= n {
                return (0..n).collect();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut idx = index::sample(&mut rng, n, subset_size).into_vec();
            idx.sort_unstable();
            idx
        })
        .collect()
}

/// Eigenfunction evaluations from one subset: an `n × q` matrix whose
/// column `j` is the extended eigenfunction, demeaned over the design,
/// scaled to unit norm and then multiplied by the square root of the
/// implied full-sample eigenvalue `λ̃_j n / ñ`.
pub fn nystrom_subset_columns(
    design: &SpatialDesign,
    kernel: &CovarianceKernel,
    q: usize,
    subset: &[usize],
) -> Result<DMatrix<f64>> {
    let n = design.n();
    let m = subset.len();
    if q == 0 || m <= q {
        return Err(input_err!("Nyström subset size {m} must exceed q = {q}"));
    }
    let sub = design.select(subset)?;
    let sigma_sub = covariance_matrix(kernel, &sub);
    let mf = m as f64;
    let row_means: Vec<f64> = (0..m).map(|l| sigma_sub.row(l).sum() / mf).collect();
    let (vals, vecs) = sym_eigen_desc(double_center(&sigma_sub));
    if vals[q - 1] <= 0.0 || !vals[q - 1].is_finite() {
        return Err(numeric_err!(
            "Nyström subset covariance has only {} positive eigenvalues, fewer than q = {q}",
            vals.iter().take_while(|v| **v > 0.0).count()
        ));
    }

    let mut k_row = alloc::vec![0.0; m];
    let mut out = DMatrix::zeros(n, q);
    for i in 0..n {
        let si = design.point(i);
        for (l, &idx) in subset.iter().enumerate() {
            let d = crate::geometry::euclidean(si, design.point(idx));
            k_row[l] = kernel.eval(d) - row_means[l];
        }
        for j in 0..q {
            let mut s = 0.0;
            for (l, kl) in k_row.iter().enumerate() {
                s += vecs[(l, j)] * kl;
            }
            out[(i, j)] = s / (mf * vals[j]);
        }
    }
    for j in 0..q {
        let mut col = out.column_mut(j);
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        let norm = col.norm();
        if !(norm > 0.0) {
            return Err(numeric_err!("Nyström eigenfunction {j} vanishes on the design"));
        }
        let weight = libm::sqrt(vals[j] * n as f64 / mf);
        col.scale_mut(weight / norm);
    }
    Ok(out)
}

/// Merges subset evaluations into a `q`-dimensional basis through the
/// leading eigenvectors of the averaged outer products.
pub fn nystrom_merge(blocks: &[DMatrix<f64>], q: usize, source: BasisSource) -> Result<PCBasis> {
    let k = blocks.len();
    if k == 0 {
        return Err(input_err!("need at least one Nyström subset"));
    }
    let n = blocks[0].nrows();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut e = DMatrix::zeros(n, cols);
    let mut at = 0;
    for b in blocks {
        e.columns_mut(at, b.ncols()).copy_from(b);
        at += b.ncols();
    }
    let kf = k as f64;
    let gram = e.tr_mul(&e) / kf;
    let (g, v) = sym_eigen_desc(gram);
    if q > cols || g[q - 1] <= 0.0 {
        return Err(numeric_err!("stacked Nyström evaluations have rank below q = {q}"));
    }
    let scale = libm::sqrt(n as f64);
    let mut r = DMatrix::zeros(n, q);
    for j in 0..q {
        let u = &e * v.column(j) / libm::sqrt(kf * g[j]);
        let mut col: Vec<f64> = u.iter().copied().collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        col.iter_mut().for_each(|x| *x -= mean);
        let norm = libm::sqrt(col.iter().map(|x| x * x).sum::<f64>());
        col.iter_mut().for_each(|x| *x *= scale / norm);
        sign_normalize(&mut col);
        r.set_column(j, &DVector::from_vec(col));
    }
    Ok(PCBasis { r, eigenvalues: g[..q].to_vec(), source })
}

/// Nyström approximation to [`pc_weights`] for the benchmark kernel.
///
/// Runtime is `O(n · ñ · subsets)` plus one `ñ × ñ` eigensolve per subset.
pub fn nystrom_pc_weights(
    design: &SpatialDesign,
    kernel: &CovarianceKernel,
    q: usize,
    subset_size: usize,
    n_subsets: usize,
    seed: u64,
) -> Result<PCBasis> {
    let n = design.n();
    if subset_size <= q {
        return Err(input_err!("Nyström subset size {subset_size} must exceed q = {q}"));
    }
    if subset_size > n {
        return Err(input_err!("Nyström subset size {subset_size} exceeds n = {n}"));
    }
    if n_subsets == 0 {
        return Err(input_err!("need at least one Nyström subset"));
    }
    let blocks = nystrom_subsets(n, subset_size, n_subsets, seed)
        .iter()
        .map(|idx| nystrom_subset_columns(design, kernel, q, idx))
        .collect::<Result<Vec<_>>>()?;
    nystrom_merge(&blocks, q, BasisSource::Nystrom { subset_size, subsets: n_subsets, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_design, DesignKind, DesignSpec};
    use crate::linalg::principal_angles;
    use alloc::vec;

    fn square(n: usize, seed: u64) -> SpatialDesign {
        sample_design(&DesignSpec {
            kind: DesignKind::UniformRectangle { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] },
            n,
            seed,
        })
        .unwrap()
    }

    fn check_invariants(b: &PCBasis) {
        let n = b.n() as f64;
        let gram = b.r().tr_mul(b.r());
        for i in 0..b.q() {
            assert!((gram[(i, i)] / n - 1.0).abs() < 1e-10);
            assert!(b.r().column(i).sum().abs() < 1e-6 * n);
            for j in 0..i {
                assert!(gram[(i, j)].abs() < 1e-6 * n);
            }
        }
        assert!(b.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
        assert!(b.eigenvalues().iter().all(|v| *v >= -1e-10));
    }

    #[test]
    fn identity_covariance() {
        let b = pc_weights(&DMatrix::identity(6, 6), 3).unwrap();
        check_invariants(&b);
        for v in b.eigenvalues() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_point_basis() {
        let rho = 0.4;
        let s = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        let b = pc_weights(&s, 1).unwrap();
        assert!((b.eigenvalues()[0] - (1.0 - rho)).abs() < 1e-14);
        assert!((b.r()[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((b.r()[(1, 0)] + 1.0).abs() < 1e-14);
    }

    // cyclic Jacobi rotations, written independently of the library solver
    fn jacobi_eigenvalues(mut a: DMatrix<f64>) -> Vec<f64> {
        let n = a.nrows();
        for _ in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a[(p, q)] * a[(p, q)];
                }
            }
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[(k, p)], a[(k, q)]);
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut v: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        v.sort_by(|x, y| y.total_cmp(x));
        v
    }

    #[test]
    fn matches_jacobi_oracle() {
        let d = SpatialDesign::regular_1d(5).unwrap();
        let sigma = covariance_matrix(&CovarianceKernel::exponential(10.0).unwrap(), &d);
        let n = 5;
        let m = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
        let oracle = jacobi_eigenvalues(&m * &sigma * &m);
        let b = pc_weights(&sigma, 2).unwrap();
        for j in 0..2 {
            assert!((b.eigenvalues()[j] - oracle[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn q_out_of_range() {
        let s = DMatrix::identity(4, 4);
        assert!(pc_weights(&s, 4).unwrap_err().is_input());
        assert!(pc_weights(&s, 0).unwrap_err().is_input());
    }

    #[test]
    fn w0_layout() {
        let b = pc_weights(&DMatrix::identity(5, 5), 2).unwrap();
        let w = b.w0();
        assert_eq!(w.shape(), (5, 3));
        assert!(w.column(0).iter().all(|x| *x == 1.0));
        assert!((w[(3, 2)] - b.r()[(3, 1)] / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rigid_motion_invariance() {
        let d = square(80, 5);
        let (ct, st) = (0.3f64.cos(), 0.3f64.sin());
        let moved = d.map_points(|s, t| {
            t[0] = ct * s[0] - st * s[1] + 4.0;
            t[1] = st * s[0] + ct * s[1] - 2.0;
        })
        .unwrap();
        let k = CovarianceKernel::exponential(5.0).unwrap();
        let a = pc_weights_for(&d, &k, 6).unwrap();
        let b = pc_weights_for(&moved, &k, 6).unwrap();
        let angles = principal_angles(a.r(), b.r());
        assert!(angles.iter().all(|t| *t < 1e-8), "{angles:?}");
    }

    #[test]
    fn leading_eigenvalue_nonincreasing_in_c() {
        // MΣ(c)M vanishes as c -> 0, so the leading eigenvalue first rises;
        // it is monotone once the average correlation is at most 0.1
        let d = square(60, 2);
        let c_start = crate::covariance::calibrate_c0(&d, crate::covariance::KernelFamily::Exponential, 0.1).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..25 {
            let c = c_start * 1.4f64.powi(k);
            let b = pc_weights_for(&d, &CovarianceKernel::exponential(c).unwrap(), 1).unwrap();
            assert!(b.eigenvalues()[0] <= prev + 1e-12);
            prev = b.eigenvalues()[0];
        }
    }

    #[test]
    fn nystrom_full_subset_reproduces_exact() {
        let d = square(200, 11);
        let k = CovarianceKernel::exponential(4.0).unwrap();
        let exact = pc_weights_for(&d, &k, 8).unwrap();
        let ny = nystrom_pc_weights(&d, &k, 8, 200, 1, 3).unwrap();
        check_invariants(&ny);
        let angles = principal_angles(exact.r(), ny.r());
        assert!(*angles.last().unwrap() < 1e-6, "{angles:?}");
        for (a, b) in exact.eigenvalues().iter().zip(ny.eigenvalues()) {
            assert!((a - b).abs() < 1e-8 * a);
        }
    }

    #[test]
    fn nystrom_is_deterministic_and_validates() {
        let d = square(150, 1);
        let k = CovarianceKernel::exponential(3.0).unwrap();
        let a = nystrom_pc_weights(&d, &k, 5, 60, 3, 9).unwrap();
        let b = nystrom_pc_weights(&d, &k, 5, 60, 3, 9).unwrap();
        assert_eq!(a, b);
        check_invariants(&a);
        assert!(nystrom_pc_weights(&d, &k, 5, 5, 3, 9).unwrap_err().is_input());
    }
}
