//! Small dense linear-algebra helpers shared across modules.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{numeric_err, Result};

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
///
/// Columns of the returned matrix are the matching unit-norm eigenvectors.
pub fn sym_eigen_desc(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Eigenvalues of a symmetric matrix, descending.
pub fn sym_eigenvalues_desc(m: DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Square root of a positive semidefinite matrix.
///
/// Eigenvalues below `-tol * λmax` are reported as an error; smaller negative
/// values are rounding noise and are clipped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sym_eigen_desc(symmetrize(m));
    let top = vals.first().copied().unwrap_or(0.0).max(0.0);
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        if v < -tol * top {
            return Err(numeric_err!(
                "matrix is not positive semidefinite (eigenvalue {v:.3e}, largest {top:.3e})"
            ));
        }
        let s = libm::sqrt(v.max(0.0));
        scaled.column_mut(j).scale_mut(s);
    }
    Ok(&scaled * vecs.transpose())
}

/// `(m + m') / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `M Σ M` with `M = I - 1 1'/n`: subtracts row and column means and adds
/// back the grand mean.
pub fn double_center(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let nf = n as f64;
    let row_means: Vec<f64> = (0..n).map(|i| m.row(i).sum() / nf).collect();
    let col_means: Vec<f64> = (0..n).map(|j| m.column(j).sum() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    DMatrix::from_fn(n, n, |i, j| m[(i, j)] - row_means[i] - col_means[j] + grand)
}

/// Flips the sign of `v` so that its first entry with magnitude above
/// `1e-12` is positive.
pub fn sign_normalize(v: &mut [f64]) {
    if let Some(&first) = v.iter().find(|x| x.abs() > 1e-12) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Cholesky factor of a PSD matrix, adding diagonal jitter from `jitters` in
/// turn until the factorization succeeds. Returns the factor and the jitter
/// used.
pub fn cholesky_with_jitter(m: &DMatrix<f64>, jitters: &[f64]) -> Result<(DMatrix<f64>, f64)> {
    let scale = (0..m.nrows())
        .map(|i| m[(i, i)].abs())
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    for &jit in jitters {
        let mut a = symmetrize(m);
        if jit > 0.0 {
            for i in 0..a.nrows() {
                a[(i, i)] += jit * scale;
            }
        }
        if let Some(ch) = a.cholesky() {
            return Ok((ch.l(), jit));
        }
    }
    Err(numeric_err!(
        "Cholesky factorization failed even with diagonal jitter {:.0e}",
        jitters.last().copied().unwrap_or(0.0)
    ))
}

/// Orthonormal basis for the column space of `a` (thin QR).
pub fn orthonormal_columns(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().qr().q()
}

/// Principal angles (radians, ascending) between the column spaces of `a`
/// and `b`, which must have the same number of rows and `b` at most as many
/// columns as `a`.
///
/// Angles come from the sines (singular values of the part of `b`'s basis
/// outside `a`'s span), which keeps tiny angles accurate.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let qa = orthonormal_columns(a);
    let qb = orthonormal_columns(b);
    let resid = &qb - &qa * (qa.transpose() * &qb);
    let mut sv: Vec<f64> = resid.singular_values().iter().copied().collect();
    sv.sort_by(f64::total_cmp);
    sv.into_iter().map(|s| libm::asin(s.clamp(0.0, 1.0))).collect()
}

/// Subtracts the mean from a vector in place.
pub fn demean(v: &mut DVector<f64>) {
    let m = v.mean();
    v.add_scalar_mut(-m);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psd_sqrt_squares_back() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let r = psd_sqrt(&m, 1e-10).unwrap();
        assert!((&r * &r - &m).abs().max() < 1e-12);
    }

    #[test]
    fn double_center_kills_constants() {
        let m = DMatrix::from_fn(4, 4, |i, j| 1.0 / (1.0 + (i as f64 - j as f64).abs()));
        let c = double_center(&m);
        let ones = DVector::from_element(4, 1.0);
        assert!((&c * &ones).abs().max() < 1e-14);
    }

    #[test]
    fn principal_angles_of_same_space_vanish() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, -1.0, 0.0, 0.0]);
        assert!(principal_angles(&a, &b).iter().all(|t| *t < 1e-7));
    }
}
