//! Alternative t-statistic based procedures used as comparison points:
//! a Bartlett-kernel estimator with an oracle bandwidth and normal critical
//! value, the full-span Bartlett estimator with a critical value exact under
//! i.i.d. data, cluster-mean tests, and Fourier projection tests.
//!
//! Each method is prepared once per design and then applied
//! to many outcome vectors.

use nalgebra::{DMatrix, DVector};
use scpc_core::covariance::{covariance_matrix, CovarianceKernel};
use scpc_core::rejection::{rejection_probability, w0_from_quadratic_form, CvOptions, GridSpec, SizeEngine};
use scpc_core::{KernelFamily, Result, ScpcError, SpatialDesign};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

/// Number of bandwidths tried by the oracle search.
pub const BARTLETT_GRID_POINTS: usize = 25;

fn input(msg: impl Into<String>) -> ScpcError {
    ScpcError::Input(msg.into())
}

/// `max(0, 1 - x)`.
pub fn bartlett(x: f64) -> f64 {
    (1.0 - x).max(0.0)
}

/// `K[l, m] = k_Bartlett(||s_l - s_m|| / b)`.
pub fn bartlett_matrix(design: &SpatialDesign, b: f64) -> DMatrix<f64> {
    let d = design.pairwise_distances();
    d.map(|x| bartlett(x / b))
}

/// Outcome of one test on one outcome vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub reject: bool,
    /// Interval length `2 cv σ̂ / √n`.
    pub length: f64,
}

/// Statistic `τ = √n (ȳ - μ0)/σ̂` with `σ̂² = n⁻¹ Σ_j (w_j'û)²` for fixed
/// weights `W` (the columns of `W0` after the constant).
#[derive(Debug, Clone)]
pub struct QuadraticFormTest {
    w: DMatrix<f64>,
    cv: f64,
}

impl QuadraticFormTest {
    pub fn new(w0: &DMatrix<f64>, cv: f64) -> Self {
        QuadraticFormTest { w: w0.columns(1, w0.ncols() - 1).into_owned(), cv }
    }

    pub fn cv(&self) -> f64 {
        self.cv
    }

    pub fn sigma_hat(&self, y: &DVector<f64>) -> f64 {
        let n = y.len() as f64;
        let u = y.add_scalar(-y.mean());
        (self.w.tr_mul(&u).norm_squared() / n).sqrt()
    }

    pub fn apply(&self, y: &DVector<f64>, mu0: f64) -> TestOutcome {
        let n = y.len() as f64;
        let sigma = self.sigma_hat(y);
        let t = n.sqrt() * (y.mean() - mu0) / sigma;
        TestOutcome { reject: !(t.abs() <= self.cv), length: 2.0 * self.cv * sigma / n.sqrt() }
    }
}

/// Log-spaced bandwidths from the smallest positive distance to the
/// diameter.
pub fn bartlett_bandwidth_grid(design: &SpatialDesign) -> Result<Vec<f64>> {
    let lo = design.min_positive_distance().ok_or_else(|| input("all locations coincide"))?;
    let hi = design.diameter();
    let k = BARTLETT_GRID_POINTS;
    Ok((0..k).map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (k - 1) as f64).exp()).collect())
}

/// Bartlett estimator with `cv = z_{1-α/2}` and the bandwidth whose exact
/// null rejection probability under `truth` is closest to `alpha`.
#[derive(Debug, Clone)]
pub struct BartlettOracle {
    pub bandwidth: f64,
    /// Exact size at the chosen bandwidth.
    pub size: f64,
    pub test: QuadraticFormTest,
}

impl BartlettOracle {
    pub fn new(design: &SpatialDesign, truth: &DMatrix<f64>, alpha: f64) -> Result<Self> {
        let cv = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
        let mut best: Option<(f64, f64, DMatrix<f64>)> = None;
        for b in bartlett_bandwidth_grid(design)? {
            let Some(w0) = w0_from_quadratic_form(&bartlett_matrix(design, b)) else { continue };
            let size = rejection_probability(&w0, truth, cv)?;
            if best.as_ref().map_or(true, |(s, _, _)| (size - alpha).abs() < (s - alpha).abs()) {
                best = Some((size, b, w0));
            }
        }
        let (size, bandwidth, w0) = best.ok_or_else(|| input("no bandwidth gives a usable variance estimator"))?;
        Ok(BartlettOracle { bandwidth, size, test: QuadraticFormTest::new(&w0, cv) })
    }
}

/// Full-span Bartlett estimator (`b` = diameter) with the critical value
/// that is exact under `Σ = I`.
#[derive(Debug, Clone)]
pub struct Kvb {
    pub bandwidth: f64,
    pub test: QuadraticFormTest,
}

impl Kvb {
    pub fn new(design: &SpatialDesign, alpha: f64) -> Result<Self> {
        let b = design.diameter();
        if !(b > 0.0) {
            return Err(input("all locations coincide"));
        }
        let w0 = w0_from_quadratic_form(&bartlett_matrix(design, b))
            .ok_or_else(|| input("the full-span Bartlett estimator vanishes on this design"))?;
        let opts = CvOptions { grid: GridSpec::IidOnly, ..CvOptions::default() };
        let mut engine = SizeEngine::for_w0(design, KernelFamily::Exponential, 1.0, &w0, opts)?;
        let q = engine.width();
        let cv = engine.critical_value(q, alpha)?.cv;
        Ok(Kvb { bandwidth: b, test: QuadraticFormTest::new(&w0, cv) })
    }
}

/// Anchor points for the cluster assignment: the four corners of the
/// bounding rectangle for `q = 4`, plus the four side midpoints and the
/// center for `q = 9`.
pub fn cluster_anchors(design: &SpatialDesign, q: usize) -> Result<Vec<[f64; 2]>> {
    if design.dim() != 2 {
        return Err(input("cluster anchors need two-dimensional locations"));
    }
    let (lo, hi) = design.bounding_box();
    let (x0, x1, y0, y1) = (lo[0], hi[0], lo[1], hi[1]);
    let (xm, ym) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
    let corners = [[x0, y1], [x1, y1], [x1, y0], [x0, y0]];
    match q {
        4 => Ok(corners.to_vec()),
        9 => {
            let mut a = corners.to_vec();
            a.extend_from_slice(&[[xm, y1], [x1, ym], [xm, y0], [x0, ym], [xm, ym]]);
            Ok(a)
        }
        _ => Err(input(format!("cluster assignment supports q = 4 or q = 9, got {q}"))),
    }
}

/// Assigns locations to `q` clusters of size `⌊n/q⌋` or `⌈n/q⌉`.
///
/// Two-dimensional designs use the anchor points of [`cluster_anchors`]:
/// the (location, cluster) pair with the smallest distance among
/// unassigned locations and clusters with spare capacity is assigned
/// first, and so on. Ties go to the lower anchor index, then the lower
/// location index. The first `n mod q` anchors get the larger capacity.
/// One-dimensional designs are split into contiguous blocks of the sorted
/// locations.
pub fn cluster_assign(design: &SpatialDesign, q: usize) -> Result<Vec<usize>> {
    let n = design.n();
    if q < 2 || q > n {
        return Err(input(format!("need 2 <= q <= n = {n} clusters, got {q}")));
    }
    let capacity: Vec<usize> = (0..q).map(|k| n / q + usize::from(k < n % q)).collect();
    let mut labels = vec![usize::MAX; n];
    if design.dim() == 1 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| design.point(a)[0].total_cmp(&design.point(b)[0]).then(a.cmp(&b)));
        let mut at = 0;
        for (k, cap) in capacity.iter().enumerate() {
            for &i in &order[at..at + cap] {
                labels[i] = k;
            }
            at += cap;
        }
        return Ok(labels);
    }
    let anchors = cluster_anchors(design, q)?;
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * q);
    for (k, a) in anchors.iter().enumerate() {
        for i in 0..n {
            let p = design.point(i);
            let d = ((p[0] - a[0]).powi(2) + (p[1] - a[1]).powi(2)).sqrt();
            pairs.push((d, k, i));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut left = capacity;
    let mut assigned = 0;
    for (_, k, i) in pairs {
        if labels[i] == usize::MAX && left[k] > 0 {
            labels[i] = k;
            left[k] -= 1;
            assigned += 1;
            if assigned == n {
                break;
            }
        }
    }
    Ok(labels)
}

/// Cluster-mean t-test with Student-t critical value on `q - 1` degrees of
/// freedom.
#[derive(Debug, Clone)]
pub struct ClusterTest {
    pub labels: Vec<usize>,
    pub q: usize,
    pub cv: f64,
}

impl ClusterTest {
    pub fn new(design: &SpatialDesign, q: usize, alpha: f64) -> Result<Self> {
        let labels = cluster_assign(design, q)?;
        let t = StudentsT::new(0.0, 1.0, (q - 1) as f64).map_err(|e| input(e.to_string()))?;
        Ok(ClusterTest { labels, q, cv: t.inverse_cdf(1.0 - alpha / 2.0) })
    }

    pub fn apply(&self, y: &DVector<f64>, mu0: f64) -> TestOutcome {
        let mut sums = vec![0.0; self.q];
        let mut counts = vec![0usize; self.q];
        for (i, &k) in self.labels.iter().enumerate() {
            sums[k] += y[i];
            counts[k] += 1;
        }
        let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, c)| s / *c as f64).collect();
        let qf = self.q as f64;
        let m = means.iter().sum::<f64>() / qf;
        let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (qf - 1.0);
        let se = (var / qf).sqrt();
        let t = (m - mu0) / se;
        TestOutcome { reject: !(t.abs() <= self.cv), length: 2.0 * self.cv * se }
    }
}

/// Nonzero integer frequency vectors in a half space (one of each `±k`
/// pair), ordered by squared length and then lexicographically.
fn half_space_frequencies(d: usize, count: usize) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut radius = 1i64;
    while out.len() < count {
        let mut batch = Vec::new();
        let side = (2 * radius + 1) as usize;
        let total = side.pow(d as u32);
        for idx in 0..total {
            let mut rem = idx;
            let mut k = vec![0i64; d];
            for slot in k.iter_mut() {
                *slot = (rem % side) as i64 - radius;
                rem /= side;
            }
            let norm2: i64 = k.iter().map(|x| x * x).sum();
            let first = k.iter().copied().find(|x| *x != 0);
            if norm2 > (radius - 1) * (radius - 1) && norm2 <= radius * radius && first.is_some_and(|x| x > 0) {
                batch.push((norm2, k));
            }
        }
        batch.sort();
        out.extend(batch.into_iter().map(|(_, k)| k));
        radius += 1;
    }
    out
}

/// Low-frequency Fourier functions on the bounding box (rescaled to the
/// unit cube), Gram–Schmidt orthogonalized against the constant and each
/// other on the sample locations, scaled to `r'r = n`. Returns the
/// `n × (q+1)` matrix `[1, R/√q]`.
pub fn fourier_weights(design: &SpatialDesign, q: usize) -> Result<DMatrix<f64>> {
    let n = design.n();
    if q == 0 || q >= n {
        return Err(input(format!("need 1 <= q < n = {n} Fourier functions, got {q}")));
    }
    let d = design.dim();
    let (lo, hi) = design.bounding_box();
    let unit = |i: usize, j: usize| {
        let w = hi[j] - lo[j];
        if w > 0.0 {
            (design.point(i)[j] - lo[j]) / w
        } else {
            0.0
        }
    };
    let freqs = half_space_frequencies(d, q.div_ceil(2));
    let mut raw = DMatrix::from_element(n, q + 1, 1.0);
    let mut col = 1;
    'outer: for k in &freqs {
        for trig in 0..2 {
            if col > q {
                break 'outer;
            }
            for i in 0..n {
                let arg: f64 = k.iter().enumerate().map(|(j, kj)| *kj as f64 * unit(i, j)).sum::<f64>()
                    * 2.0
                    * std::f64::consts::PI;
                raw[(i, col)] = if trig == 0 { arg.cos() } else { arg.sin() };
            }
            col += 1;
        }
    }
    let qr = raw.clone().qr();
    let r = qr.r();
    let top = (0..=q).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..=q).any(|i| r[(i, i)].abs() <= 1e-10 * top) {
        return Err(ScpcError::Rank(format!("the first {q} Fourier functions are collinear on this design")));
    }
    let qm = qr.q();
    let scale = (n as f64).sqrt() / (q as f64).sqrt();
    let mut w0 = DMatrix::from_element(n, q + 1, 1.0);
    for j in 1..=q {
        let sign = if r[(j, j)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            w0[(i, j)] = sign * scale * qm[(i, j)];
        }
    }
    Ok(w0)
}

/// Projection test on `q` Fourier weights with Student-t critical value on
/// `q` degrees of freedom.
#[derive(Debug, Clone)]
pub struct FourierTest {
    pub q: usize,
    pub test: QuadraticFormTest,
}

impl FourierTest {
    pub fn new(design: &SpatialDesign, q: usize, alpha: f64) -> Result<Self> {
        let w0 = fourier_weights(design, q)?;
        let t = StudentsT::new(0.0, 1.0, q as f64).map_err(|e| input(e.to_string()))?;
        Ok(FourierTest { q, test: QuadraticFormTest::new(&w0, t.inverse_cdf(1.0 - alpha / 2.0)) })
    }
}

/// Benchmark covariance matrix on a design.
pub fn kernel_covariance(design: &SpatialDesign, family: KernelFamily, c: f64) -> Result<DMatrix<f64>> {
    Ok(covariance_matrix(&CovarianceKernel::new(family, c)?, design))
}
