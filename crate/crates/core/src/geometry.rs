//! Spatial designs: sample locations in `R^d`, their distances, and samplers
//! for synthetic experiment designs.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{input_err, Result, ScpcError};

/// Proposals allowed per accepted point before rejection sampling gives up.
pub const MAX_PROPOSALS_PER_POINT: u64 = 1_000_000;

/// Relative size of location measurement errors: the half-width of the
/// uniform error is this multiple of the side of the smallest enclosing
/// square.
pub const LOCATION_ERROR_FRACTION: f64 = 0.0375;

/// `n` locations in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpatialDesign {
    n: usize,
    d: usize,
    coords: Vec<f64>,
}

impl SpatialDesign {
    /// Builds a design from row-major coordinates (`coords.len() == n * d`).
    pub fn from_flat(coords: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(input_err!("locations need at least one coordinate"));
        }
        if coords.len() % d != 0 {
            return Err(input_err!(
                "{} coordinate values do not split into rows of {d}",
                coords.len()
            ));
        }
        let n = coords.len() / d;
        if n < 2 {
            return Err(input_err!("a design needs at least 2 locations, got {n}"));
        }
        if let Some(pos) = coords.iter().position(|x| !x.is_finite()) {
            return Err(input_err!(
                "non-finite coordinate at location {} (dimension {})",
                pos / d,
                pos % d
            ));
        }
        Ok(SpatialDesign { n, d, coords })
    }

    /// Builds a design from one slice per location.
    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let d = points.first().map(|p| p.as_ref().len()).unwrap_or(0);
        let mut flat = Vec::with_capacity(points.len() * d);
        for (i, p) in points.iter().enumerate() {
            let p = p.as_ref();
            if p.len() != d {
                return Err(input_err!("location {i} has {} coordinates, expected {d}", p.len()));
            }
            flat.extend_from_slice(p);
        }
        Self::from_flat(flat, d)
    }

    /// Builds a design from an `n × d` matrix.
    pub fn from_matrix(coords: &DMatrix<f64>) -> Result<Self> {
        let (n, d) = coords.shape();
        let flat = (0..n).flat_map(|i| (0..d).map(move |j| coords[(i, j)])).collect();
        Self::from_flat(flat, d)
    }

    /// Midpoint grid `s_l = (l - 1/2)/n` on `[0, 1]`.
    pub fn regular_1d(n: usize) -> Result<Self> {
        let coords = (0..n).map(|l| (l as f64 + 0.5) / n as f64).collect();
        Self::from_flat(coords, 1)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Coordinates of location `i`.
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    /// Row-major coordinate buffer.
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// `n × d` coordinate matrix.
    pub fn coord_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.d, &self.coords)
    }

    /// Euclidean distance between locations `i` and `j`.
    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        euclidean(self.point(i), self.point(j))
    }

    /// Full symmetric distance matrix.
    pub fn pairwise_distances(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let dij = self.distance(i, j);
                m[(i, j)] = dij;
                m[(j, i)] = dij;
            }
        }
        m
    }

    /// Per-dimension minima and maxima.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.d];
        let mut hi = vec![f64::NEG_INFINITY; self.d];
        for p in self.coords.chunks_exact(self.d) {
            for k in 0..self.d {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    /// Side of the smallest axis-aligned square (cube) enclosing all
    /// locations: the largest coordinate range across dimensions.
    pub fn enclosing_side(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max)
    }

    /// Largest pairwise distance.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0_f64;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                best = best.max(self.distance(i, j));
            }
        }
        best
    }

    /// Smallest strictly positive pairwise distance, if any.
    pub fn min_positive_distance(&self) -> Option<f64> {
        let mut best = f64::INFINITY;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let dij = self.distance(i, j);
                if dij > 0.0 && dij < best {
                    best = dij;
                }
            }
        }
        best.is_finite().then_some(best)
    }

    /// Median of the nonzero pairwise distances (exact up to 3000 locations,
    /// computed on an evenly strided subset of 3000 locations beyond that).
    pub fn median_positive_distance(&self) -> Option<f64> {
        const CAP: usize = 3000;
        let idx: Vec<usize> = if self.n <= CAP {
            (0..self.n).collect()
        } else {
            (0..CAP).map(|k| k * self.n / CAP).collect()
        };
        let mut dists = Vec::with_capacity(idx.len() * (idx.len() - 1) / 2);
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                let dij = self.distance(i, j);
                if dij > 0.0 {
                    dists.push(dij);
                }
            }
        }
        if dists.is_empty() {
            return None;
        }
        let mid = dists.len() / 2;
        let (_, m, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
        Some(*m)
    }

    /// Applies `f` to every location, producing a new design.
    pub fn map_points(&self, mut f: impl FnMut(&[f64], &mut [f64])) -> Result<Self> {
        let mut out = vec![0.0; self.coords.len()];
        for (src, dst) in self.coords.chunks_exact(self.d).zip(out.chunks_exact_mut(self.d)) {
            f(src, dst);
        }
        Self::from_flat(out, self.d)
    }

    /// Subset of locations, in the given order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let mut flat = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            flat.extend_from_slice(self.point(i));
        }
        Self::from_flat(flat, self.d)
    }
}

#[inline]
pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let t = x - y;
        s += t * t;
    }
    libm::sqrt(s)
}

/// Sampling region for synthetic designs.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Region {
    /// Axis-aligned box `[lo, hi]` in any dimension.
    Rectangle { lo: Vec<f64>, hi: Vec<f64> },
    /// Simple polygon in the plane, vertices in order.
    Polygon { vertices: Vec<[f64; 2]> },
}

impl Region {
    pub fn unit_square() -> Self {
        Region::Rectangle { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Region::Rectangle { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return Err(input_err!("rectangle bounds must be non-empty and of equal length"));
                }
                if lo.iter().zip(hi).any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
                    return Err(input_err!("rectangle needs finite bounds with lo < hi"));
                }
            }
            Region::Polygon { vertices } => {
                if vertices.len() < 3 {
                    return Err(input_err!("a polygon needs at least 3 vertices"));
                }
                if vertices.iter().flatten().any(|x| !x.is_finite()) {
                    return Err(input_err!("polygon vertices must be finite"));
                }
                if polygon_area(vertices).abs() <= 0.0 {
                    return Err(input_err!("polygon has zero area"));
                }
            }
        }
        Ok(())
    }

    fn dim(&self) -> usize {
        match self {
            Region::Rectangle { lo, .. } => lo.len(),
            Region::Polygon { .. } => 2,
        }
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Region::Rectangle { lo, hi } => (lo.clone(), hi.clone()),
            Region::Polygon { vertices } => {
                let mut lo = vec![f64::INFINITY; 2];
                let mut hi = vec![f64::NEG_INFINITY; 2];
                for v in vertices {
                    for k in 0..2 {
                        lo[k] = lo[k].min(v[k]);
                        hi[k] = hi[k].max(v[k]);
                    }
                }
                (lo, hi)
            }
        }
    }

    fn contains(&self, p: &[f64]) -> bool {
        match self {
            Region::Rectangle { lo, hi } => p.iter().zip(lo.iter().zip(hi)).all(|(x, (a, b))| a <= x && x <= b),
            Region::Polygon { vertices } => point_in_polygon(p[0], p[1], vertices),
        }
    }
}

fn polygon_area(v: &[[f64; 2]]) -> f64 {
    let mut a = 0.0;
    for i in 0..v.len() {
        let j = (i + 1) % v.len();
        a += v[i][0] * v[j][1] - v[j][0] * v[i][1];
    }
    0.5 * a
}

// Even-odd ray casting.
fn point_in_polygon(x: f64, y: f64, v: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let mut j = v.len() - 1;
    for i in 0..v.len() {
        let (xi, yi) = (v[i][0], v[i][1]);
        let (xj, yj) = (v[j][0], v[j][1]);
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Unnormalized sampling density on a region.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Density {
    /// `g(s) ∝ exp(slope · s)`.
    ExpLinear { slope: Vec<f64> },
    /// `g(s) ∝ floor + exp(-||s - center||² / (2 scale²))`.
    GaussianBump { center: Vec<f64>, scale: f64, floor: f64 },
}

impl Density {
    /// Density value at `p` (unnormalized).
    pub fn value(&self, p: &[f64]) -> f64 {
        match self {
            Density::ExpLinear { slope } => libm::exp(slope.iter().zip(p).map(|(a, x)| a * x).sum()),
            Density::GaussianBump { center, scale, floor } => {
                let r2: f64 = center.iter().zip(p).map(|(c, x)| (x - c) * (x - c)).sum();
                floor + libm::exp(-r2 / (2.0 * scale * scale))
            }
        }
    }

    fn sup_over_box(&self, lo: &[f64], hi: &[f64]) -> f64 {
        match self {
            Density::ExpLinear { slope } => {
                let e: f64 = slope
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(a, (l, h))| (a * l).max(a * h))
                    .sum();
                libm::exp(e)
            }
            Density::GaussianBump { floor, .. } => floor + 1.0,
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        match self {
            Density::ExpLinear { slope } => {
                if slope.len() != d || slope.iter().any(|x| !x.is_finite()) {
                    return Err(input_err!("exp-linear density needs {d} finite slopes"));
                }
            }
            Density::GaussianBump { center, scale, floor } => {
                if center.len() != d || !(*scale > 0.0) || !(*floor >= 0.0) {
                    return Err(input_err!(
                        "gaussian bump density needs a {d}-dimensional center, scale > 0 and floor >= 0"
                    ));
                }
            }
        }
        Ok(())
    }
}

/// How synthetic locations are generated.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DesignKind {
    /// Midpoint grid on `[0, 1]`.
    Regular1d,
    /// Uniform draws on a rectangle.
    UniformRectangle { lo: Vec<f64>, hi: Vec<f64> },
    /// Uniform draws inside a planar polygon.
    UniformPolygon { vertices: Vec<[f64; 2]> },
    /// Draws from a density restricted to a region (rectangle or polygon).
    DensityWeighted { region: Region, density: Density },
}

/// Recipe for a synthetic design.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DesignSpec {
    pub kind: DesignKind,
    pub n: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub seed: u64,
}

/// Draws the locations described by `spec`. Deterministic given the seed.
pub fn sample_design(spec: &DesignSpec) -> Result<SpatialDesign> {
    if spec.n < 2 {
        return Err(input_err!("a design needs at least 2 locations, got {}", spec.n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match &spec.kind {
        DesignKind::Regular1d => SpatialDesign::regular_1d(spec.n),
        DesignKind::UniformRectangle { lo, hi } => {
            let region = Region::Rectangle { lo: lo.clone(), hi: hi.clone() };
            region.validate()?;
            sample_region(&region, None, spec.n, &mut rng)
        }
        DesignKind::UniformPolygon { vertices } => {
            let region = Region::Polygon { vertices: vertices.clone() };
            region.validate()?;
            sample_region(&region, None, spec.n, &mut rng)
        }
        DesignKind::DensityWeighted { region, density } => {
            region.validate()?;
            density.validate(region.dim())?;
            sample_region(region, Some(density), spec.n, &mut rng)
        }
    }
}

fn sample_region(
    region: &Region,
    density: Option<&Density>,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SpatialDesign> {
    let d = region.dim();
    let (lo, hi) = region.bounds();
    let sup = density.map(|g| g.sup_over_box(&lo, &hi));
    let mut flat = Vec::with_capacity(n * d);
    let mut p = vec![0.0; d];
    let mut total_proposals: u64 = 0;
    for _ in 0..n {
        let mut tries: u64 = 0;
        loop {
            if tries >= MAX_PROPOSALS_PER_POINT {
                let accepted = (flat.len() / d) as f64;
                return Err(ScpcError::Sampling {
                    proposals: tries,
                    acceptance_rate: accepted / (total_proposals + tries) as f64,
                });
            }
            tries += 1;
            for k in 0..d {
                p[k] = lo[k] + (hi[k] - lo[k]) * rng.random::<f64>();
            }
            if !region.contains(&p) {
                continue;
            }
            if let (Some(g), Some(sup)) = (density, sup) {
                let u: f64 = rng.random();
                if u * sup > g.value(&p) {
                    continue;
                }
            }
            break;
        }
        total_proposals += tries;
        flat.extend_from_slice(&p);
    }
    SpatialDesign::from_flat(flat, d)
}

/// Adds i.i.d. `U(-delta, delta)` errors to every coordinate.
pub fn perturb_locations(design: &SpatialDesign, delta: f64, seed: u64) -> Result<SpatialDesign> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(input_err!("perturbation half-width must be finite and >= 0, got {delta}"));
    }
    if delta == 0.0 {
        return Ok(design.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    design.map_points(|src, dst| {
        for (s, t) in src.iter().zip(dst.iter_mut()) {
            *t = s + delta * (2.0 * rng.random::<f64>() - 1.0);
        }
    })
}

/// Half-width of the location errors used in the measurement-error
/// experiments: `0.0375 · H` with `H` the side of the smallest enclosing
/// square.
pub fn location_error_halfwidth(design: &SpatialDesign) -> f64 {
    LOCATION_ERROR_FRACTION * design.enclosing_side()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distances_on_a_line_and_a_triangle() {
        let line = SpatialDesign::from_points(&[[0.0], [1.0]]).unwrap();
        assert_eq!(line.pairwise_distances(), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let tri = SpatialDesign::from_points(&[[0.0, 0.0], [3.0, 4.0]]).unwrap();
        assert_eq!(tri.pairwise_distances()[(0, 1)], 5.0);
    }

    #[test]
    fn four_point_grid_distances() {
        let d = SpatialDesign::from_points(&[[0.0], [1.0 / 3.0], [2.0 / 3.0], [1.0]]).unwrap();
        let m = d.pairwise_distances();
        assert!((m[(0, 1)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((m[(0, 2)] - 2.0 / 3.0).abs() < 1e-15);
        assert!((m[(0, 3)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn non_finite_coordinates_rejected() {
        let err = SpatialDesign::from_points(&[[0.0, f64::NAN], [1.0, 1.0]]).unwrap_err();
        assert!(err.is_input());
        assert!(SpatialDesign::from_points(&[[0.0]]).is_err());
    }

    #[test]
    fn regular_grid_is_midpoints() {
        let spec = DesignSpec { kind: DesignKind::Regular1d, n: 4, seed: 0 };
        let d = sample_design(&spec).unwrap();
        assert_eq!(d.coords(), &[0.125, 0.375, 0.625, 0.875]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = DesignSpec {
            kind: DesignKind::UniformRectangle { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] },
            n: 500,
            seed: 1,
        };
        assert_eq!(sample_design(&spec).unwrap(), sample_design(&spec).unwrap());
    }

    #[test]
    fn polygon_samples_stay_inside() {
        let tri = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let spec = DesignSpec { kind: DesignKind::UniformPolygon { vertices: tri }, n: 300, seed: 3 };
        let d = sample_design(&spec).unwrap();
        for i in 0..d.n() {
            let p = d.point(i);
            assert!(p[0] >= 0.0 && p[1] >= 0.0 && p[0] + p[1] <= 1.0);
        }
    }

    #[test]
    fn degenerate_density_reports_acceptance_rate() {
        // essentially zero mass away from a far-off bump
        let spec = DesignSpec {
            kind: DesignKind::DensityWeighted {
                region: Region::unit_square(),
                density: Density::GaussianBump { center: vec![50.0, 50.0], scale: 0.01, floor: 0.0 },
            },
            n: 2,
            seed: 0,
        };
        match sample_design(&spec) {
            Err(ScpcError::Sampling { proposals, acceptance_rate }) => {
                assert_eq!(proposals, MAX_PROPOSALS_PER_POINT);
                assert_eq!(acceptance_rate, 0.0);
            }
            other => panic!("expected sampling error, got {other:?}"),
        }
    }

    #[test]
    fn perturbation_respects_support() {
        let spec = DesignSpec { kind: DesignKind::UniformRectangle { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] }, n: 200, seed: 9 };
        let d = sample_design(&spec).unwrap();
        assert_eq!(perturb_locations(&d, 0.0, 1).unwrap(), d);
        let delta = 0.05;
        let p = perturb_locations(&d, delta, 1).unwrap();
        for (a, b) in d.coords().iter().zip(p.coords()) {
            assert!((a - b).abs() <= delta);
        }
        assert!(perturb_locations(&d, -1.0, 1).is_err());
    }

    #[test]
    fn unit_square_error_halfwidth() {
        let d = SpatialDesign::from_points(&[[0.0, 0.0], [1.0, 1.0], [0.5, 0.2]]).unwrap();
        assert!((location_error_halfwidth(&d) - 0.0375).abs() < 1e-15);
    }
}
