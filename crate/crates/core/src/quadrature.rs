//! Gauss–Legendre rules and the one-dimensional integral for
//! `P(Z0² ≥ Σ ηᵢ Zᵢ²)` with independent standard normal `Zᵢ`.
//!
//! The integral is
//!
//! ```text
//! P = (1/π) ∫₀¹ x^{(q-1)/2} / sqrt((1-x) ∏ (x + ηᵢ)) dx.
//! ```
//!
//! It is split at `x = 1/2`. On the upper half the substitution
//! `x = 1 - u²` removes the inverse square root at `x = 1`; on the lower
//! half `x = v²` removes the corner at `x = 0` that appears when some `ηᵢ`
//! vanish. Both pieces are written as products of factors in `[0, 1]`, so
//! nothing overflows for large `q` or large `η`.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_PI, FRAC_1_SQRT_2, PI};

use crate::error::{input_err, Result};

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes the rule by Newton iteration on the Legendre polynomial.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "a quadrature rule needs at least one node");
        let mut nodes = alloc::vec![0.0; n];
        let mut weights = alloc::vec![0.0; n];
        let nf = n as f64;
        for i in 0..(n + 1) / 2 {
            let mut x = libm::cos(PI * (i as f64 + 0.75) / (nf + 0.5));
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    let (_, d) = legendre_with_derivative(n, x);
                    dp = d;
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫_a^b f` with this rule on a single panel.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(mid + half * x);
        }
        half * s
    }

    /// `∫_a^b f` on `panels` equal panels.
    pub fn integrate_composite(&self, a: f64, b: f64, panels: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|k| self.integrate(a + k as f64 * h, a + (k + 1) as f64 * h, &mut f))
            .sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Nodes per panel of the main rule.
pub const BS_ORDER: usize = 64;
/// Nodes per panel of the companion rule used for the error estimate.
pub const BS_CHECK_ORDER: usize = 32;
/// Uniform panels on the upper half.
pub const BS_PANELS: usize = 8;

/// Reusable evaluator for `P(Z0² ≥ Σ ηᵢ Zᵢ²)`.
#[derive(Debug, Clone)]
pub struct BsIntegrator {
    main: GaussLegendre,
    check: GaussLegendre,
}

impl Default for BsIntegrator {
    fn default() -> Self {
        Self::new()
    }
}

/// Probability with an error estimate (difference between two rule orders).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsValue {
    pub prob: f64,
    pub error_estimate: f64,
}

impl BsIntegrator {
    pub fn new() -> Self {
        BsIntegrator {
            main: GaussLegendre::new(BS_ORDER),
            check: GaussLegendre::new(BS_CHECK_ORDER),
        }
    }

    /// `P(Z0² ≥ Σ ηᵢ Zᵢ²)`; every `ηᵢ` must be nonnegative.
    pub fn probability(&self, eta: &[f64]) -> Result<f64> {
        validate(eta)?;
        Ok(integral(&self.main, eta).clamp(0.0, 1.0))
    }

    /// Like [`probability`](Self::probability), also returning
    /// `|P₆₄ - P₃₂|` as an accuracy indicator.
    pub fn probability_with_error(&self, eta: &[f64]) -> Result<BsValue> {
        validate(eta)?;
        let p = integral(&self.main, eta);
        let p_check = integral(&self.check, eta);
        Ok(BsValue { prob: p.clamp(0.0, 1.0), error_estimate: (p - p_check).abs() })
    }
}

/// `P(Z0² ≥ Σ ηᵢ Zᵢ²)` for independent standard normals. Builds the
/// quadrature rules on each call; use [`BsIntegrator`] in loops.
pub fn bs_probability(eta: &[f64]) -> Result<f64> {
    BsIntegrator::new().probability(eta)
}

fn validate(eta: &[f64]) -> Result<()> {
    if eta.is_empty() {
        return Err(input_err!("need at least one eta"));
    }
    if let Some((i, e)) = eta.iter().enumerate().find(|(_, e)| !(**e >= 0.0)) {
        return Err(input_err!("eta[{i}] = {e} is not a nonnegative number"));
    }
    Ok(())
}

fn integral(rule: &GaussLegendre, eta: &[f64]) -> f64 {
    // upper half: x = 1 - u², integrand 2 x^{-1/2} sqrt(∏ x/(x+η))
    let upper = rule.integrate_composite(0.0, FRAC_1_SQRT_2, BS_PANELS, |u| {
        let x = 1.0 - u * u;
        let mut prod = 1.0;
        for &e in eta {
            prod *= x / (x + e);
        }
        2.0 * libm::sqrt(prod / x)
    });

    // lower half: x = v², integrand 2 (1-v²)^{-1/2} ∏ v/sqrt(v²+η)
    let lower_f = |v: f64| {
        let v2 = v * v;
        let mut prod = 1.0;
        for &e in eta {
            prod *= v2 / (v2 + e);
        }
        2.0 * libm::sqrt(prod / (1.0 - v2))
    };
    // Geometric panels toward v = 0 resolve the transition near v ≈ sqrt(min η).
    let eta_min = eta.iter().copied().fold(f64::INFINITY, f64::min);
    let floor = if eta_min > 0.0 { 1e-3 * libm::sqrt(eta_min) } else { 0.0 }.max(1e-10);
    let mut hi = FRAC_1_SQRT_2;
    let mut lower = 0.0;
    let mut panels = 0;
    while hi > floor && panels < 64 {
        let lo = 0.5 * hi;
        lower += rule.integrate(lo, hi, lower_f);
        hi = lo;
        panels += 1;
    }
    lower += rule.integrate(0.0, hi, lower_f);

    FRAC_1_PI * (upper + lower)
}
