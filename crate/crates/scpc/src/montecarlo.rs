//! Monte Carlo experiments: Gaussian fields on a design, null rejection
//! frequencies and interval lengths for the SCPC procedure and the
//! comparison methods, with optional heteroskedasticity and location error.
//!
//! Replication `k` draws from stream `k` of a ChaCha8 generator seeded with
//! the experiment seed, so results do not depend on the number of threads.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use scpc_core::geometry::{location_error_halfwidth, perturb_locations, sample_design};
use scpc_core::{
    calibrate_c0, DesignSpec, KernelFamily, Result, ScpcError, ScpcOptions, ScpcProcedure, SpatialDesign,
};
use serde::{Deserialize, Serialize};

use crate::competitors::{kernel_covariance, BartlettOracle, ClusterTest, FourierTest, Kvb, QuadraticFormTest, TestOutcome};

/// Diagonal jitter multiples (of the largest diagonal entry) tried in turn
/// when factoring a covariance matrix.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

/// Lower-triangular `L` with `LL' = A` for symmetric positive semidefinite
/// `A`. Pivots within `tol` of zero give zero columns, so exactly
/// duplicated rows of `A` give identical rows of `L`.
fn semidefinite_cholesky(a: &DMatrix<f64>, tol: f64) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol {
            return None;
        }
        if d <= tol {
            continue;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / d;
        }
    }
    Some(l)
}

/// Draws from `N(0, Σ)` through a fixed factor of `Σ`.
#[derive(Debug, Clone)]
pub struct FieldSampler {
    factor: DMatrix<f64>,
    /// Jitter multiple that was needed.
    pub jitter: f64,
}

impl FieldSampler {
    pub fn new(sigma: &DMatrix<f64>) -> Result<Self> {
        let n = sigma.nrows();
        if sigma.ncols() != n || n == 0 {
            return Err(ScpcError::Input(format!("covariance must be square and non-empty, got {:?}", sigma.shape())));
        }
        let scale = (0..n).map(|i| sigma[(i, i)].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let sym = (sigma + sigma.transpose()) * 0.5;
        let tol = n as f64 * f64::EPSILON * scale;
        for jit in JITTER_LADDER {
            let mut a = sym.clone();
            for i in 0..n {
                a[(i, i)] += jit * scale;
            }
            if let Some(factor) = semidefinite_cholesky(&a, tol) {
                return Ok(FieldSampler { factor, jitter: jit });
            }
        }
        Err(ScpcError::Numeric(format!(
            "covariance matrix is not positive semidefinite even with diagonal jitter {:.0e}",
            JITTER_LADDER[JITTER_LADDER.len() - 1]
        )))
    }

    pub fn n(&self) -> usize {
        self.factor.nrows()
    }

    /// `L z` with `z` standard normal from `rng`.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let z = DVector::from_fn(self.n(), |_, _| StandardNormal.sample(rng));
        &self.factor * z
    }
}

/// Generator for replication `rep`: stream `rep` of the ChaCha8 seed.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// `reps × n` matrix of draws from `N(0, Σ)`; row `k` comes from stream `k`.
pub fn simulate_field(sigma: &DMatrix<f64>, reps: usize, seed: u64) -> Result<DMatrix<f64>> {
    let sampler = FieldSampler::new(sigma)?;
    let rows: Vec<DVector<f64>> =
        (0..reps).into_par_iter().map(|k| sampler.draw(&mut replication_rng(seed, k as u64))).collect();
    let n = sampler.n();
    Ok(DMatrix::from_fn(reps, n, |k, i| rows[k][i]))
}

/// Compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Where the locations come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum DesignInput {
    Synthetic(DesignSpec),
    Points { points: Vec<Vec<f64>> },
}

impl DesignInput {
    pub fn build(&self) -> Result<SpatialDesign> {
        match self {
            DesignInput::Synthetic(spec) => sample_design(spec),
            DesignInput::Points { points } => SpatialDesign::from_points(points),
        }
    }
}

/// Persistence of the data-generating covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Persistence {
    C { c: f64 },
    /// Calibrated to this average pairwise correlation on the true design.
    Rho { rho: f64 },
    Iid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    #[serde(default = "default_family")]
    pub family: KernelFamily,
    pub persistence: Persistence,
}

fn default_family() -> KernelFamily {
    KernelFamily::Exponential
}

impl Truth {
    pub fn covariance(&self, design: &SpatialDesign) -> Result<DMatrix<f64>> {
        match self.persistence {
            Persistence::Iid => Ok(DMatrix::identity(design.n(), design.n())),
            Persistence::C { c } => kernel_covariance(design, self.family, c),
            Persistence::Rho { rho } => kernel_covariance(design, self.family, calibrate_c0(design, self.family, rho)?),
        }
    }
}

/// Inference method under study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "name")]
pub enum Method {
    Scpc {
        rho0: f64,
        #[serde(default)]
        q_max: Option<usize>,
    },
    /// Bartlett kernel, normal critical value, bandwidth tuned to the truth.
    BartlettOracle,
    Kvb,
    ImCluster { q: usize },
    SunKim { q: usize },
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Scpc { .. } => "scpc".into(),
            Method::BartlettOracle => "bartlett-oracle".into(),
            Method::Kvb => "kvb".into(),
            Method::ImCluster { q } => format!("im-cluster({q})"),
            Method::SunKim { q } => format!("sunkim({q})"),
        }
    }
}

/// Multiplicative heteroskedasticity `h(s)` with `log h` linear along one
/// axis, from 0 to `log_ratio` across the bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLinearProfile {
    pub axis: usize,
    pub increasing: bool,
    #[serde(default = "default_log_ratio")]
    pub log_ratio: f64,
}

fn default_log_ratio() -> f64 {
    3f64.ln()
}

impl LogLinearProfile {
    pub fn multipliers(&self, design: &SpatialDesign) -> Result<Vec<f64>> {
        if self.axis >= design.dim() {
            return Err(ScpcError::Input(format!("axis {} out of range for {}-d locations", self.axis, design.dim())));
        }
        let (lo, hi) = design.bounding_box();
        let (a, b) = (lo[self.axis], hi[self.axis]);
        Ok((0..design.n())
            .map(|i| {
                let t = if b > a { (design.point(i)[self.axis] - a) / (b - a) } else { 0.0 };
                let t = if self.increasing { t } else { 1.0 - t };
                (self.log_ratio * t).exp()
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Heteroskedasticity {
    LogLinear(LogLinearProfile),
    /// Both directions along both axes of a planar design; the report
    /// carries the worst of the four.
    AllFour {
        #[serde(default = "default_log_ratio")]
        log_ratio: f64,
    },
}

impl Heteroskedasticity {
    pub fn profiles(&self) -> Vec<LogLinearProfile> {
        match *self {
            Heteroskedasticity::LogLinear(p) => vec![p],
            Heteroskedasticity::AllFour { log_ratio } => [(0, true), (0, false), (1, true), (1, false)]
                .into_iter()
                .map(|(axis, increasing)| LogLinearProfile { axis, increasing, log_ratio })
                .collect(),
        }
    }
}

/// The method sees `s + e` with `e` i.i.d. uniform on `[-δ, δ]` per
/// coordinate, drawn once per experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocationError {
    /// `None` means `0.0375` times the side of the enclosing square.
    #[serde(default)]
    pub halfwidth: Option<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

pub const DEFAULT_SEED: u64 = 20210201;

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub design: DesignInput,
    pub truth: Truth,
    pub method: Method,
    #[serde(default)]
    pub heteroskedasticity: Option<Heteroskedasticity>,
    #[serde(default)]
    pub location_error: Option<LocationError>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub replications: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Keep the per-replication outcomes in the report.
    #[serde(default)]
    pub keep_records: bool,
}

/// One replication's outcome; `None` fields mean the method failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub rep: usize,
    pub reject: Option<bool>,
    pub length: Option<f64>,
}

/// Aggregates for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub label: String,
    /// Replications in which the method produced a decision.
    pub valid: usize,
    pub rejections: usize,
    pub rejection_rate: f64,
    /// `√(p̂(1-p̂)/valid)`.
    pub mc_se: f64,
    pub mean_length: f64,
    pub length_se: f64,
    pub errors: usize,
    pub first_error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub records: Option<Vec<Record>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub method: String,
    pub n: usize,
    pub alpha: f64,
    pub replications: usize,
    pub seed: u64,
    /// Scenario with the highest rejection frequency.
    pub rejection_rate: f64,
    pub mc_se: f64,
    pub mean_length: f64,
    pub scenarios: Vec<ScenarioReport>,
    /// Method-specific settings chosen during preparation (bandwidth, q, cv).
    pub method_details: serde_json::Value,
}

/// A method ready to be applied to outcome vectors on a fixed design.
#[derive(Debug, Clone)]
pub enum PreparedMethod {
    Scpc(Box<ScpcProcedure>),
    Quadratic(QuadraticFormTest),
    Cluster(ClusterTest),
}

impl PreparedMethod {
    pub fn new(method: &Method, design: &SpatialDesign, truth_sigma: &DMatrix<f64>, alpha: f64) -> Result<(Self, serde_json::Value)> {
        Ok(match method {
            Method::Scpc { rho0, q_max } => {
                let opts = ScpcOptions { alpha, q_max: *q_max, ..ScpcOptions::default() };
                let p = ScpcProcedure::new(design, *rho0, &opts)?;
                let details = serde_json::json!({ "c0": p.c0, "q": p.q(), "cv": p.cv() });
                (PreparedMethod::Scpc(Box::new(p)), details)
            }
            Method::BartlettOracle => {
                let b = BartlettOracle::new(design, truth_sigma, alpha)?;
                let details = serde_json::json!({ "bandwidth": b.bandwidth, "exact_size": b.size, "cv": b.test.cv() });
                (PreparedMethod::Quadratic(b.test), details)
            }
            Method::Kvb => {
                let k = Kvb::new(design, alpha)?;
                let details = serde_json::json!({ "bandwidth": k.bandwidth, "cv": k.test.cv() });
                (PreparedMethod::Quadratic(k.test), details)
            }
            Method::ImCluster { q } => {
                let c = ClusterTest::new(design, *q, alpha)?;
                let details = serde_json::json!({ "q": q, "cv": c.cv });
                (PreparedMethod::Cluster(c), details)
            }
            Method::SunKim { q } => {
                let f = FourierTest::new(design, *q, alpha)?;
                let details = serde_json::json!({ "q": q, "cv": f.test.cv() });
                (PreparedMethod::Quadratic(f.test), details)
            }
        })
    }

    pub fn apply(&self, y: &DVector<f64>, mu0: f64) -> Result<TestOutcome> {
        match self {
            PreparedMethod::Scpc(p) => {
                let r = p.interval(y, mu0)?;
                Ok(TestOutcome { reject: r.t_stat.abs() > r.cv, length: r.ci.1 - r.ci.0 })
            }
            PreparedMethod::Quadratic(t) => check(t.apply(y, mu0)),
            PreparedMethod::Cluster(t) => check(t.apply(y, mu0)),
        }
    }
}

fn check(o: TestOutcome) -> Result<TestOutcome> {
    if o.length.is_finite() && o.length > 0.0 {
        Ok(o)
    } else {
        Err(ScpcError::Degenerate("the variance estimate is zero".into()))
    }
}

fn run_scenario(
    label: String,
    sampler: &FieldSampler,
    h: Option<&[f64]>,
    method: &PreparedMethod,
    reps: usize,
    seed: u64,
    keep: bool,
) -> ScenarioReport {
    let outcomes: Vec<Result<TestOutcome>> = (0..reps)
        .into_par_iter()
        .map(|k| {
            let mut y = sampler.draw(&mut replication_rng(seed, k as u64));
            if let Some(h) = h {
                y.iter_mut().zip(h).for_each(|(v, m)| *v *= m);
            }
            method.apply(&y, 0.0)
        })
        .collect();
    let mut rejections = 0usize;
    let mut valid = 0usize;
    let mut errors = 0usize;
    let mut first_error = None;
    let (mut s1, mut s2) = (KahanSum::default(), KahanSum::default());
    for o in &outcomes {
        match o {
            Ok(t) => {
                valid += 1;
                rejections += usize::from(t.reject);
                s1.add(t.length);
                s2.add(t.length * t.length);
            }
            Err(e) => {
                errors += 1;
                first_error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    let v = valid.max(1) as f64;
    let p = rejections as f64 / v;
    let mean = s1.value() / v;
    let var = (s2.value() / v - mean * mean).max(0.0);
    let records = keep.then(|| {
        outcomes
            .iter()
            .enumerate()
            .map(|(rep, o)| Record {
                rep,
                reject: o.as_ref().ok().map(|t| t.reject),
                length: o.as_ref().ok().map(|t| t.length),
            })
            .collect()
    });
    ScenarioReport {
        label,
        valid,
        rejections,
        rejection_rate: p,
        mc_se: (p * (1.0 - p) / v).sqrt(),
        mean_length: mean,
        length_se: (var / v).sqrt(),
        errors,
        first_error,
        records,
    }
}

/// Runs the experiment described by `config`.
pub fn run_experiment(config: &SimulationConfig) -> Result<SimulationReport> {
    if config.replications == 0 {
        return Err(ScpcError::Input("replications must be at least 1".into()));
    }
    if !(config.alpha > 0.0 && config.alpha < 0.5) {
        return Err(ScpcError::Input(format!("alpha must lie in (0, 0.5), got {}", config.alpha)));
    }
    let design = config.design.build().map_err(|e| e.at("design"))?;
    let sigma = config.truth.covariance(&design).map_err(|e| e.at("truth covariance"))?;
    let sampler = FieldSampler::new(&sigma).map_err(|e| e.at("field factorization"))?;
    let seen = match config.location_error {
        Some(le) => {
            let delta = le.halfwidth.unwrap_or_else(|| location_error_halfwidth(&design));
            perturb_locations(&design, delta, le.seed)?
        }
        None => design.clone(),
    };
    let (method, details) =
        PreparedMethod::new(&config.method, &seen, &sigma, config.alpha).map_err(|e| e.at("method setup"))?;
    let mut scenarios = Vec::new();
    match &config.heteroskedasticity {
        None => scenarios.push(run_scenario(
            "homoskedastic".into(),
            &sampler,
            None,
            &method,
            config.replications,
            config.seed,
            config.keep_records,
        )),
        Some(h) => {
            for p in h.profiles() {
                let mult = p.multipliers(&design)?;
                let label = format!("log-linear axis {} {}", p.axis, if p.increasing { "increasing" } else { "decreasing" });
                scenarios.push(run_scenario(
                    label,
                    &sampler,
                    Some(&mult),
                    &method,
                    config.replications,
                    config.seed,
                    config.keep_records,
                ));
            }
        }
    }
    let worst = scenarios
        .iter()
        .enumerate()
        .fold(0, |w, (i, s)| if s.rejection_rate > scenarios[w].rejection_rate { i } else { w });
    Ok(SimulationReport {
        method: config.method.label(),
        n: design.n(),
        alpha: config.alpha,
        replications: config.replications,
        seed: config.seed,
        rejection_rate: scenarios[worst].rejection_rate,
        mc_se: scenarios[worst].mc_se,
        mean_length: scenarios[worst].mean_length,
        scenarios,
        method_details: details,
    })
}
