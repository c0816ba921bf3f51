//! Spatial correlation principal components (SCPC) inference.
//!
//! Confidence intervals for the mean (and, through score adapters, for
//! regression coefficients) of spatially correlated observations. The
//! standard error is built from the leading principal components of a
//! worst-case benchmark covariance evaluated at the sample locations, and the
//! critical value is chosen so that the test has the nominal size for every
//! member of the benchmark family that is less persistent than the calibrated
//! one.
//!
//! The crate is `no_std` (it needs `alloc`). Input/output, the command line
//! tool and the Monte Carlo harness live in the companion `scpc` crate.
//!
//! Module map:
//!
//! - [`geometry`]: location containers, distances, synthetic design samplers.
//! - [`covariance`]: correlation kernels, benchmark matrices, average pairwise
//!   correlation and calibration of the persistence parameter.
//! - [`eigen`]: principal-component weights (exact and Nyström).
//! - [`quadrature`]: Gauss–Legendre rules and the one-dimensional integral for
//!   `P(Z0² ≥ Σ ηᵢ Zᵢ²)`.
//! - [`rejection`]: exact rejection probabilities, their supremum over the
//!   benchmark family, and critical values.
//! - [`scpc`]: the estimator pipeline and the regression score adapter.
//! - [`robustness`]: eigenvalue-majorization size certificates.
//! - [`ftest`]: the multivariate (Hotelling T²) extension.
#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod covariance;
pub mod eigen;
mod error;
pub mod ftest;
pub mod geometry;
pub mod linalg;
pub mod quadrature;
pub mod rejection;
pub mod robustness;
mod root;
pub mod scpc;

pub use nalgebra;

pub use crate::covariance::{calibrate_c0, CovarianceKernel, KernelFamily};
pub use crate::eigen::{nystrom_pc_weights, pc_weights, BasisSource, PCBasis};
pub use crate::error::{Result, ScpcError};
pub use crate::geometry::{DesignKind, DesignSpec, SpatialDesign};
pub use crate::quadrature::bs_probability;
pub use crate::rejection::{critical_value, CvOptions, RejectionCurve, SizeEngine};
pub use crate::scpc::{regression_scores, scpc_interval, RegressionInput, ScpcOptions, ScpcProcedure, ScpcResult};
pub use crate::ftest::{ftest_critical_value, hotelling_t2, select_q_volume, FtestOptions, FtestPlan, HotellingResult};
pub use crate::robustness::{matern_robust_range, nu_margins, RobustnessOptions, RobustnessReport};
