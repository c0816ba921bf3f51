//! Companion crate to `scpc-core`: parallel drivers, the Monte Carlo
//! harness with comparison methods, CSV/JSON input and output, and the
//! `scpc` command line tool.

pub mod cli;
pub mod competitors;
pub mod io;
pub mod montecarlo;
pub mod parallel;

pub use scpc_core;
pub use scpc_core::{
    calibrate_c0, matern_robust_range, regression_scores, scpc_interval, KernelFamily, ScpcError, ScpcOptions,
    ScpcResult, SpatialDesign,
};
