use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = ScpcError> = core::result::Result<T, E>;

/// Everything that can go wrong between raw inputs and a finished interval.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScpcError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error(
        "rejection sampling gave up after {proposals} proposals for one point \
         (acceptance rate {acceptance_rate:.3e})"
    )]
    Sampling { proposals: u64, acceptance_rate: f64 },

    #[error(
        "cannot calibrate to average correlation {rho0}: attainable range is \
         ({min:.6e}, {max:.6e})"
    )]
    Calibration { rho0: f64, min: f64, max: f64 },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("root finding failed: {0}")]
    Solver(String),

    #[error("degenerate statistic: {0}")]
    Degenerate(String),

    #[error("rank deficiency: {0}")]
    Rank(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<ScpcError>,
    },
}

impl ScpcError {
    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn at(self, stage: impl Into<String>) -> Self {
        ScpcError::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping stage labels.
    pub fn root(&self) -> &ScpcError {
        match self {
            ScpcError::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for errors caused by malformed user input rather than numerics.
    pub fn is_input(&self) -> bool {
        matches!(self.root(), ScpcError::Input(_) | ScpcError::Rank(_))
    }
}

macro_rules! input_err {
    ($($arg:tt)*) => {
        $crate::error::ScpcError::Input(alloc::format!($($arg)*))
    };
}

macro_rules! numeric_err {
    ($($arg:tt)*) => {
        $crate::error::ScpcError::Numeric(alloc::format!($($arg)*))
    };
}

pub(crate) use input_err;
pub(crate) use numeric_err;
