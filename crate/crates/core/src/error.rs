use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error in field `{field}`: {message}")]
    Parse { field: String, message: String },

    #[error("ball (center {center:?}, radius {radius}) does not meet the domain")]
    DomainCoverage { center: Vec<f64>, radius: f64 },

    #[error("non-finite integrand value at {point:?}")]
    Evaluation { point: Vec<f64> },

    #[error("potential is invalid at {point:?}: value {value}")]
    PotentialValidity { point: Vec<f64>, value: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("critical radius exceeds bracket upper end {r_max} at {points} point(s), first at {first:?}")]
    BracketTooSmall {
        r_max: f64,
        points: usize,
        first: Vec<f64>,
    },

    #[error("critical radius below bracket lower end {r_min} at {point:?}")]
    BracketTooLarge { r_min: f64, point: Vec<f64> },

    #[error("dimension {dim} not supported: {reason}")]
    Dimension { dim: usize, reason: String },

    #[error("Shen parameter fit failed: worst pair {x:?} -> {y:?} needs B0 = {required_b0:.3e}")]
    FitFailure {
        x: Vec<f64>,
        y: Vec<f64>,
        required_b0: f64,
    },

    #[error("metric error: nonpositive critical radius {value} at node {node}")]
    Metric { node: usize, value: f64 },

    #[error("weight is invalid at {point:?}: {reason}")]
    WeightValidity { point: Vec<f64>, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular evaluation at coincident points")]
    Singularity,

    #[error("quadrature did not reach tolerance {tol:e} (estimate {estimate:e}, error {error:e})")]
    Tolerance { tol: f64, estimate: f64, error: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
