use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point {index} lies at torus distance {distance} from the anchor, outside the lifting window {window}")]
    LiftAmbiguous {
        index: usize,
        distance: f64,
        window: f64,
    },

    #[error("ball of radius {radius} does not embed in the torus (need 2r < 1)")]
    BallTooLarge { radius: f64 },

    #[error("quadrature did not converge after {evaluations} evaluations (estimate {estimate}, error {error})")]
    QuadratureNotConverged {
        evaluations: usize,
        estimate: f64,
        error: f64,
    },

    #[error("target mass {target} exceeds the largest admissible ball mass {reachable}")]
    TargetUnreachable { target: f64, reachable: f64 },

    #[error("tuple is degenerate (Gram condition number {condition:e})")]
    Degenerate { condition: f64 },

    #[error("circumradius {radius} exceeds the admissible bound {bound}")]
    CircumradiusTooLarge { radius: f64, bound: f64 },

    #[error("rejection sampler exceeded {proposals} proposals")]
    SamplerStuck { proposals: u64 },

    #[error("measure has total mass {mass}, expected a probability measure")]
    NotAProbability { mass: f64 },

    #[error("need {needed} neighbours but only {available} are available")]
    NotEnoughPoints { needed: usize, available: usize },

    #[error("functional arity {arity} is not supported here")]
    ArityUnsupported { arity: usize },

    #[error("stabilization region has mass {mass} >= 1")]
    StabilizationTooLarge { mass: f64 },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
