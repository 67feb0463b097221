use thiserror::Error;

/// Errors produced by the simulation and fitting routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unsupported unit conversion from {from} to {to}")]
    UnsupportedConversion { from: String, to: String },

    #[error("singular complex detuning: {0} vanishes (gamma = 0 and detuning = 0)")]
    SingularDetuning(&'static str),

    #[error("grid too coarse: {points:.1} time points across the control FWHM, need at least {required}")]
    Resolution { points: f64, required: usize },

    #[error("input shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("fit diverged: {0}")]
    FitDiverged(String),

    #[error("degenerate fit problem: {0}")]
    FitDegenerate(String),

    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
