use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("eigendecomposition failed: {0}")]
    Diagonalization(String),

    #[error("pulse support {support_ns} ns does not fit in a {slot_ns} ns clock slot")]
    PulseTooWide { support_ns: f64, slot_ns: f64 },

    #[error("non-finite drive amplitude")]
    NonFiniteDrive,

    #[error("initial state not normalized (norm {norm})")]
    Unnormalized { norm: f64 },

    #[error("sequence clock {sequence_ghz} GHz does not match propagators built for {propagators_ghz} GHz")]
    ClockMismatch { sequence_ghz: f64, propagators_ghz: f64 },

    #[error("integration step {dt_ns} ns too large: {reason}")]
    StepTooLarge { dt_ns: f64, reason: String },

    #[error("no fidelity maximum bracketed in [{lo}, {hi}] rad")]
    NoBracket { lo: f64, hi: f64 },

    #[error("sequence contains no pulses")]
    EmptySequence,

    #[error("threshold interpolation degenerate: both endpoints gave theta = {theta}")]
    DegenerateInterpolation { theta: f64 },

    #[error("no sequence matched theta = {desired} within {tol} rad after {steps} length steps")]
    LengthSearchExhausted { desired: f64, tol: f64, steps: usize },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
