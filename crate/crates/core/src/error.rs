use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid quantity: {0}")]
    InvalidQuantity(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("residuals are not finite at the initial parameters")]
    BadInitialGuess,

    #[error("non-finite jacobian entry for parameter {param}")]
    NonFiniteJacobian { param: usize },

    #[error("unphysical fit: {0}")]
    UnphysicalFit(String),

    #[error("no resonance dip found: min |S21| = {min:.4}, edge level = {edge:.4}")]
    NoDipFound { min: f64, edge: f64 },

    #[error("signal is constant; nothing to fit")]
    ConstantSignal,

    #[error("Ramsey detuning unresolved: spectral peak at {peak_hz:.4e} Hz is below one cycle per span")]
    DetuningUnresolved { peak_hz: f64 },

    #[error("inconsistent punch-out: shift {shift_hz:.4e} Hz and detuning {delta_hz:.4e} Hz differ in sign")]
    InconsistentPunchout { shift_hz: f64, delta_hz: f64 },

    #[error("inconsistent dispersive shift: g^2 radicand {radicand:.4e} is negative")]
    InconsistentDispersive { radicand: f64 },

    #[error("resonance frequencies disagree: {f0_a_hz:.6e} Hz vs {f0_b_hz:.6e} Hz")]
    F0Mismatch { f0_a_hz: f64, f0_b_hz: f64 },

    #[error("power sweep failed: only {succeeded} trace(s) fitted, need at least 2")]
    SweepFailed { succeeded: usize },

    #[error("missing metadata: {0}")]
    MissingMetadata(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
