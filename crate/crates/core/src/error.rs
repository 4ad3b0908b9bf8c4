//! Crate-wide error type. Verification *outcomes* (violated inequalities, audit
//! failures) are report data, not errors; errors cover unusable inputs and
//! numerical breakdowns.

/// Alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid or missing configuration input; the message names the offending field.
    #[error("configuration error: {0}")]
    Config(String),

    /// Parameters that are individually fine but mutually contradictory.
    #[error("inconsistent parameters: {0}")]
    InconsistentParameters(String),

    /// A precondition of a closed-form bound does not hold; the message names the
    /// violated condition.
    #[error("out of regime: {0}")]
    OutOfRegime(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// The candidate contraction rate violates one of the admissibility ceilings.
    #[error("rate {c:.6e} is not admissible: {reason}")]
    InadmissibleRate { c: f64, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Rejection sampling stopped making progress; the proposal envelope does not
    /// cover the target tightly enough.
    #[error("rejection sampler envelope failure: acceptance rate {rate:.3e} below 1e-4")]
    EnvelopeFailure { rate: f64 },

    /// A simulated state stopped being finite.
    #[error("simulation blow-up: non-finite state at step {step}")]
    BlowUp { step: u64 },

    #[error("fit domain error: {0}")]
    FitDomain(String),

    #[error("step budget exceeded: ensemble needs {required} steps, budget is {budget}")]
    StepBudget { required: u64, budget: u64 },

    /// Numerical guarantee lost (quadrature error above tolerance and similar).
    #[error("numeric error: {0}")]
    Numeric(String),
}
