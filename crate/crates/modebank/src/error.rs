//! Error type shared across the crate.

use thiserror::Error;

/// Errors raised by model construction, synthesis and runtime evaluation.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Matrix dimensions inconsistent with the declared system dimensions.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A 1-based mode index outside 1..=n_modes.
    #[error("mode index {index} out of range 1..={n_modes}")]
    ModeIndexOutOfRange { index: usize, n_modes: usize },

    /// A linear solve hit a numerically singular matrix.
    #[error("near-singular solve: {0}")]
    NearSingular(String),

    /// Spectral radius at or above the stability margin.
    #[error("unstable matrix: spectral radius {rho}")]
    Unstable { rho: f64 },

    /// Invalid scalar parameter (out of its documented domain).
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Denominator roots closer than the resolvable separation.
    #[error("repeated denominator roots: |λ_{a} - λ_{b}| < 1e-9")]
    RepeatedRoots { a: usize, b: usize },

    /// λ_max outside (0, 1): the geometric decay argument degenerates.
    #[error("degenerate decay rate λ_max = {0}")]
    DegenerateRate(f64),

    /// Some synthesis precondition failed (degree/rank/stability report inside).
    #[error("synthesis infeasible for pair ({controller},{target}): {reason}")]
    SynthesisInfeasible {
        controller: usize,
        target: usize,
        reason: String,
    },

    /// Every unmatched closed loop is unstable; the steady-gain constraint set
    /// is empty. Legal but degenerate, surfaced to the caller.
    #[error("no stable unmatched mode for pair ({controller},{target})")]
    NoStableUnmatched { controller: usize, target: usize },

    /// The backend did not converge, or a returned point failed the
    /// independent post-solve violation check.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// A solved filter failed its post-solve certificate re-check.
    #[error("certification failed for pair ({controller},{target}): {reason}")]
    CertificationFailed {
        controller: usize,
        target: usize,
        reason: String,
    },

    /// Ill-formed conic program (undeclared variable, asymmetric PSD entry, ...).
    #[error("malformed program: {0}")]
    MalformedProgram(String),

    /// File format / serialization problems for bank, params and trace files.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
