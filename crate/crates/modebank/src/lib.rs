//! Residual-filter banks for online mode diagnosis of discrete-time switched
//! affine systems under measurement noise and asynchronous switching.
//!
//! The pipeline, end to end:
//!
//! 1. [`system`] — switched affine plant with static output-feedback
//!    controllers, closed-loop statuses and their difference-algebraic form.
//! 2. [`synthesis`] — one residual filter per (controller, hypothesis) pair,
//!    obtained from a semidefinite program that decouples the reference from
//!    the matched residual, pins the unmatched steady gains away from zero,
//!    and minimizes certified noise-to-residual gains.
//! 3. [`diagnosis`] — sub-Gaussian concentration thresholds, matched/waiting
//!    time bounds and the online isolation rule.
//! 4. [`sim`] — closed-loop simulation with scripted switching plus a seeded
//!    Monte-Carlo harness for delay/error statistics.
//! 5. [`invalidation`] — an LP-feasibility model-invalidation baseline for
//!    comparison.
//!
//! The [`conic`] module carries the solver-agnostic program representation
//! (linear objective, affine equalities/inequalities, PSD blocks) behind all
//! of the above, wired to Clarabel, together with an independent Gramian
//! H2-norm oracle used to cross-check every certified gain.

pub mod conic;
pub mod diagnosis;
pub mod error;
pub mod invalidation;
pub mod io;
pub mod linalg;
pub mod poly;
pub mod runtime;
pub mod sim;
pub mod synthesis;
pub mod system;

#[cfg(test)]
pub(crate) mod test_fixtures;

pub use conic::{h2_norm_oracle, ConicProgram, SolveReport, SolveStatus};
pub use diagnosis::{DiagnosisParams, DiagnosisState};
pub use error::CoreError;
pub use invalidation::{InvalidationOutcome, InvalidationWindow};
pub use runtime::{AugmentedSystem, FilterState};
pub use sim::{MonteCarloReport, NoiseFamily, Scenario, SimulationTrace};
pub use synthesis::{FeasibilityReport, FilterBank, ResidualFilter, SynthesisConfig};
pub use system::{ClosedLoopMode, DaeMatrices, ModeMatrices, SwitchedAffineSystem};
