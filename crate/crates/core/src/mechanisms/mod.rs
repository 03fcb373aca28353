//! The privacy machine: sensitivity calculus, Laplace releases, a Monte-Carlo
//! DP verifier, and text transforms (masking, generalization, keyed
//! pseudonymization).
//!
//! Sensitivity is the L1 norm of the largest change in a query's output when
//! one document is added or removed. Mechanisms never look at the budget;
//! the accountant authorizes every receipt they emit.

mod laplace;
mod query;
mod ratio;
mod transform;

use thiserror::Error;

pub use laplace::{
    centered_uniform, expected_error_paper, laplace_from_uniform, laplace_release, laplace_sample,
    NoisyRelease, PrivacyReceipt,
};
pub use query::{sensitivity, Predicate, QueryKind, QuerySpec, ValueSource};
pub use ratio::{are_neighbors, dp_ratio_test, ratio_test_with, RatioReport, RatioTestConfig, MIN_TRIALS};
pub use transform::{
    generic_token, mask_token, pseudonymize, redact, redact_each, Pseudonymizer, RedactMode,
    TransformMode,
};

#[derive(Debug, Error)]
pub enum MechanismError {
    #[error("query has unbounded sensitivity (SUM needs finite clamps)")]
    UnboundedSensitivity,
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid span: {0}")]
    Span(String),
}
