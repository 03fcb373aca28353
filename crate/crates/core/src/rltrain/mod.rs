//! A linear-softmax policy that decides, span by span, whether to keep,
//! generalize or redact detected text. Privacy measures from the ledger are
//! part of the state, and a simulated ledger is refreshed after each episode.

mod config;
mod eval;
mod policy;
mod train;

pub use config::{Algorithm, TrainConfig};
pub use eval::{beta_sweep, check_disjoint, eval_csv, evaluate, uniform_baseline, DocumentEval, EvalReport, EVAL_CSV_HEADER};
pub use policy::{
    argmax, build_state, build_state_with, grad_log_pi, max_document_loss, reward, select_action, softmax, Action,
    Gradient, Policy, PolicyState, PrivacySnapshot, ACTIONS, BIAS, CONFIDENCE, CUMULATIVE_LOSS, EPSILON_FRACTION,
    FIELD_FLAG, H_CONTENT, H_METADATA, POSITION, STATE_DIM,
};
pub use train::{
    residual_assessment, returns_to_go, run_episode, train, CurvePoint, EpisodeTrace, Step, TrainOutcome,
    DIVERGENCE_LIMIT,
};

use thiserror::Error;

use crate::accountant::AccountError;
use crate::detect::DetectError;
use crate::mechanisms::MechanismError;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("bad training configuration: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("training diverged at episode {episode}, step {step}: max |θ| = {max_abs:e}")]
    Divergence { episode: usize, step: usize, max_abs: f64 },
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Account(#[from] AccountError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
}
