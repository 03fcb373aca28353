//! Privacy accounting: the ε ledger, entropy tracking, the per-update cycle
//! and post-hoc analysis of a ledger.

pub mod analysis;
pub mod cycle;
pub mod entropy;
pub mod ledger;

pub use analysis::{analyze, AnalysisReport, AnalysisRow, LossSummary, Trend};
pub use cycle::{run_update_cycle, CycleConfig, CycleReport, DocumentCycleReport, ReleaseRecord, ReleaseSpec};
pub use entropy::{
    content_entropy, entropy, entropy_upper_bound, metadata_entropy, shannon_bits, EntropyGroup,
    EntropyReport, EntropyWeights,
};
pub use ledger::{CompensatedSum, Ledger, LossEntry};

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::detect::DetectError;
use crate::mechanisms::MechanismError;

#[derive(Debug, Error)]
pub enum AccountError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("budget exceeded: requested {requested}, remaining {remaining}")]
    BudgetExceeded { requested: f64, remaining: f64 },
    #[error(
        "release {release_index} ({query_kind}) of update {update_index} refused: \
         requested {requested}, remaining {remaining}"
    )]
    Refused {
        update_index: u64,
        release_index: usize,
        query_kind: String,
        requested: f64,
        remaining: f64,
    },
    #[error("malformed ledger: {0}")]
    Format(String),
    #[error("ledger i/o: {0}")]
    Io(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
}

impl AccountError {
    /// Whether this is a budget refusal rather than a failure.
    pub fn is_refusal(&self) -> bool {
        matches!(self, AccountError::BudgetExceeded { .. } | AccountError::Refused { .. })
    }
}
