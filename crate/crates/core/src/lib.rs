//! Privacy-preserving corpus curation.
//!
//! * [`corpus`]: documents, line-delimited ingestion, event-sourced updates.
//! * [`detect`]: sensitive-span extraction, disclosure probabilities, losses.
//! * [`mechanisms`]: sensitivity, Laplace releases, DP ratio test, redaction
//!   and pseudonymization.
//! * [`accountant`]: budget ledger, weighted entropy, the per-update cycle and
//!   post-hoc analysis.
//! * [`rltrain`]: a linear-softmax redaction policy trained with REINFORCE or
//!   PPO-clip on detected spans, with privacy measures in its state.
//! * [`cli`]: the `privcurate` command surface.

pub mod accountant;
pub mod cli;
pub mod corpus;
pub mod detect;
pub mod fsio;
pub mod mechanisms;
pub mod rltrain;
pub mod rng;
