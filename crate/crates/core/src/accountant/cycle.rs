//! One iteration of the per-update privacy procedure.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::entropy::{content_entropy, metadata_entropy, EntropyReport, EntropyWeights};
use super::ledger::{Ledger, LossEntry};
use super::AccountError;
use crate::corpus::{Corpus, CorpusUpdate, Document};
use crate::detect::{assess, Category, Detector, DisclosureAssessment};
use crate::mechanisms::{
    laplace_release, redact, NoisyRelease, PrivacyReceipt, Pseudonymizer, QuerySpec, RedactMode,
    TransformMode,
};
use crate::rng::derive_seed;

/// A DP release to perform after every update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseSpec {
    pub query: QuerySpec,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleConfig {
    pub transform: TransformMode,
    /// Required for [`TransformMode::Pseudonymize`].
    #[serde(default, skip_serializing)]
    pub pseudonym_key: Option<Vec<u8>>,
    #[serde(default)]
    pub releases: Vec<ReleaseSpec>,
    pub seed: u64,
    #[serde(default)]
    pub test_mode: bool,
    /// Logical timestamp stamped on receipts.
    #[serde(default)]
    pub timestamp: u64,
    #[serde(default)]
    pub weights: EntropyWeights,
}

impl CycleConfig {
    pub fn new(transform: TransformMode, seed: u64) -> Self {
        Self {
            transform,
            pseudonym_key: None,
            releases: Vec::new(),
            seed,
            test_mode: false,
            timestamp: 0,
            weights: EntropyWeights::default(),
        }
    }

    /// Seed of the `release_index`-th release in update `update_index`.
    pub fn release_seed(&self, update_index: u64, release_index: usize) -> u64 {
        derive_seed(derive_seed(self.seed, update_index), release_index as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentCycleReport {
    pub doc_id: String,
    pub spans: usize,
    pub categories: BTreeMap<Category, usize>,
    pub assessment: DisclosureAssessment,
    /// Disclosure probabilities re-measured on the transformed document.
    pub residual_p_content: f64,
    pub residual_p_metadata: f64,
    pub transformed: Document,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseRecord {
    pub release: NoisyRelease,
    pub receipt: PrivacyReceipt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub update_index: u64,
    pub corpus_epoch: u64,
    pub documents_in_corpus: usize,
    pub documents: Vec<DocumentCycleReport>,
    pub removed: Vec<String>,
    pub releases: Vec<ReleaseRecord>,
    pub entropy_content: EntropyReport,
    pub entropy_metadata: EntropyReport,
    pub epsilon_spent: f64,
    pub epsilon_budget: f64,
}

fn transform(
    doc: &Document,
    spans: &[crate::detect::SensitiveSpan],
    config: &CycleConfig,
    pseudonymizer: Option<&Pseudonymizer>,
) -> Result<Document, AccountError> {
    let out = match config.transform {
        TransformMode::Mask => redact(doc, spans, RedactMode::Mask)?,
        TransformMode::Generalize => redact(doc, spans, RedactMode::Generalize)?,
        TransformMode::Pseudonymize => pseudonymizer
            .expect("checked before the cycle")
            .apply(doc, spans)?,
    };
    Ok(out)
}

/// Applies `update`, scores and transforms the changed documents, performs
/// the configured releases through the budget check, and appends one content
/// and one metadata entropy value.
///
/// Nothing is committed unless every step succeeds: on error the caller's
/// corpus and ledger are untouched.
pub fn run_update_cycle(
    corpus: &Corpus,
    update: &CorpusUpdate,
    ledger: &Ledger,
    detector: &Detector,
    config: &CycleConfig,
) -> Result<(Corpus, Ledger, CycleReport), AccountError> {
    if ledger.cycles() as u64 != corpus.epoch() {
        return Err(AccountError::Contract(format!(
            "ledger has {} cycles but corpus is at epoch {}",
            ledger.cycles(),
            corpus.epoch()
        )));
    }
    let pseudonymizer = match config.transform {
        TransformMode::Pseudonymize => Some(Pseudonymizer::new(
            config.pseudonym_key.as_deref().unwrap_or_default(),
        )?),
        _ => None,
    };

    let next_corpus = corpus.apply_update(update.clone())?;
    let update_index = update.update_index;
    let mut next_ledger = ledger.clone();

    let mut changed: Vec<&str> = update.changed_ids().collect();
    changed.sort_unstable();
    let mut documents = Vec::with_capacity(changed.len());
    for id in changed {
        let doc = next_corpus.get(id).expect("changed document present after update");
        let spans = detector.detect(doc);
        let assessment = assess(&doc.id, &spans)?;
        let transformed = transform(doc, &spans, config, pseudonymizer.as_ref())?;
        let residual = assess(&doc.id, &detector.detect(&transformed))?;
        let mut categories = BTreeMap::new();
        for s in &spans {
            *categories.entry(s.category).or_default() += 1;
        }
        next_ledger.push_loss(LossEntry {
            update_index,
            assessment: assessment.clone(),
        });
        documents.push(DocumentCycleReport {
            doc_id: doc.id.clone(),
            spans: spans.len(),
            categories,
            assessment,
            residual_p_content: residual.p_content,
            residual_p_metadata: residual.p_metadata,
            transformed,
        });
    }

    let mut releases = Vec::with_capacity(config.releases.len());
    for (i, spec) in config.releases.iter().enumerate() {
        let seed = config.release_seed(update_index, i);
        let (release, mut receipt) =
            laplace_release(&spec.query, &next_corpus, spec.epsilon, seed, config.test_mode)?;
        receipt.update_index = update_index;
        receipt.timestamp = config.timestamp;
        next_ledger
            .authorize_and_record(receipt.clone())
            .map_err(|e| match e {
                AccountError::BudgetExceeded { requested, remaining } => AccountError::Refused {
                    update_index,
                    release_index: i,
                    query_kind: spec.query.kind_name().to_string(),
                    requested,
                    remaining,
                },
                other => other,
            })?;
        releases.push(ReleaseRecord { release, receipt });
    }

    let entropy_content = content_entropy(&next_corpus, detector, &config.weights, update_index)?;
    let entropy_metadata = metadata_entropy(&next_corpus, &config.weights, update_index)?;
    next_ledger.push_entropy(entropy_content.clone(), entropy_metadata.clone());

    let report = CycleReport {
        update_index,
        corpus_epoch: next_corpus.epoch(),
        documents_in_corpus: next_corpus.len(),
        documents,
        removed: update.removed.clone(),
        releases,
        entropy_content,
        entropy_metadata,
        epsilon_spent: next_ledger.epsilon_spent(),
        epsilon_budget: next_ledger.epsilon_budget(),
    };
    Ok((next_corpus, next_ledger, report))
}
