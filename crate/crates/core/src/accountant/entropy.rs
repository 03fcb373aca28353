//! Weighted Shannon entropy `H = Σ_g w_g Σ_i -p_i log2 p_i` over groups.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AccountError;
use crate::corpus::Corpus;
use crate::detect::{Detector, SensitiveSpan};

pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyGroup {
    pub label: String,
    pub weight: f64,
    /// `(outcome label, probability)`.
    pub outcomes: Vec<(String, f64)>,
}

impl EntropyGroup {
    pub fn unlabeled(weight: f64, probabilities: &[f64]) -> Self {
        Self {
            label: String::new(),
            weight,
            outcomes: probabilities
                .iter()
                .enumerate()
                .map(|(i, &p)| (i.to_string(), p))
                .collect(),
        }
    }

    /// Empirical distribution of `counts`. Zero-count outcomes are kept.
    pub fn from_counts(label: impl Into<String>, weight: f64, counts: &BTreeMap<String, u64>) -> Self {
        let total: u64 = counts.values().sum();
        let outcomes = counts
            .iter()
            .map(|(k, &n)| (k.clone(), if total == 0 { 0.0 } else { n as f64 / total as f64 }))
            .collect();
        Self {
            label: label.into(),
            weight,
            outcomes,
        }
    }
}

/// Shannon entropy in bits with `0 log 0 = 0`. No validation.
pub fn shannon_bits(probabilities: impl IntoIterator<Item = f64>) -> f64 {
    probabilities
        .into_iter()
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum()
}

fn check_group(g: &EntropyGroup) -> Result<(), AccountError> {
    if !(g.weight >= 0.0 && g.weight.is_finite()) {
        return Err(AccountError::Domain(format!(
            "group {:?} has weight {}",
            g.label, g.weight
        )));
    }
    if let Some((o, p)) = g.outcomes.iter().find(|(_, p)| !(*p >= 0.0 && p.is_finite())) {
        return Err(AccountError::Domain(format!(
            "group {:?} outcome {o:?} has probability {p}",
            g.label
        )));
    }
    let sum: f64 = g.outcomes.iter().map(|(_, p)| p).sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(AccountError::Domain(format!(
            "group {:?} sums to {sum}",
            g.label
        )));
    }
    Ok(())
}

pub fn entropy(groups: &[EntropyGroup]) -> Result<f64, AccountError> {
    groups.iter().try_fold(0.0, |acc, g| {
        check_group(g)?;
        Ok(acc + g.weight * shannon_bits(g.outcomes.iter().map(|(_, p)| *p)))
    })
}

/// Upper bound `Σ w_g log2 n_g`.
pub fn entropy_upper_bound(groups: &[EntropyGroup]) -> f64 {
    groups
        .iter()
        .filter(|g| !g.outcomes.is_empty())
        .map(|g| g.weight * (g.outcomes.len() as f64).log2())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub update_index: u64,
    pub value: f64,
    pub groups: Vec<EntropyGroup>,
}

impl EntropyReport {
    pub fn new(update_index: u64, groups: Vec<EntropyGroup>) -> Result<Self, AccountError> {
        let value = entropy(&groups)?;
        Ok(Self {
            update_index,
            value,
            groups,
        })
    }
}

/// How corpus distributions are weighted. Metadata keys without an entry get
/// weight 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyWeights {
    pub content: f64,
    #[serde(default)]
    pub metadata: BTreeMap<String, f64>,
}

impl Default for EntropyWeights {
    fn default() -> Self {
        Self {
            content: 1.0,
            metadata: BTreeMap::new(),
        }
    }
}

impl EntropyWeights {
    fn metadata_weight(&self, key: &str) -> f64 {
        self.metadata.get(key).copied().unwrap_or(1.0)
    }
}

/// Category distribution of all content spans, as a single group. Empty when
/// nothing is detected.
pub fn content_groups<'a, I>(spans: I, weights: &EntropyWeights) -> Vec<EntropyGroup>
where
    I: IntoIterator<Item = &'a SensitiveSpan>,
{
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for s in spans {
        *counts.entry(s.category.name().to_string()).or_default() += 1;
    }
    if counts.is_empty() {
        Vec::new()
    } else {
        vec![EntropyGroup::from_counts("categories", weights.content, &counts)]
    }
}

/// One group per metadata key: the distribution of that key's values over
/// the documents that carry it.
pub fn metadata_groups(corpus: &Corpus, weights: &EntropyWeights) -> Vec<EntropyGroup> {
    let mut per_key: BTreeMap<&str, BTreeMap<String, u64>> = BTreeMap::new();
    for d in corpus.documents() {
        for (k, v) in &d.metadata {
            *per_key.entry(k).or_default().entry(v.clone()).or_default() += 1;
        }
    }
    per_key
        .into_iter()
        .map(|(k, counts)| EntropyGroup::from_counts(k, weights.metadata_weight(k), &counts))
        .collect()
}

pub fn content_entropy(
    corpus: &Corpus,
    detector: &Detector,
    weights: &EntropyWeights,
    update_index: u64,
) -> Result<EntropyReport, AccountError> {
    let spans: Vec<SensitiveSpan> = corpus
        .documents()
        .flat_map(|d| detector.detect(d))
        .filter(|s| s.field == crate::detect::Field::Content)
        .collect();
    EntropyReport::new(update_index, content_groups(&spans, weights))
}

pub fn metadata_entropy(
    corpus: &Corpus,
    weights: &EntropyWeights,
    update_index: u64,
) -> Result<EntropyReport, AccountError> {
    EntropyReport::new(update_index, metadata_groups(corpus, weights))
}
