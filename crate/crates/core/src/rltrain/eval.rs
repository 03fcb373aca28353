//! Greedy rollouts on held-out documents and the β trade-off sweep.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::policy::{build_state_with, reward, Action, Policy, PrivacySnapshot, ACTIONS};
use super::train::{residual_assessment, train};
use super::{RlError, TrainConfig};
use crate::accountant::Ledger;
use crate::corpus::Corpus;
use crate::detect::{assess, Detector, SensitiveSpan};
use crate::mechanisms::{redact_each, RedactMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentEval {
    pub doc_id: String,
    pub actions: Vec<Action>,
    pub reward: f64,
    /// `1 − (1 − p_c)(1 − p_m)` under the exposure model.
    pub residual_disclosure: f64,
    /// Same, measured by re-detecting on the rewritten document.
    pub redetected_disclosure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub beta: f64,
    pub documents: usize,
    pub spans: usize,
    /// Mean per-span reward of the greedy policy.
    pub mean_reward: f64,
    /// Mean per-span reward of the uniform random policy, computed exactly.
    pub baseline_reward: f64,
    /// Expected per-span reward when sampling at temperature `tau0`.
    pub sampling_expected_reward: f64,
    pub action_counts: BTreeMap<Action, usize>,
    /// Means over documents.
    pub residual_disclosure: f64,
    pub redetected_disclosure: f64,
    /// Rollouts draw no ε; this is what the ledger had already spent.
    pub epsilon_spent: f64,
    pub per_document: Vec<DocumentEval>,
}

impl EvalReport {
    pub fn action_fraction(&self, a: Action) -> f64 {
        if self.spans == 0 {
            0.0
        } else {
            self.action_counts.get(&a).copied().unwrap_or(0) as f64 / self.spans as f64
        }
    }
}

/// Mean over spans of the reward averaged over all three actions.
pub fn uniform_baseline<'a, I>(spans: I, config: &TrainConfig) -> f64
where
    I: IntoIterator<Item = &'a SensitiveSpan>,
{
    let (mut sum, mut n) = (0.0, 0usize);
    for s in spans {
        sum += ACTIONS.iter().map(|&a| reward(a, s, config)).sum::<f64>() / 3.0;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn check_disjoint(train: &Corpus, eval: &Corpus) -> Result<(), RlError> {
    match eval.ids().into_iter().find(|id| train.contains(id)) {
        Some(id) => Err(RlError::Contract(format!(
            "document {id:?} is in both the training and evaluation corpora"
        ))),
        None => Ok(()),
    }
}

fn combined(p_content: f64, p_metadata: f64) -> f64 {
    1.0 - (1.0 - p_content) * (1.0 - p_metadata)
}

/// Greedy rollout over every document of `corpus`. States use the privacy
/// features of `ledger`, which is not modified.
pub fn evaluate(
    policy: &Policy,
    corpus: &Corpus,
    ledger: &Ledger,
    detector: &Detector,
    config: &TrainConfig,
) -> Result<EvalReport, RlError> {
    if let Some(id) = corpus.ids().into_iter().find(|id| policy.trained_on.contains(*id)) {
        return Err(RlError::Contract(format!("evaluation document {id:?} was used in training")));
    }
    let privacy = PrivacySnapshot::from_ledger(ledger)?;
    let mut per_document = Vec::with_capacity(corpus.len());
    let mut action_counts: BTreeMap<Action, usize> = ACTIONS.iter().map(|&a| (a, 0)).collect();
    let (mut spans_total, mut reward_total, mut sampled_total) = (0usize, 0.0, 0.0);
    let mut all_spans = Vec::new();

    for doc in corpus.documents() {
        let spans = detector.detect(doc);
        let mut actions = Vec::with_capacity(spans.len());
        let mut doc_reward = 0.0;
        for span in &spans {
            let state = build_state_with(span, doc, &privacy)?;
            let a = policy.greedy(&state);
            let p = policy.probabilities(&state, config.tau0);
            sampled_total += ACTIONS.iter().map(|&b| p[b.index()] * reward(b, span, config)).sum::<f64>();
            doc_reward += reward(a, span, config);
            *action_counts.entry(a).or_default() += 1;
            actions.push(a);
        }
        let modeled = residual_assessment(&doc.id, &spans, &actions)?;
        let tagged: Vec<(SensitiveSpan, RedactMode)> = spans
            .iter()
            .zip(&actions)
            .filter_map(|(s, a)| match a {
                Action::Keep => None,
                Action::Generalize => Some((s.clone(), RedactMode::Generalize)),
                Action::Redact => Some((s.clone(), RedactMode::Mask)),
            })
            .collect();
        let rewritten = redact_each(doc, &tagged)?;
        let again = assess(&doc.id, &detector.detect(&rewritten))?;
        spans_total += spans.len();
        reward_total += doc_reward;
        per_document.push(DocumentEval {
            doc_id: doc.id.clone(),
            actions,
            reward: doc_reward,
            residual_disclosure: combined(modeled.p_content, modeled.p_metadata),
            redetected_disclosure: combined(again.p_content, again.p_metadata),
        });
        all_spans.extend(spans);
    }

    let per_span = |x: f64| if spans_total == 0 { 0.0 } else { x / spans_total as f64 };
    let per_doc = |f: fn(&DocumentEval) -> f64| {
        if per_document.is_empty() {
            0.0
        } else {
            per_document.iter().map(f).sum::<f64>() / per_document.len() as f64
        }
    };
    Ok(EvalReport {
        beta: config.beta,
        documents: per_document.len(),
        spans: spans_total,
        mean_reward: per_span(reward_total),
        baseline_reward: uniform_baseline(&all_spans, config),
        sampling_expected_reward: per_span(sampled_total),
        action_counts,
        residual_disclosure: per_doc(|d| d.residual_disclosure),
        redetected_disclosure: per_doc(|d| d.redetected_disclosure),
        epsilon_spent: ledger.epsilon_spent(),
        per_document,
    })
}

/// Trains one policy per β on `train_corpus` and evaluates each on
/// `eval_corpus`.
pub fn beta_sweep(
    train_corpus: &Corpus,
    eval_corpus: &Corpus,
    ledger: &Ledger,
    detector: &Detector,
    config: &TrainConfig,
    betas: &[f64],
) -> Result<Vec<EvalReport>, RlError> {
    check_disjoint(train_corpus, eval_corpus)?;
    betas
        .iter()
        .map(|&beta| {
            let cfg = TrainConfig { beta, ..config.clone() };
            cfg.validate()?;
            let out = train(train_corpus, ledger, detector, &cfg)?;
            evaluate(&out.policy, eval_corpus, ledger, detector, &cfg)
        })
        .collect()
}

pub const EVAL_CSV_HEADER: [&str; 11] = [
    "beta",
    "documents",
    "spans",
    "mean_reward",
    "baseline_reward",
    "keep",
    "generalize",
    "redact",
    "residual_disclosure",
    "redetected_disclosure",
    "epsilon_spent",
];

/// One row per report.
pub fn eval_csv(reports: &[EvalReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(EVAL_CSV_HEADER).expect("in-memory write");
    for r in reports {
        w.write_record([
            r.beta.to_string(),
            r.documents.to_string(),
            r.spans.to_string(),
            r.mean_reward.to_string(),
            r.baseline_reward.to_string(),
            r.action_fraction(Action::Keep).to_string(),
            r.action_fraction(Action::Generalize).to_string(),
            r.action_fraction(Action::Redact).to_string(),
            r.residual_disclosure.to_string(),
            r.redetected_disclosure.to_string(),
            r.epsilon_spent.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    #[test]
    fn empty_corpus_report() {
        let r = evaluate(
            &Policy::default(),
            &Corpus::new(),
            &Ledger::new(1.0).unwrap(),
            &Detector::default(),
            &TrainConfig::default(),
        )
        .unwrap();
        assert_eq!((r.documents, r.spans), (0, 0));
        assert_eq!(r.mean_reward, 0.0);
        assert_eq!(r.residual_disclosure, 0.0);
        assert_eq!(eval_csv(&[r]).lines().count(), 2);
    }

    #[test]
    fn zero_policy_matches_uniform_expectation() {
        let c = Corpus::from_documents([
            Document::new("a", "a@b.com, Alice"),
            Document::new("b", "card 4111 1111 1111 1111"),
        ])
        .unwrap();
        let cfg = TrainConfig::default();
        let r = evaluate(&Policy::default(), &c, &Ledger::new(1.0).unwrap(), &Detector::default(), &cfg).unwrap();
        // spans: EMAIL 0.99, PERSON_NAME 0.80, CREDIT_CARD 0.99; β = 1
        // per span mean over actions: (1 - c + 0.5 - 0.25c + 0) / 3 = (1.5 - 1.25c) / 3
        let expect = ((1.5 - 1.25 * 0.99) * 2.0 + (1.5 - 1.25 * 0.8)) / 3.0 / 3.0;
        assert!((r.baseline_reward - expect).abs() < 1e-15);
        assert!((r.sampling_expected_reward - expect).abs() < 1e-12);
        // greedy ties break toward KEEP
        assert_eq!(r.action_counts[&Action::Keep], 3);
    }

    #[test]
    fn overlap_rejected() {
        let c = Corpus::from_documents([Document::new("a", "a@b.com")]).unwrap();
        assert!(check_disjoint(&c, &c).is_err());
        let mut p = Policy::default();
        p.trained_on.insert("a".into());
        let err = evaluate(&p, &c, &Ledger::new(1.0).unwrap(), &Detector::default(), &TrainConfig::default());
        assert!(matches!(err, Err(RlError::Contract(_))));
    }
}
