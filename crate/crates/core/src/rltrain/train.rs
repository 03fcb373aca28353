//! Episodes over detected spans and the REINFORCE / PPO-clip updates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::policy::{
    build_state_with, grad_log_pi, reward, select_action, Action, Policy, PolicyState,
    PrivacySnapshot,
};
use super::{Algorithm, RlError, TrainConfig};
use crate::accountant::{EntropyGroup, EntropyReport, Ledger, LossEntry};
use crate::corpus::{Corpus, Document};
use crate::detect::{noisy_or, Detector, DisclosureAssessment, Field, SensitiveSpan};
use crate::rng::{rng_from_seed, SeededRng};

/// Parameters above this magnitude abort training.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: PolicyState,
    pub action: Action,
    pub probabilities: [f64; 3],
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub doc_id: String,
    pub steps: Vec<Step>,
    pub gamma: f64,
    /// `G = Σ γ^t r_t`.
    pub ret: f64,
    /// Privacy features the states were built from.
    pub privacy: PrivacySnapshot,
}

impl EpisodeTrace {
    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn mean_reward(&self) -> f64 {
        if self.steps.is_empty() {
            0.0
        } else {
            self.steps.iter().map(|s| s.reward).sum::<f64>() / self.steps.len() as f64
        }
    }
}

/// `G_t = r_t + γ G_{t+1}` for every step.
pub fn returns_to_go(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut g = 0.0;
    for (t, r) in rewards.iter().enumerate().rev() {
        g = r + gamma * g;
        out[t] = g;
    }
    out
}

/// Samples one action per span, in span order. States use `privacy` for
/// every step; the ledger only moves between episodes.
pub fn run_episode(
    policy: &Policy,
    doc: &Document,
    spans: &[SensitiveSpan],
    privacy: &PrivacySnapshot,
    tau: f64,
    config: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<EpisodeTrace, RlError> {
    let mut steps = Vec::with_capacity(spans.len());
    for span in spans {
        let state = build_state_with(span, doc, privacy)?;
        let (action, probabilities) = select_action(policy, &state, tau, rng);
        steps.push(Step {
            state,
            action,
            probabilities,
            reward: reward(action, span, config),
        });
    }
    let rewards: Vec<f64> = steps.iter().map(|s| s.reward).collect();
    let ret = returns_to_go(&rewards, config.gamma).first().copied().unwrap_or(0.0);
    Ok(EpisodeTrace {
        doc_id: doc.id.clone(),
        steps,
        gamma: config.gamma,
        ret,
        privacy: *privacy,
    })
}

/// Residual disclosure of a document once each span's confidence is scaled
/// by the exposure of its action.
pub fn residual_assessment(
    doc_id: &str,
    spans: &[SensitiveSpan],
    actions: &[Action],
) -> Result<DisclosureAssessment, RlError> {
    let residual = |content: bool| {
        noisy_or(
            spans
                .iter()
                .zip(actions)
                .filter(|(s, _)| (s.field == Field::Content) == content)
                .map(|(s, a)| s.confidence * a.exposure()),
        )
    };
    Ok(DisclosureAssessment::from_probabilities(doc_id, residual(true), residual(false))?)
}

/// Ledger copy updated from the actions taken: one loss entry per episode
/// and category entropies of the spans left exposed so far.
#[derive(Debug, Clone)]
struct SimulatedLedger {
    ledger: Ledger,
    next_index: u64,
    kept_content: BTreeMap<String, u64>,
    kept_metadata: BTreeMap<String, u64>,
}

impl SimulatedLedger {
    fn new(base: &Ledger) -> Self {
        Self {
            ledger: base.clone(),
            next_index: base.cycles() as u64,
            kept_content: BTreeMap::new(),
            kept_metadata: BTreeMap::new(),
        }
    }

    fn record(&mut self, doc_id: &str, spans: &[SensitiveSpan], actions: &[Action]) -> Result<(), RlError> {
        let assessment = residual_assessment(doc_id, spans, actions)?;
        self.ledger.push_loss(LossEntry {
            update_index: self.next_index,
            assessment,
        });
        for (s, a) in spans.iter().zip(actions) {
            if *a == Action::Keep {
                let counts = match s.field {
                    Field::Content => &mut self.kept_content,
                    Field::Metadata(_) => &mut self.kept_metadata,
                };
                *counts.entry(s.category.name().to_string()).or_default() += 1;
            }
        }
        let report = |counts: &BTreeMap<String, u64>, idx| {
            let groups = if counts.is_empty() {
                Vec::new()
            } else {
                vec![EntropyGroup::from_counts("categories", 1.0, counts)]
            };
            EntropyReport::new(idx, groups)
        };
        let c = report(&self.kept_content, self.next_index)?;
        let m = report(&self.kept_metadata, self.next_index)?;
        self.ledger.push_entropy(c, m);
        self.next_index += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub doc_id: String,
    pub mean_reward: f64,
    #[serde(rename = "return")]
    pub ret: f64,
    pub temperature: f64,
    pub epsilon_fraction: f64,
    #[serde(rename = "H_content")]
    pub h_content: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub policy: Policy,
    pub curve: Vec<CurvePoint>,
    /// Privacy features at the end of training.
    pub privacy: PrivacySnapshot,
}

impl TrainOutcome {
    pub fn curve_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for p in &self.curve {
            w.serialize(p).expect("in-memory write");
        }
        if self.curve.is_empty() {
            w.write_record(["episode", "doc_id", "mean_reward", "return", "temperature", "epsilon_fraction", "H_content"])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
    }
}

fn check_divergence(policy: &Policy, episode: usize, step: usize) -> Result<(), RlError> {
    let m = policy.max_abs();
    if m.is_nan() || m > DIVERGENCE_LIMIT {
        return Err(RlError::Divergence {
            episode,
            step,
            max_abs: m,
        });
    }
    Ok(())
}

fn reinforce_update(policy: &mut Policy, trace: &EpisodeTrace, tau: f64, lr: f64, episode: usize) -> Result<(), RlError> {
    let g = returns_to_go(&trace.rewards(), trace.gamma);
    let behaviour = policy.clone();
    for (t, step) in trace.steps.iter().enumerate() {
        let grad = grad_log_pi(&behaviour, &step.state, step.action, tau);
        policy.step(&grad, lr * g[t]);
        check_divergence(policy, episode, t)?;
    }
    Ok(())
}

/// Clipped surrogate `min(ρ A, clip(ρ, 1−c, 1+c) A)` with `A = G_t` and the
/// behaviour probabilities stored in the trace.
fn ppo_update(
    policy: &mut Policy,
    trace: &EpisodeTrace,
    tau: f64,
    config: &TrainConfig,
    episode: usize,
) -> Result<(), RlError> {
    let g = returns_to_go(&trace.rewards(), trace.gamma);
    let c = config.clip_ratio;
    for _ in 0..config.ppo_epochs {
        for (t, step) in trace.steps.iter().enumerate() {
            let a = step.action;
            let p_new = policy.probabilities(&step.state, tau)[a.index()];
            let ratio = p_new / step.probabilities[a.index()];
            let clipped = (g[t] >= 0.0 && ratio > 1.0 + c) || (g[t] < 0.0 && ratio < 1.0 - c);
            if clipped {
                continue;
            }
            let grad = grad_log_pi(policy, &step.state, a, tau);
            policy.step(&grad, config.learning_rate * g[t] * ratio);
            check_divergence(policy, episode, t)?;
        }
    }
    Ok(())
}

/// Documents with at least one span, in id order, with their spans.
pub(crate) fn span_documents<'a>(corpus: &'a Corpus, detector: &Detector) -> Vec<(&'a Document, Vec<SensitiveSpan>)> {
    corpus
        .documents()
        .map(|d| (d, detector.detect(d)))
        .filter(|(_, s)| !s.is_empty())
        .collect()
}

/// Trains from zero parameters. Episode `e` uses the `e mod n`-th document
/// that has spans; after each episode the privacy features are refreshed
/// from a simulated ledger update. No ε is drawn.
pub fn train(corpus: &Corpus, ledger: &Ledger, detector: &Detector, config: &TrainConfig) -> Result<TrainOutcome, RlError> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(RlError::Contract("training corpus is empty".into()));
    }
    let docs = span_documents(corpus, detector);
    if docs.is_empty() && config.episodes > 0 {
        return Err(RlError::Contract("training corpus has no detected spans".into()));
    }
    let mut policy = Policy::default();
    let mut sim = SimulatedLedger::new(ledger);
    let mut privacy = PrivacySnapshot::from_ledger(&sim.ledger)?;
    let mut rng = rng_from_seed(config.seed);
    let mut curve = Vec::with_capacity(config.episodes);

    for episode in 0..config.episodes {
        let (doc, spans) = &docs[episode % docs.len()];
        policy.trained_on.insert(doc.id.clone());
        let tau = config.temperature(episode);
        let trace = run_episode(&policy, doc, spans, &privacy, tau, config, &mut rng)?;
        match config.algorithm {
            Algorithm::Reinforce => reinforce_update(&mut policy, &trace, tau, config.learning_rate, episode)?,
            Algorithm::PpoClip => ppo_update(&mut policy, &trace, tau, config, episode)?,
        }
        let actions: Vec<Action> = trace.steps.iter().map(|s| s.action).collect();
        sim.record(&doc.id, spans, &actions)?;
        privacy = PrivacySnapshot::from_ledger(&sim.ledger)?;
        curve.push(CurvePoint {
            episode,
            doc_id: doc.id.clone(),
            mean_reward: trace.mean_reward(),
            ret: trace.ret,
            temperature: tau,
            epsilon_fraction: privacy.epsilon_fraction,
            h_content: privacy.h_content,
        });
    }
    for (d, _) in &docs {
        policy.trained_on.insert(d.id.clone());
    }
    Ok(TrainOutcome { policy, curve, privacy })
}
