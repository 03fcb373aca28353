//! State features, the linear-softmax policy and the reward table.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{RlError, TrainConfig};
use crate::accountant::Ledger;
use crate::corpus::Document;
use crate::detect::{Category, Field, SensitiveSpan, PROBABILITY_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    Keep,
    Generalize,
    Redact,
}

pub const ACTIONS: [Action; 3] = [Action::Keep, Action::Generalize, Action::Redact];

impl Action {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn utility(self) -> f64 {
        match self {
            Action::Keep => 1.0,
            Action::Generalize => 0.5,
            Action::Redact => 0.0,
        }
    }

    /// Fraction of a span's confidence that survives the action.
    pub fn exposure(self) -> f64 {
        match self {
            Action::Keep => 1.0,
            Action::Generalize => 0.25,
            Action::Redact => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Keep => "KEEP",
            Action::Generalize => "GENERALIZE",
            Action::Redact => "REDACT",
        }
    }
}

/// `utility(a) − β · exposure(a) · confidence · category_weight`.
pub fn reward(action: Action, span: &SensitiveSpan, config: &TrainConfig) -> f64 {
    let risk = action.exposure() * span.confidence * config.weight(span.category);
    action.utility() - config.beta * risk
}

// Feature layout.
pub const CATEGORY_OFFSET: usize = 0;
pub const CONFIDENCE: usize = 8;
pub const FIELD_FLAG: usize = 9;
pub const POSITION: usize = 10;
pub const EPSILON_FRACTION: usize = 11;
pub const H_CONTENT: usize = 12;
pub const H_METADATA: usize = 13;
pub const CUMULATIVE_LOSS: usize = 14;
pub const BIAS: usize = 15;
pub const STATE_DIM: usize = 16;

/// Largest per-document loss: both probabilities at the floor.
pub fn max_document_loss() -> f64 {
    -2.0 * PROBABILITY_FLOOR.ln()
}

/// Ledger-derived features, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PrivacySnapshot {
    pub epsilon_fraction: f64,
    /// Latest content entropy over `log2(8)`, clamped.
    pub h_content: f64,
    /// Latest metadata entropy `H / (1 + H)`.
    pub h_metadata: f64,
    /// Sum of logged `loss_total` over `documents · max_document_loss()`.
    pub cumulative_loss: f64,
}

impl PrivacySnapshot {
    pub fn from_ledger(ledger: &Ledger) -> Result<Self, RlError> {
        let raw = [
            ledger.epsilon_spent(),
            ledger.latest_entropy_content(),
            ledger.latest_entropy_metadata(),
        ];
        let losses: f64 = ledger.loss_log().iter().map(|e| e.assessment.loss_total).sum();
        if raw.iter().chain([&losses]).any(|x| !x.is_finite()) {
            return Err(RlError::NonFinite("ledger holds non-finite values".into()));
        }
        let n = ledger.loss_log().len();
        let hm = raw[2].max(0.0);
        Ok(Self {
            epsilon_fraction: (raw[0] / ledger.epsilon_budget()).clamp(0.0, 1.0),
            h_content: (raw[1] / (Category::ALL.len() as f64).log2()).clamp(0.0, 1.0),
            h_metadata: hm / (1.0 + hm),
            cumulative_loss: if n == 0 {
                0.0
            } else {
                (losses / (n as f64 * max_document_loss())).clamp(0.0, 1.0)
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    pub features: [f64; STATE_DIM],
}

impl PolicyState {
    pub fn span_features(&self) -> &[f64] {
        &self.features[..EPSILON_FRACTION]
    }

    pub fn privacy_features(&self) -> &[f64] {
        &self.features[EPSILON_FRACTION..BIAS]
    }
}

pub fn build_state_with(span: &SensitiveSpan, doc: &Document, privacy: &PrivacySnapshot) -> Result<PolicyState, RlError> {
    let text = span
        .field
        .text(doc)
        .ok_or_else(|| RlError::Contract(format!("{} missing from {:?}", span.field, doc.id)))?;
    let mut f = [0.0; STATE_DIM];
    f[CATEGORY_OFFSET + span.category.index()] = 1.0;
    f[CONFIDENCE] = span.confidence;
    f[FIELD_FLAG] = matches!(span.field, Field::Metadata(_)) as u8 as f64;
    f[POSITION] = if text.is_empty() {
        0.0
    } else {
        (span.start as f64 / text.len() as f64).min(1.0)
    };
    f[EPSILON_FRACTION] = privacy.epsilon_fraction;
    f[H_CONTENT] = privacy.h_content;
    f[H_METADATA] = privacy.h_metadata;
    f[CUMULATIVE_LOSS] = privacy.cumulative_loss;
    f[BIAS] = 1.0;
    if f.iter().any(|x| !x.is_finite()) {
        return Err(RlError::NonFinite(format!("state for span in {:?}", doc.id)));
    }
    Ok(PolicyState { features: f })
}

pub fn build_state(span: &SensitiveSpan, doc: &Document, ledger: &Ledger) -> Result<PolicyState, RlError> {
    build_state_with(span, doc, &PrivacySnapshot::from_ledger(ledger)?)
}

pub type Gradient = [[f64; STATE_DIM]; 3];

/// Linear scores `θ_a · s`, one row per action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub theta: [[f64; STATE_DIM]; 3],
    /// Document ids seen in training, kept for the held-out check.
    #[serde(default)]
    pub trained_on: BTreeSet<String>,
}

impl Default for Policy {
    fn default() -> Self {
        Self {
            theta: [[0.0; STATE_DIM]; 3],
            trained_on: BTreeSet::new(),
        }
    }
}

impl Policy {
    pub fn scores(&self, s: &PolicyState) -> [f64; 3] {
        self.theta
            .map(|row| row.iter().zip(&s.features).map(|(w, x)| w * x).sum())
    }

    pub fn probabilities(&self, s: &PolicyState, tau: f64) -> [f64; 3] {
        softmax(self.scores(s), tau)
    }

    pub fn log_prob(&self, s: &PolicyState, a: Action, tau: f64) -> f64 {
        let z = self.scores(s).map(|x| x / tau);
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        z[a.index()] - lse
    }

    pub fn greedy(&self, s: &PolicyState) -> Action {
        argmax(self.scores(s))
    }

    pub fn max_abs(&self) -> f64 {
        self.theta.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn step(&mut self, grad: &Gradient, scale: f64) {
        for (row, g) in self.theta.iter_mut().zip(grad) {
            for (w, d) in row.iter_mut().zip(g) {
                *w += scale * d;
            }
        }
    }
}

/// `softmax(scores / τ)`, max-shifted.
pub fn softmax(scores: [f64; 3], tau: f64) -> [f64; 3] {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = scores.map(|x| ((x - m) / tau).exp());
    let z: f64 = e.iter().sum();
    e.map(|x| x / z)
}

/// Lowest index wins ties.
pub fn argmax(scores: [f64; 3]) -> Action {
    let mut best = 0;
    for i in 1..3 {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    ACTIONS[best]
}

/// Samples from `softmax(scores / τ)`.
pub fn select_action<R: Rng + ?Sized>(policy: &Policy, s: &PolicyState, tau: f64, rng: &mut R) -> (Action, [f64; 3]) {
    let p = policy.probabilities(s, tau);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return (ACTIONS[i], p);
        }
    }
    // u landed in the rounding gap above the cumulative sum
    let last = (0..3).rev().find(|&i| p[i] > 0.0).unwrap_or(2);
    (ACTIONS[last], p)
}

/// `∂ log π(a|s) / ∂θ_b = (1[b = a] − π_b) · s / τ`.
pub fn grad_log_pi(policy: &Policy, s: &PolicyState, a: Action, tau: f64) -> Gradient {
    let p = policy.probabilities(s, tau);
    let mut g = [[0.0; STATE_DIM]; 3];
    for (b, row) in g.iter_mut().enumerate() {
        let coef = ((b == a.index()) as u8 as f64 - p[b]) / tau;
        for (gi, x) in row.iter_mut().zip(&s.features) {
            *gi = coef * x;
        }
    }
    g
}
