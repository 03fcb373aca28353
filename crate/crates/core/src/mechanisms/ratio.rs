//! Monte-Carlo check of the ε-DP inequality `Pr[M(D) ∈ O] ≤ e^ε Pr[M(D') ∈ O]`
//! over histogram-bin events.

use serde::{Deserialize, Serialize};

use super::laplace::laplace_release;
use super::query::{sensitivity, QuerySpec};
use super::MechanismError;
use crate::corpus::Corpus;
use crate::rng::derive_seed;

pub const MIN_TRIALS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioTestConfig {
    pub trials: usize,
    pub bins: usize,
    pub min_count: u64,
    pub slack: f64,
    pub seed: u64,
}

impl Default for RatioTestConfig {
    fn default() -> Self {
        Self {
            trials: 1_000_000,
            bins: 40,
            min_count: 1000,
            slack: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub epsilon: f64,
    /// `e^ε · (1 + slack)`.
    pub bound: f64,
    pub max_ratio: f64,
    /// Bins (across all coordinates) with at least `min_count` samples on both sides.
    pub compared_bins: usize,
    pub passed: bool,
}

/// Whether two corpora are equal or differ by adding/removing one document.
pub fn are_neighbors(a: &Corpus, b: &Corpus) -> bool {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    match large.len() - small.len() {
        0 | 1 => small
            .documents()
            .all(|d| large.get(&d.id).is_some_and(|o| same_payload(d, o))),
        _ => false,
    }
}

fn same_payload(a: &crate::corpus::Document, b: &crate::corpus::Document) -> bool {
    a.content == b.content && a.metadata == b.metadata
}

/// Runs `laplace_release` `trials` times on each corpus, bins every output
/// coordinate into `bins` equal-width bins over `[min c - m, max c + m]` with
/// `m = max(λ, |c_a - c_b| / 2)`, and reports the largest probability ratio
/// over bins where both sides have at least `min_count` samples, in either
/// direction.
///
/// One scale past the answers keeps tail bins, where the true ratio is exactly
/// `e^ε`, well populated. The half-gap term matters when λ is small next to
/// the gap: the bins must then be wide enough to see the mass between the two
/// answers.
pub fn dp_ratio_test(
    q: &QuerySpec,
    corpus_a: &Corpus,
    corpus_b: &Corpus,
    epsilon: f64,
    config: &RatioTestConfig,
) -> Result<RatioReport, MechanismError> {
    if !are_neighbors(corpus_a, corpus_b) {
        return Err(MechanismError::Contract(
            "ratio test needs corpora differing by at most one document".into(),
        ));
    }
    let exact_a = q.evaluate(corpus_a)?;
    let exact_b = q.evaluate(corpus_b)?;
    let lambda = sensitivity(q)? / epsilon;
    let release = |corpus: &Corpus, stream: u64| -> Vec<f64> {
        laplace_release(q, corpus, epsilon, derive_seed(config.seed, stream), false)
            .expect("query validated above")
            .0
            .released
    };
    let mut draw_a = |t: u64| release(corpus_a, 2 * t);
    let mut draw_b = |t: u64| release(corpus_b, 2 * t + 1);
    ratio_test_with(&exact_a, &exact_b, lambda, epsilon, config, &mut draw_a, &mut draw_b)
}

/// Binning core shared with mutation tests, which substitute samplers.
/// `lambda` is the scale the mechanism claims; it only sets the bin range.
pub fn ratio_test_with<FA, FB>(
    exact_a: &[f64],
    exact_b: &[f64],
    lambda: f64,
    epsilon: f64,
    config: &RatioTestConfig,
    sample_a: &mut FA,
    sample_b: &mut FB,
) -> Result<RatioReport, MechanismError>
where
    FA: FnMut(u64) -> Vec<f64>,
    FB: FnMut(u64) -> Vec<f64>,
{
    if config.trials < MIN_TRIALS {
        return Err(MechanismError::Contract(format!(
            "ratio test needs at least {MIN_TRIALS} trials, got {}",
            config.trials
        )));
    }
    if config.bins == 0 || exact_a.len() != exact_b.len() || exact_a.is_empty() {
        return Err(MechanismError::Contract("bad bin count or dimensions".into()));
    }
    if !(epsilon > 0.0 && lambda > 0.0) {
        return Err(MechanismError::Domain("epsilon and lambda must be positive".into()));
    }
    let d = exact_a.len();
    let ranges: Vec<(f64, f64)> = (0..d)
        .map(|j| {
            let margin = lambda.max((exact_a[j] - exact_b[j]).abs() / 2.0);
            let lo = exact_a[j].min(exact_b[j]) - margin;
            let hi = exact_a[j].max(exact_b[j]) + margin;
            (lo, (hi - lo) / config.bins as f64)
        })
        .collect();
    let mut hist_a = vec![vec![0u64; config.bins]; d];
    let mut hist_b = vec![vec![0u64; config.bins]; d];
    let bin_of = |j: usize, x: f64| -> Option<usize> {
        let (lo, width) = ranges[j];
        let k = ((x - lo) / width).floor();
        (k >= 0.0 && k < config.bins as f64).then_some(k as usize)
    };
    for t in 0..config.trials as u64 {
        for (j, x) in sample_a(t).into_iter().enumerate() {
            if let Some(k) = bin_of(j, x) {
                hist_a[j][k] += 1;
            }
        }
        for (j, x) in sample_b(t).into_iter().enumerate() {
            if let Some(k) = bin_of(j, x) {
                hist_b[j][k] += 1;
            }
        }
    }

    let mut max_ratio: f64 = 0.0;
    let mut compared = 0;
    for j in 0..d {
        for k in 0..config.bins {
            let (a, b) = (hist_a[j][k], hist_b[j][k]);
            if a >= config.min_count && b >= config.min_count {
                compared += 1;
                let r = (a as f64 / b as f64).max(b as f64 / a as f64);
                max_ratio = max_ratio.max(r);
            }
        }
    }
    let bound = epsilon.exp() * (1.0 + config.slack);
    Ok(RatioReport {
        epsilon,
        bound,
        max_ratio,
        compared_bins: compared,
        passed: compared > 0 && max_ratio <= bound,
    })
}
