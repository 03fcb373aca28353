//! Laplace perturbation of query answers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::query::{sensitivity, QuerySpec};
use super::MechanismError;
use crate::corpus::Corpus;
use crate::rng::{rng_from_seed, SeededRng};

/// Inverse-CDF transform of a uniform `u` in `(-0.5, 0.5)`:
/// `-lambda * sign(u) * ln(1 - 2|u|)`.
pub fn laplace_from_uniform(u: f64, lambda: f64) -> f64 {
    if u == 0.0 {
        return 0.0;
    }
    -lambda * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Draws a uniform in the open interval `(-0.5, 0.5)`.
pub fn centered_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u = rng.gen::<f64>() - 0.5;
        if u > -0.5 {
            return u;
        }
    }
}

/// One zero-mean Laplace(`lambda`) draw consuming a single uniform.
pub fn laplace_sample<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> Result<f64, MechanismError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(MechanismError::Domain(format!("lambda must be positive, got {lambda}")));
    }
    Ok(laplace_from_uniform(centered_uniform(rng), lambda))
}

/// Record of one differentially private release.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReceipt {
    pub update_index: u64,
    pub query_kind: String,
    pub d: usize,
    pub sensitivity: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub seed: u64,
    pub corpus_epoch: u64,
    pub timestamp: u64,
    pub query: QuerySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyRelease {
    /// Exact answer; only kept in test mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_vector: Option<Vec<f64>>,
    pub released: Vec<f64>,
    pub lambda: f64,
    pub epsilon: f64,
    pub sensitivity: f64,
    /// `sqrt(2) * sensitivity / epsilon`, the per-element error formula as
    /// published. The analytic mean absolute error of Laplace(lambda) is
    /// `lambda`; `sqrt(2) * lambda` is its standard deviation.
    pub expected_error_paper: f64,
    pub seed: u64,
}

pub fn expected_error_paper(sensitivity: f64, epsilon: f64) -> f64 {
    std::f64::consts::SQRT_2 * sensitivity / epsilon
}

fn check_epsilon(epsilon: f64) -> Result<(), MechanismError> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(MechanismError::Domain(format!("epsilon must be positive, got {epsilon}")))
    }
}

/// Adds `d` independent Laplace(`sensitivity / epsilon`) draws to `Q(corpus)`.
///
/// Budget is not checked here; callers authorize the returned receipt with
/// the accountant. The receipt's `update_index` is the latest applied update
/// (`epoch - 1`, or 0 for an empty history) and its timestamp is 0; callers
/// that track either overwrite them.
pub fn laplace_release(
    q: &QuerySpec,
    corpus: &Corpus,
    epsilon: f64,
    seed: u64,
    test_mode: bool,
) -> Result<(NoisyRelease, PrivacyReceipt), MechanismError> {
    check_epsilon(epsilon)?;
    let delta = sensitivity(q)?;
    let exact = q.evaluate(corpus)?;
    let lambda = delta / epsilon;
    let mut rng = rng_from_seed(seed);
    let released = perturb(&exact, lambda, &mut rng)?;

    let release = NoisyRelease {
        true_vector: test_mode.then_some(exact),
        released,
        lambda,
        epsilon,
        sensitivity: delta,
        expected_error_paper: expected_error_paper(delta, epsilon),
        seed,
    };
    let receipt = PrivacyReceipt {
        update_index: corpus.epoch().saturating_sub(1),
        query_kind: q.kind_name().to_string(),
        d: q.dimension(),
        sensitivity: delta,
        epsilon,
        lambda,
        seed,
        corpus_epoch: corpus.epoch(),
        timestamp: 0,
        query: q.clone(),
    };
    Ok((release, receipt))
}

pub(crate) fn perturb(
    exact: &[f64],
    lambda: f64,
    rng: &mut SeededRng,
) -> Result<Vec<f64>, MechanismError> {
    exact
        .iter()
        .map(|c| Ok(c + laplace_sample(lambda, rng)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::mechanisms::query::Predicate;

    #[test]
    fn zero_uniform_is_zero_noise() {
        assert_eq!(laplace_from_uniform(0.0, 1.0), 0.0);
        assert_eq!(laplace_from_uniform(0.0, 7.5), 0.0);
    }

    #[test]
    fn transform_matches_cdf() {
        // F(x) = 1 - exp(-x/l)/2 for x >= 0, so u = F(x) - 1/2 = 1/2 - exp(-x/l)/2.
        for &x in &[0.1, 1.0, 3.7] {
            let u = 0.5 - 0.5 * (-x / 2.0f64).exp();
            assert!((laplace_from_uniform(u, 2.0) - x).abs() < 1e-12);
            assert!((laplace_from_uniform(-u, 2.0) + x).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_linearity_under_same_seed() {
        let a = laplace_sample(1.0, &mut rng_from_seed(99)).unwrap();
        let b = laplace_sample(2.0, &mut rng_from_seed(99)).unwrap();
        assert_eq!(b, 2.0 * a);
    }

    #[test]
    fn nonpositive_lambda_rejected() {
        let mut r = rng_from_seed(1);
        assert!(laplace_sample(0.0, &mut r).is_err());
        assert!(laplace_sample(-1.0, &mut r).is_err());
    }

    #[test]
    #[allow(clippy::approx_constant)] // √2 typed out as an independent oracle
    fn count_release_receipt() {
        let c = Corpus::from_documents((0..5).map(|i| Document::new(format!("d{i}"), "x"))).unwrap();
        let (rel, rec) = laplace_release(&QuerySpec::count(), &c, 1.0, 3, true).unwrap();
        assert_eq!(rel.true_vector, Some(vec![5.0]));
        assert_eq!(rel.lambda, 1.0);
        assert!((rel.expected_error_paper - 1.414_21).abs() < 1e-5);
        assert_eq!(rec.epsilon, 1.0);
        assert_eq!(rec.lambda, rec.sensitivity / rec.epsilon);
        assert_eq!(rec.corpus_epoch, 1);
        let (rel, _) = laplace_release(&QuerySpec::count(), &c, 1.0, 3, false).unwrap();
        assert!(rel.true_vector.is_none());
    }

    #[test]
    fn histogram_shape() {
        let c = Corpus::from_documents([Document::new("a", "x")]).unwrap();
        let q = QuerySpec::histogram(vec![Predicate::All; 3]);
        let (rel, rec) = laplace_release(&q, &c, 0.3, 5, false).unwrap();
        assert_eq!(rel.released.len(), 3);
        assert_eq!(rec.epsilon, 0.3);
        assert_eq!(rec.d, 3);
    }

    #[test]
    fn release_is_seed_deterministic() {
        let c = Corpus::new();
        let a = laplace_release(&QuerySpec::count(), &c, 0.5, 17, false).unwrap();
        let b = laplace_release(&QuerySpec::count(), &c, 0.5, 17, false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_inputs_fail_before_sampling() {
        let c = Corpus::new();
        assert!(laplace_release(&QuerySpec::count(), &c, 0.0, 1, false).is_err());
        let q = QuerySpec::sum(crate::mechanisms::ValueSource::ContentBytes, 0.0, f64::NAN);
        assert!(matches!(
            laplace_release(&q, &c, 1.0, 1, false),
            Err(MechanismError::UnboundedSensitivity)
        ));
    }
}
