//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed. Tolerances live next to each check.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use num::bigint::BigInt;
use num::rational::BigRational;
use num::ToPrimitive;
use rand::Rng;

use common::{as_updates, corpus_of, planted_corpus, rl_corpus, Planted, PLANTED_CATEGORIES};
use privcurate::accountant::{
    entropy, run_update_cycle, AccountError, CycleConfig, EntropyGroup, Ledger, ReleaseSpec,
};
use privcurate::corpus::{Corpus, Document};
use privcurate::detect::{privacy_loss, Category, Detector};
use privcurate::mechanisms::{
    dp_ratio_test, laplace_release, laplace_sample, redact, PrivacyReceipt, QuerySpec, RatioTestConfig,
    RedactMode, TransformMode,
};
use privcurate::rltrain::{
    beta_sweep, build_state_with, evaluate, grad_log_pi, train, Action, Policy, PolicyState, PrivacySnapshot,
    TrainConfig, BIAS, STATE_DIM,
};
use privcurate::rng::rng_from_seed;

struct Outcome {
    id: &'static str,
    passed: bool,
    detail: String,
}

fn timed<F: FnOnce() -> (bool, String)>(id: &'static str, limit: Option<Duration>, f: F) -> Outcome {
    let t0 = Instant::now();
    let (mut passed, mut detail) = f();
    let took = t0.elapsed();
    detail.push_str(&format!(" [{:.2} s]", took.as_secs_f64()));
    if let Some(limit) = limit {
        if took > limit {
            passed = false;
            detail.push_str(&format!(" exceeds {} s", limit.as_secs()));
        }
    }
    let o = Outcome { id, passed, detail };
    println!("{} criterion {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.id, o.detail);
    o
}

// 1. DP ratio test for COUNT on neighbouring corpora.
fn dp_inequality(epsilon: f64) -> (bool, String) {
    let docs: Vec<Document> = (0..50).map(|i| Document::new(format!("n{i:02}"), "text")).collect();
    let a = corpus_of(docs.clone());
    let b = corpus_of(docs.into_iter().skip(1).collect());
    const TRIALS: usize = 1_000_000;
    const BINS: usize = 40;
    const MIN_COUNT: u64 = 1000;
    const SLACK: f64 = 0.05;
    let cfg = RatioTestConfig {
        trials: TRIALS,
        bins: BINS,
        min_count: MIN_COUNT,
        slack: SLACK,
        seed: 0xD1FF,
    };
    let r = dp_ratio_test(&QuerySpec::count(), &a, &b, epsilon, &cfg).unwrap();
    let bound = epsilon.exp() * (1.0 + SLACK);
    let ok = r.passed && r.max_ratio <= bound && r.compared_bins > 0;
    (
        ok,
        format!(
            "COUNT eps={epsilon}: max ratio {:.4} vs bound {:.4} over {} bins",
            r.max_ratio, bound, r.compared_bins
        ),
    )
}

// 2. Laplace calibration at λ = 1 and the stored expected error.
fn noise_calibration() -> (bool, String) {
    const N: usize = 1_000_000;
    const MEAN_TOL: f64 = 0.005;
    const MAD_RANGE: (f64, f64) = (0.98, 1.02);
    const ERR_TOL: f64 = 1e-12;
    let mut rng = rng_from_seed(0xCA1B);
    let (mut sum, mut abs) = (0.0, 0.0);
    for _ in 0..N {
        let x = laplace_sample(1.0, &mut rng).unwrap();
        sum += x;
        abs += x.abs();
    }
    let mean = sum / N as f64;
    let mad = abs / N as f64;
    let corpus = corpus_of((0..7).map(|i| Document::new(format!("c{i}"), "x").with_meta("n", "3")).collect());
    let cases = [
        (QuerySpec::count(), 0.5, 1.0),
        (QuerySpec::sum(privcurate::mechanisms::ValueSource::Metadata { key: "n".into() }, -2.0, 5.0), 0.25, 5.0),
    ];
    let mut err_ok = true;
    for (q, eps, delta) in &cases {
        let (rel, _) = laplace_release(q, &corpus, *eps, 1, false).unwrap();
        let oracle = 2f64.sqrt() * delta / eps;
        err_ok &= (rel.expected_error_paper - oracle).abs() <= ERR_TOL;
    }
    let ok = mean.abs() < MEAN_TOL && mad > MAD_RANGE.0 && mad < MAD_RANGE.1 && err_ok;
    (
        ok,
        format!("mean {mean:.5}, mean |x| {mad:.5}, expected_error_paper matches sqrt(2)*D/eps: {err_ok}"),
    )
}

// 3. Weighted entropy examples.
fn entropy_examples() -> (bool, String) {
    const TOL: f64 = 1e-12;
    let uniform = entropy(&[EntropyGroup::unlabeled(1.0, &[0.25; 4])]).unwrap();
    let degenerate = entropy(&[EntropyGroup::unlabeled(1.0, &[1.0, 0.0, 0.0])]).unwrap();
    let weighted = entropy(&[
        EntropyGroup::unlabeled(1.0, &[0.5, 0.5]),
        EntropyGroup::unlabeled(2.0, &[0.5, 0.5]),
    ])
    .unwrap();
    let ok = (uniform - 2.0).abs() <= TOL && degenerate == 0.0 && (weighted - 3.0).abs() <= TOL;
    (ok, format!("uniform4 {uniform}, degenerate {degenerate}, weighted {weighted}"))
}

// 4. loss_total is exactly the sum of its parts.
fn loss_additivity() -> (bool, String) {
    const PAIRS: usize = 10_000;
    let mut rng = rng_from_seed(4);
    let mut bad = 0;
    for i in 0..PAIRS {
        // include the endpoints and sub-floor values
        let draw = |rng: &mut privcurate::rng::SeededRng| match i % 10 {
            0 => 0.0,
            1 => 1.0,
            2 => rng.gen::<f64>() * 1e-10,
            _ => rng.gen::<f64>(),
        };
        let (pc, pm) = (draw(&mut rng), draw(&mut rng));
        let l = privacy_loss(pc, pm).unwrap();
        if l.loss_total != l.loss_content + l.loss_metadata {
            bad += 1;
        }
    }
    (bad == 0, format!("{PAIRS} pairs, {bad} mismatches"))
}

fn exact_sum(xs: &[f64]) -> BigRational {
    xs.iter()
        .map(|&x| BigRational::from_float(x).unwrap())
        .fold(BigRational::from_integer(BigInt::from(0)), |a, b| a + b)
}

fn receipt(eps: f64, i: u64) -> PrivacyReceipt {
    PrivacyReceipt {
        update_index: i,
        query_kind: "COUNT".into(),
        d: 1,
        sensitivity: 1.0,
        epsilon: eps,
        lambda: 1.0 / eps,
        seed: i,
        corpus_epoch: i,
        timestamp: 0,
        query: QuerySpec::count(),
    }
}

// 5. Sequential composition against an exact rational oracle, and refusal
// exactly at the boundary.
fn composition() -> (bool, String) {
    const RECEIPTS: usize = 10_000;
    const TOL: f64 = 1e-12;
    let mut rng = rng_from_seed(5);
    let eps: Vec<f64> = (0..RECEIPTS).map(|_| 1e-4 + rng.gen::<f64>() * 0.01).collect();
    let oracle = exact_sum(&eps).to_f64().unwrap();
    let mut ledger = Ledger::new(oracle * 2.0).unwrap();
    for (i, &e) in eps.iter().enumerate() {
        ledger.authorize_and_record(receipt(e, i as u64)).unwrap();
    }
    let drift = (ledger.epsilon_spent() - oracle).abs();

    // budget equal to the exact sum of the first k: all k fit, the next is refused
    let k = 5_000;
    let budget = exact_sum(&eps[..k]).to_f64().unwrap();
    let mut b = Ledger::new(budget).unwrap();
    let mut accepted = 0;
    for (i, &e) in eps[..k].iter().enumerate() {
        if b.authorize_and_record(receipt(e, i as u64)).is_ok() {
            accepted += 1;
        }
    }
    let before = b.clone();
    let refused = matches!(
        b.authorize_and_record(receipt(eps[k], k as u64)),
        Err(AccountError::BudgetExceeded { .. })
    );
    let unchanged = b == before;

    // the textbook boundary: 0.5 + 0.5 fits a budget of 1, 0.1 more does not
    let mut t = Ledger::new(1.0).unwrap();
    let small = t.authorize_and_record(receipt(0.5, 0)).is_ok()
        && t.authorize_and_record(receipt(0.5, 1)).is_ok()
        && t.authorize_and_record(receipt(0.1, 2)).is_err()
        && t.epsilon_spent() == 1.0;

    let ok = drift <= TOL && accepted == k && refused && unchanged && small;
    (
        ok,
        format!("drift {drift:e} over {RECEIPTS} receipts; boundary: {accepted}/{k} accepted, next refused {refused}"),
    )
}

// 6. Planted-PII recovery.
fn detector_oracle() -> (bool, String) {
    let (docs, truth) = planted_corpus(200, 6);
    let det = Detector::default();
    let pattern: BTreeSet<Category> = Category::ALL.into_iter().filter(|c| !c.is_gazetteer()).collect();
    let found: BTreeSet<Planted> = docs
        .iter()
        .flat_map(|d| det.detect(d))
        .filter(|s| pattern.contains(&s.category))
        .map(|s| Planted {
            doc_id: s.doc_id,
            start: s.start,
            end: s.end,
            category: s.category,
        })
        .collect();
    let truth: BTreeSet<Planted> = truth.into_iter().collect();
    let tp = found.intersection(&truth).count();
    let precision = tp as f64 / found.len() as f64;
    let recall = tp as f64 / truth.len() as f64;
    let per_cat: Vec<String> = PLANTED_CATEGORIES
        .iter()
        .map(|c| format!("{c}={}", truth.iter().filter(|p| p.category == *c).count()))
        .collect();
    (
        precision == 1.0 && recall == 1.0,
        format!(
            "{} planted ({}), {} detected, precision {precision}, recall {recall}",
            truth.len(),
            per_cat.join(" "),
            found.len()
        ),
    )
}

// 7. Masked documents rescan clean for the masked categories.
fn sanitization_fixpoint() -> (bool, String) {
    let (mut docs, _) = planted_corpus(200, 7);
    docs.extend(rl_corpus("mix", 40, 7));
    let det = Detector::default();
    let mut residual = 0;
    let mut masked = 0;
    for d in &docs {
        let spans = det.detect(d);
        masked += spans.len();
        let cats: BTreeSet<Category> = spans.iter().map(|s| s.category).collect();
        let out = redact(d, &spans, RedactMode::Mask).unwrap();
        residual += det.detect(&out).iter().filter(|s| cats.contains(&s.category)).count();
    }
    (residual == 0, format!("{} documents, {masked} spans masked, {residual} re-detected", docs.len()))
}

// 8. Per-update ζ growth and byte-identical reruns.
fn ledger_shape() -> (bool, String) {
    const K: usize = 3;
    let run = || -> (Vec<String>, Ledger) {
        let det = Detector::default();
        let mut cfg = CycleConfig::new(TransformMode::Generalize, 88);
        cfg.releases = vec![
            ReleaseSpec { query: QuerySpec::count(), epsilon: 0.2 },
            ReleaseSpec {
                query: QuerySpec::histogram(vec![
                    privcurate::mechanisms::Predicate::MetaHas { key: "author".into() },
                    privcurate::mechanisms::Predicate::All,
                ]),
                epsilon: 0.1,
            },
        ];
        let mut corpus = Corpus::new();
        let mut ledger = Ledger::new(1.0).unwrap();
        let mut reports = Vec::new();
        for u in as_updates(rl_corpus("s", 30, 8), K) {
            let (c, l, r) = run_update_cycle(&corpus, &u, &ledger, &det, &cfg).unwrap();
            reports.push(serde_json::to_string_pretty(&r).unwrap());
            corpus = c;
            ledger = l;
        }
        (reports, ledger)
    };
    let (first, ledger) = run();
    let (second, _) = run();
    let hc = ledger.zeta_entropy_content().len();
    let hm = ledger.zeta_entropy_metadata().len();
    let identical = first == second;
    (
        hc == K && hm == K && identical && first.len() == K,
        format!("after {K} updates |zeta_Hc|={hc} |zeta_Hm|={hm}; reports identical on rerun: {identical}"),
    )
}

fn log_prob(theta: &[[f64; STATE_DIM]; 3], s: &PolicyState, a: Action, tau: f64) -> f64 {
    // independent of the crate's softmax: plain exp/ln without the max shift
    let z: Vec<f64> = theta.iter().map(|row| row.iter().zip(&s.features).map(|(w, x)| w * x).sum::<f64>() / tau).collect();
    z[a.index()] - z.iter().map(|v| v.exp()).sum::<f64>().ln()
}

// 9a. Analytic ∇ log π against central differences.
fn gradient_check() -> (bool, String) {
    const CASES: usize = 100;
    const STEP: f64 = 1e-5;
    const REL_TOL: f64 = 1e-4;
    let mut rng = rng_from_seed(9);
    let mut worst: f64 = 0.0;
    for _ in 0..CASES {
        let mut f = [0.0; STATE_DIM];
        for x in f.iter_mut() {
            *x = rng.gen::<f64>();
        }
        f[BIAS] = 1.0;
        let s = PolicyState { features: f };
        // Parameters and temperature keep the policy off machine-precision
        // saturation, where round-off in the central difference itself
        // exceeds the tolerance.
        let mut p = Policy::default();
        for row in p.theta.iter_mut() {
            for w in row.iter_mut() {
                *w = rng.gen_range(-1.0..1.0);
            }
        }
        let tau = rng.gen_range(0.5..2.0);
        let a = privcurate::rltrain::ACTIONS[rng.gen_range(0..3)];
        let g = grad_log_pi(&p, &s, a, tau);
        let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
        for b in 0..3 {
            for j in 0..STATE_DIM {
                let mut up = p.theta;
                let mut down = p.theta;
                up[b][j] += STEP;
                down[b][j] -= STEP;
                let num = (log_prob(&up, &s, a, tau) - log_prob(&down, &s, a, tau)) / (2.0 * STEP);
                diff += (g[b][j] - num).powi(2);
                na += g[b][j].powi(2);
                nn += num.powi(2);
            }
        }
        let rel = diff.sqrt() / na.sqrt().max(nn.sqrt()).max(1e-12);
        worst = worst.max(rel);
    }
    (worst < REL_TOL, format!("{CASES} cases, worst relative error {worst:.2e} (step {STEP})"))
}

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const EPISODES: usize = 500;

struct RlFixture {
    train: Corpus,
    eval: Corpus,
    ledger: Ledger,
}

fn rl_fixture() -> RlFixture {
    let train_docs = rl_corpus("train", 20, 90);
    let eval_docs = rl_corpus("eval", 20, 91);
    let train = corpus_of(train_docs.clone());
    // a ledger with real entries, so the privacy features are nonzero
    let mut cfg = CycleConfig::new(TransformMode::Mask, 3);
    cfg.releases.push(ReleaseSpec { query: QuerySpec::count(), epsilon: 0.3 });
    let update = as_updates(train_docs, 1).remove(0);
    let (_, ledger, _) =
        run_update_cycle(&Corpus::new(), &update, &Ledger::new(1.0).unwrap(), &Detector::default(), &cfg).unwrap();
    RlFixture { train, eval: corpus_of(eval_docs), ledger }
}

fn greedy_everywhere(
    policy: &Policy,
    corpus: &Corpus,
    snapshots: &[PrivacySnapshot],
    pick: impl Fn(&privcurate::detect::SensitiveSpan) -> bool,
    want: Action,
) -> (usize, usize) {
    let det = Detector::default();
    let (mut checked, mut wrong) = (0, 0);
    for d in corpus.documents() {
        for s in det.detect(d).iter().filter(|s| pick(s)) {
            for snap in snapshots {
                checked += 1;
                if policy.greedy(&build_state_with(s, d, snap).unwrap()) != want {
                    wrong += 1;
                }
            }
        }
    }
    (checked, wrong)
}

// 9b. β = 0 learns KEEP everywhere; β = 100 learns REDACT on 0.99 spans.
fn rl_convergence(fx: &RlFixture) -> (bool, String) {
    let det = Detector::default();
    let base = PrivacySnapshot::from_ledger(&fx.ledger).unwrap();
    let mut lines = Vec::new();
    let mut ok = true;
    for (beta, want) in [(0.0, Action::Keep), (100.0, Action::Redact)] {
        let mut seeds_ok = 0;
        for seed in SEEDS {
            let cfg = TrainConfig { episodes: EPISODES, beta, seed, ..Default::default() };
            let out = train(&fx.train, &fx.ledger, &det, &cfg).unwrap();
            let snaps = [base, out.privacy];
            let (checked, wrong) = if beta == 0.0 {
                greedy_everywhere(&out.policy, &fx.train, &snaps, |_| true, want)
            } else {
                greedy_everywhere(&out.policy, &fx.train, &snaps, |s| s.confidence == 0.99, want)
            };
            if wrong == 0 && checked > 0 {
                seeds_ok += 1;
            }
        }
        ok &= seeds_ok == SEEDS.len();
        lines.push(format!("beta={beta}: greedy {} on {seeds_ok}/5 seeds", want.name()));
    }
    (ok, lines.join("; "))
}

// 9c. Trained policy vs the analytic uniform baseline at β = 1.
fn rl_beats_baseline(fx: &RlFixture) -> (bool, String) {
    const MARGIN: f64 = 1.2;
    let det = Detector::default();
    let mut ratios = Vec::new();
    for seed in SEEDS {
        let cfg = TrainConfig { episodes: EPISODES, beta: 1.0, seed, ..Default::default() };
        let out = train(&fx.train, &fx.ledger, &det, &cfg).unwrap();
        let r = evaluate(&out.policy, &fx.eval, &fx.ledger, &det, &cfg).unwrap();
        ratios.push(r.mean_reward / r.baseline_reward);
    }
    let ok = ratios.iter().all(|&r| r >= MARGIN);
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.2}")).collect();
    (ok, format!("reward / uniform baseline per seed [{}], need >= {MARGIN}", shown.join(", ")))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

// 10. Residual disclosure nonincreasing in β.
fn tradeoff(fx: &RlFixture) -> (bool, String) {
    const BETAS: [f64; 3] = [0.0, 1.0, 100.0];
    let det = Detector::default();
    let mut modeled = vec![Vec::new(); 3];
    let mut redetected = vec![Vec::new(); 3];
    for seed in SEEDS {
        let cfg = TrainConfig { episodes: EPISODES, seed, ..Default::default() };
        let rows = beta_sweep(&fx.train, &fx.eval, &fx.ledger, &det, &cfg, &BETAS).unwrap();
        for (i, r) in rows.iter().enumerate() {
            modeled[i].push(r.residual_disclosure);
            redetected[i].push(r.redetected_disclosure);
        }
    }
    let m: Vec<f64> = modeled.into_iter().map(median).collect();
    let d: Vec<f64> = redetected.into_iter().map(median).collect();
    let nonincreasing = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0]);
    (
        nonincreasing(&m) && nonincreasing(&d),
        format!("median residual over beta {BETAS:?}: modeled {m:.4?}, re-detected {d:.4?}"),
    )
}

fn main() {
    let mut all = Vec::new();
    for eps in [0.1, 1.0, 10.0] {
        all.push(timed("1", Some(Duration::from_secs(60)), || dp_inequality(eps)));
    }
    all.push(timed("2", Some(Duration::from_secs(10)), noise_calibration));
    all.push(timed("3", None, entropy_examples));
    all.push(timed("4", None, loss_additivity));
    all.push(timed("5", None, composition));
    all.push(timed("6", Some(Duration::from_secs(5)), detector_oracle));
    all.push(timed("7", None, sanitization_fixpoint));
    all.push(timed("8", None, ledger_shape));
    let rl_start = Instant::now();
    let fx = rl_fixture();
    all.push(timed("9a", None, gradient_check));
    all.push(timed("9b", None, || rl_convergence(&fx)));
    all.push(timed("9c", None, || rl_beats_baseline(&fx)));
    let rl_total = rl_start.elapsed();
    let rl_ok = rl_total <= Duration::from_secs(60);
    println!(
        "{} criterion 9: total runtime {:.2} s (limit 60 s)",
        if rl_ok { "PASS" } else { "FAIL" },
        rl_total.as_secs_f64()
    );
    all.push(Outcome { id: "9", passed: rl_ok, detail: String::new() });
    all.push(timed("10", None, || tradeoff(&fx)));

    let failed: Vec<&str> = all.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed {failed:?}");
        std::process::exit(1);
    }
}
