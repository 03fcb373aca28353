//! The `privcurate` command line.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 I/O failure,
//! 3 privacy budget refusal, 4 training divergence. Every output file is
//! written atomically, and commands that can fail halfway compute everything
//! before writing anything.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::accountant::{analyze, run_update_cycle, AccountError, CycleConfig, Ledger, ReleaseRecord, ReleaseSpec};
use crate::corpus::{ingest, load_corpus, load_updates, Corpus, CorpusError, CorpusUpdate, IngestError};
use crate::detect::{assess, DetectError, Detector, DetectorConfig};
use crate::fsio::{write_atomic, FileLock};
use crate::mechanisms::{laplace_release, pseudonymize, redact, MechanismError, RedactMode, TransformMode};
use crate::rltrain::{beta_sweep, check_disjoint, eval_csv, evaluate, train, Policy, RlError, TrainConfig};
use crate::rng::derive_seed;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Refusal(String),
    #[error("{0}")]
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
            CliError::Refusal(_) => 3,
            CliError::Divergence(_) => 4,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } | CorpusError::Ingest(IngestError::Io(_)) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

// A detector that cannot be configured is a validation problem even when the
// cause is a missing file.
impl From<DetectError> for CliError {
    fn from(e: DetectError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<MechanismError> for CliError {
    fn from(e: MechanismError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<AccountError> for CliError {
    fn from(e: AccountError) -> Self {
        match e {
            AccountError::Io(_) => CliError::Io(e.to_string()),
            AccountError::Corpus(c) => c.into(),
            _ if e.is_refusal() => CliError::Refusal(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<RlError> for CliError {
    fn from(e: RlError) -> Self {
        match e {
            RlError::Divergence { .. } => CliError::Divergence(e.to_string()),
            RlError::Io(_) => CliError::Io(e.to_string()),
            RlError::Account(a) => a.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "privcurate", version, about = "Privacy accounting and redaction for evolving text corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Detect sensitive spans and per-document disclosure losses.
    Scan(ScanArgs),
    /// Rewrite every detected span (mask, generalize or pseudonymize).
    Sanitize(SanitizeArgs),
    /// Answer aggregate queries with Laplace noise, charging the ledger.
    Query(QueryArgs),
    /// Run the per-update accounting cycle over a corpus history.
    Pipeline(PipelineArgs),
    /// Summarize a ledger: budget use, entropy trends, losses.
    Ledger(LedgerArgs),
    /// Train a redaction policy.
    Train(TrainArgs),
    /// Evaluate a trained policy on held-out documents.
    Eval(EvalArgs),
    /// Train and evaluate one policy per privacy weight β.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct DetectorArgs {
    /// Detector configuration (JSON). Defaults to every category enabled.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl DetectorArgs {
    fn build(&self) -> Result<Detector, CliError> {
        let cfg = match &self.config {
            Some(p) => DetectorConfig::load(p)?,
            None => DetectorConfig::default(),
        };
        Ok(Detector::new(&cfg)?)
    }
}

#[derive(Debug, Args)]
struct ScanArgs {
    /// Record file or history directory.
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    detector: DetectorArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TransformArgs {
    /// MASK, GENERALIZE or PSEUDONYMIZE.
    #[arg(long, default_value = "MASK")]
    mode: TransformMode,
    /// File holding the pseudonymization key.
    #[arg(long)]
    key: Option<PathBuf>,
}

impl TransformArgs {
    fn key(&self) -> Result<Option<Vec<u8>>, CliError> {
        match &self.key {
            None if self.mode == TransformMode::Pseudonymize => {
                Err(CliError::Validation("PSEUDONYMIZE needs --key".into()))
            }
            None => Ok(None),
            Some(p) => Ok(Some(read_bytes(p)?)),
        }
    }
}

#[derive(Debug, Args)]
struct SanitizeArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    transform: TransformArgs,
    #[command(flatten)]
    detector: DetectorArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReleaseArgs {
    /// JSON array of `{"query": ..., "epsilon": ...}`.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Base seed for every noise draw.
    #[arg(long)]
    seed: u64,
    /// Keep exact answers in the release output.
    #[arg(long)]
    test_mode: bool,
    /// Logical timestamp stamped on receipts.
    #[arg(long, default_value_t = 0)]
    timestamp: u64,
}

impl ReleaseArgs {
    fn specs(&self) -> Result<Vec<ReleaseSpec>, CliError> {
        match &self.queries {
            None => Ok(Vec::new()),
            Some(p) => serde_json::from_str(&read_text(p)?)
                .map_err(|e| CliError::Validation(format!("{}: {e}", p.display()))),
        }
    }
}

#[derive(Debug, Args)]
struct LedgerFileArgs {
    /// Ledger file; created when missing.
    #[arg(long)]
    ledger: PathBuf,
    /// Total ε for a new ledger.
    #[arg(long)]
    epsilon_budget: Option<f64>,
}

impl LedgerFileArgs {
    fn open(&self) -> Result<Ledger, CliError> {
        if self.ledger.exists() {
            return Ok(Ledger::load(&self.ledger)?);
        }
        match self.epsilon_budget {
            Some(b) => Ok(Ledger::new(b)?),
            None => Err(CliError::Validation(format!(
                "{} does not exist; pass --epsilon-budget to create it",
                self.ledger.display()
            ))),
        }
    }
}

#[derive(Debug, Args)]
struct QueryArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    ledger: LedgerFileArgs,
    #[command(flatten)]
    release: ReleaseArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// History directory (manifest plus update files) or a single record file.
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    ledger: LedgerFileArgs,
    #[command(flatten)]
    release: ReleaseArgs,
    #[command(flatten)]
    transform: TransformArgs,
    #[command(flatten)]
    detector: DetectorArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct LedgerArgs {
    #[arg(long)]
    ledger: PathBuf,
    /// Where to write analysis.csv and analysis.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PolicyEnv {
    /// Training configuration (TOML). Defaults apply when omitted.
    #[arg(long)]
    train_config: Option<PathBuf>,
    /// Ledger whose privacy measures feed the policy state (read only).
    #[arg(long)]
    ledger: Option<PathBuf>,
    #[command(flatten)]
    detector: DetectorArgs,
}

impl PolicyEnv {
    fn config(&self, seed: Option<u64>) -> Result<TrainConfig, CliError> {
        let mut c = match &self.train_config {
            Some(p) => TrainConfig::parse(&read_text(p)?)?,
            None => TrainConfig::default(),
        };
        if let Some(s) = seed {
            c.seed = s;
        }
        Ok(c)
    }

    fn ledger(&self) -> Result<Ledger, CliError> {
        match &self.ledger {
            Some(p) => Ok(Ledger::load(p)?),
            None => Ok(Ledger::new(1.0)?),
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Held-out documents; evaluated after training.
    #[arg(long)]
    eval_corpus: Option<PathBuf>,
    /// Also train and evaluate one policy per listed β (needs --eval-corpus).
    #[arg(long, value_delimiter = ',')]
    beta_sweep: Vec<f64>,
    /// Sampling seed; overrides the one in the training configuration.
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    env: PolicyEnv,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    policy: PathBuf,
    #[arg(long, alias = "eval-corpus")]
    corpus: PathBuf,
    #[command(flatten)]
    env: PolicyEnv,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    eval_corpus: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,1,100")]
    beta_sweep: Vec<f64>,
    /// Sampling seed; overrides the one in the training configuration.
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    env: PolicyEnv,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn read_text(p: &Path) -> Result<String, CliError> {
    fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
}

fn read_bytes(p: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("output serializes");
    s.push('\n');
    s
}

/// Files a command produces, written together once everything succeeded.
#[derive(Default)]
struct Outputs(Vec<(PathBuf, String)>);

impl Outputs {
    fn add(&mut self, path: PathBuf, body: String) {
        self.0.push((path, body));
    }

    fn write(self) -> Result<(), CliError> {
        for (p, body) in self.0 {
            write_atomic(&p, body.as_bytes()).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        }
        Ok(())
    }
}

fn lock(path: &Path) -> Result<FileLock, CliError> {
    FileLock::acquire(path).map_err(|e| CliError::Io(format!("cannot lock {}: {e}", path.display())))
}

#[derive(Debug, Serialize)]
struct Refusal<'a> {
    update_index: u64,
    release_index: usize,
    query_kind: &'a str,
    requested: f64,
    remaining: f64,
    message: String,
}

fn scan(a: &ScanArgs) -> Result<(), CliError> {
    let detector = a.detector.build()?;
    let corpus = load_corpus(&a.corpus)?;
    let mut spans_out = String::new();
    let mut losses = csv::Writer::from_writer(Vec::new());
    let mut n_spans = 0;
    for doc in corpus.documents() {
        let spans = detector.detect(doc);
        for s in &spans {
            spans_out.push_str(&serde_json::to_string(s).expect("span serializes"));
            spans_out.push('\n');
        }
        n_spans += spans.len();
        losses.serialize(assess(&doc.id, &spans)?).expect("in-memory write");
    }
    if corpus.is_empty() {
        losses
            .write_record(["doc_id", "p_content", "p_metadata", "loss_content", "loss_metadata", "loss_total"])
            .expect("in-memory write");
    }
    let losses = String::from_utf8(losses.into_inner().expect("in-memory flush")).expect("utf-8 output");
    let mut out = Outputs::default();
    out.add(a.out.join("spans.jsonl"), spans_out);
    out.add(a.out.join("losses.csv"), losses);
    out.write()?;
    println!("scanned {} documents, {n_spans} spans", corpus.len());
    Ok(())
}

fn sanitize(a: &SanitizeArgs) -> Result<(), CliError> {
    let detector = a.detector.build()?;
    let key = a.transform.key()?;
    let corpus = load_corpus(&a.corpus)?;
    let mut added = Vec::with_capacity(corpus.len());
    for doc in corpus.documents() {
        let spans = detector.detect(doc);
        added.push(match (a.transform.mode, &key) {
            (TransformMode::Mask, _) => redact(doc, &spans, RedactMode::Mask)?,
            (TransformMode::Generalize, _) => redact(doc, &spans, RedactMode::Generalize)?,
            (TransformMode::Pseudonymize, Some(k)) => pseudonymize(doc, &spans, k)?,
            (TransformMode::Pseudonymize, None) => unreachable!("key checked above"),
        });
    }
    let n = added.len();
    let update = CorpusUpdate {
        added,
        ..Default::default()
    };
    let mut out = Outputs::default();
    out.add(a.out.join("sanitized.jsonl"), update.to_jsonl());
    out.write()?;
    println!("sanitized {n} documents");
    Ok(())
}

fn query(a: &QueryArgs) -> Result<(), CliError> {
    let specs = a.release.specs()?;
    let corpus = load_corpus(&a.corpus)?;
    let _guard = lock(&a.ledger.ledger)?;
    let mut ledger = a.ledger.open()?;
    let update_index = corpus.history().last().map_or(0, |u| u.update_index);
    let mut records = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let seed = derive_seed(a.release.seed, i as u64);
        let (release, mut receipt) = laplace_release(&spec.query, &corpus, spec.epsilon, seed, a.release.test_mode)?;
        receipt.update_index = update_index;
        receipt.timestamp = a.release.timestamp;
        match ledger.authorize_and_record(receipt.clone()) {
            Ok(()) => records.push(ReleaseRecord { release, receipt }),
            Err(AccountError::BudgetExceeded { requested, remaining }) => {
                let message = format!(
                    "release {i} ({}) needs ε = {requested} but only {remaining} remains",
                    spec.query.kind_name()
                );
                let refusal = Refusal {
                    update_index,
                    release_index: i,
                    query_kind: spec.query.kind_name(),
                    requested,
                    remaining,
                    message: message.clone(),
                };
                // Nothing is released and the ledger file is left as it was.
                let mut out = Outputs::default();
                out.add(a.out.join("refusal.json"), to_json(&refusal));
                out.write()?;
                return Err(CliError::Refusal(message));
            }
            Err(e) => return Err(e.into()),
        }
    }
    let mut out = Outputs::default();
    out.add(a.out.join("releases.json"), to_json(&records));
    out.write()?;
    ledger.save(&a.ledger.ledger)?;
    println!(
        "released {} answers; ε spent {} of {}",
        records.len(),
        ledger.epsilon_spent(),
        ledger.epsilon_budget()
    );
    Ok(())
}

fn load_history(path: &Path) -> Result<Vec<CorpusUpdate>, CliError> {
    if path.is_dir() {
        return Ok(load_updates(path)?);
    }
    let f = fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let update = ingest(std::io::BufReader::new(f)).map_err(CorpusError::from)?;
    Ok(vec![update])
}

fn pipeline(a: &PipelineArgs) -> Result<(), CliError> {
    let detector = a.detector.build()?;
    let mut config = CycleConfig::new(a.transform.mode, a.release.seed);
    config.pseudonym_key = a.transform.key()?;
    config.releases = a.release.specs()?;
    config.test_mode = a.release.test_mode;
    config.timestamp = a.release.timestamp;
    let updates = load_history(&a.corpus)?;

    let _guard = lock(&a.ledger.ledger)?;
    let mut ledger = a.ledger.open()?;
    // A ledger that already holds k cycles resumes at the (k+1)-th update.
    let done = ledger.cycles();
    if done > updates.len() {
        return Err(CliError::Validation(format!(
            "ledger records {done} cycles but the history has only {} updates",
            updates.len()
        )));
    }
    let mut pending = updates;
    let rest = pending.split_off(done);
    let mut corpus = Corpus::replay(pending)?;

    for update in rest {
        let k = update.update_index;
        match run_update_cycle(&corpus, &update, &ledger, &detector, &config) {
            Ok((c, l, report)) => {
                let mut out = Outputs::default();
                out.add(a.out.join(format!("cycle-{k}.json")), to_json(&report));
                out.write()?;
                l.save(&a.ledger.ledger)?;
                corpus = c;
                ledger = l;
                println!(
                    "update {k}: {} documents, ε spent {:.6} of {}",
                    report.documents_in_corpus, report.epsilon_spent, report.epsilon_budget
                );
            }
            Err(AccountError::Refused {
                update_index,
                release_index,
                query_kind,
                requested,
                remaining,
            }) => {
                let message = format!(
                    "update {update_index}, release {release_index} ({query_kind}) needs ε = {requested} but only {remaining} remains"
                );
                let refusal = Refusal {
                    update_index,
                    release_index,
                    query_kind: &query_kind,
                    requested,
                    remaining,
                    message: message.clone(),
                };
                let mut out = Outputs::default();
                out.add(a.out.join("refusal.json"), to_json(&refusal));
                analysis_outputs(&ledger, &a.out, &mut out);
                out.write()?;
                return Err(CliError::Refusal(message));
            }
            Err(e) => return Err(e.into()),
        }
    }
    let mut out = Outputs::default();
    analysis_outputs(&ledger, &a.out, &mut out);
    out.write()?;
    Ok(())
}

fn analysis_outputs(ledger: &Ledger, dir: &Path, out: &mut Outputs) {
    let report = analyze(ledger);
    out.add(dir.join("analysis.csv"), report.to_csv());
    let mut json = report.to_json();
    json.push('\n');
    out.add(dir.join("analysis.json"), json);
}

fn ledger_cmd(a: &LedgerArgs) -> Result<(), CliError> {
    // Reads work on a snapshot and take no lock.
    let ledger = Ledger::load(&a.ledger)?;
    let report = analyze(&ledger);
    if let Some(dir) = &a.out {
        let mut out = Outputs::default();
        analysis_outputs(&ledger, dir, &mut out);
        out.write()?;
    }
    println!(
        "ε budget {}, spent {}, remaining {}, {} releases, {} cycles",
        report.epsilon_budget,
        report.epsilon_spent,
        report.epsilon_remaining,
        report.releases,
        report.rows.len()
    );
    for f in &report.flags {
        println!("flag: {f}");
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SweepSummary<'a> {
    config: &'a TrainConfig,
    betas: &'a [f64],
    reports: &'a [crate::rltrain::EvalReport],
}

fn train_cmd(a: &TrainArgs) -> Result<(), CliError> {
    let config = a.env.config(Some(a.seed))?;
    let detector = a.env.detector.build()?;
    let ledger = a.env.ledger()?;
    let corpus = load_corpus(&a.corpus)?;
    let held_out = match &a.eval_corpus {
        Some(p) => {
            let c = load_corpus(p)?;
            check_disjoint(&corpus, &c)?;
            Some(c)
        }
        None if !a.beta_sweep.is_empty() => {
            return Err(CliError::Validation("--beta-sweep needs --eval-corpus".into()));
        }
        None => None,
    };

    let outcome = train(&corpus, &ledger, &detector, &config)?;
    let mut out = Outputs::default();
    out.add(a.out.join("curve.csv"), outcome.curve_csv());
    out.add(a.out.join("policy.json"), to_json(&outcome.policy));
    if let Some(eval_corpus) = &held_out {
        let report = evaluate(&outcome.policy, eval_corpus, &ledger, &detector, &config)?;
        out.add(a.out.join("eval.csv"), eval_csv(std::slice::from_ref(&report)));
        out.add(a.out.join("eval.json"), to_json(&report));
        if !a.beta_sweep.is_empty() {
            let reports = beta_sweep(&corpus, eval_corpus, &ledger, &detector, &config, &a.beta_sweep)?;
            out.add(a.out.join("sweep.csv"), eval_csv(&reports));
        }
        println!(
            "evaluated on {} documents: mean reward {:.4} (uniform baseline {:.4})",
            report.documents, report.mean_reward, report.baseline_reward
        );
    }
    out.write()?;
    println!("trained {} episodes", outcome.curve.len());
    Ok(())
}

fn eval_cmd(a: &EvalArgs) -> Result<(), CliError> {
    let config = a.env.config(None)?;
    let detector = a.env.detector.build()?;
    let ledger = a.env.ledger()?;
    let policy: Policy = serde_json::from_str(&read_text(&a.policy)?)
        .map_err(|e| CliError::Validation(format!("{}: {e}", a.policy.display())))?;
    let corpus = load_corpus(&a.corpus)?;
    let report = evaluate(&policy, &corpus, &ledger, &detector, &config)?;
    let mut out = Outputs::default();
    out.add(a.out.join("eval.csv"), eval_csv(std::slice::from_ref(&report)));
    out.add(a.out.join("eval.json"), to_json(&report));
    out.write()?;
    println!(
        "{} documents, {} spans: mean reward {:.4} (uniform baseline {:.4})",
        report.documents, report.spans, report.mean_reward, report.baseline_reward
    );
    Ok(())
}

fn sweep_cmd(a: &SweepArgs) -> Result<(), CliError> {
    let config = a.env.config(Some(a.seed))?;
    let detector = a.env.detector.build()?;
    let ledger = a.env.ledger()?;
    let corpus = load_corpus(&a.corpus)?;
    let eval_corpus = load_corpus(&a.eval_corpus)?;
    let reports = beta_sweep(&corpus, &eval_corpus, &ledger, &detector, &config, &a.beta_sweep)?;
    let mut out = Outputs::default();
    out.add(a.out.join("eval.csv"), eval_csv(&reports));
    out.add(
        a.out.join("sweep.json"),
        to_json(&SweepSummary {
            config: &config,
            betas: &a.beta_sweep,
            reports: &reports,
        }),
    );
    out.write()?;
    let mut by_beta = BTreeMap::new();
    for r in &reports {
        by_beta.insert(r.beta.to_string(), r.mean_reward);
    }
    for (b, m) in by_beta {
        println!("β = {b}: mean reward {m:.4}");
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Scan(a) => scan(a),
        Command::Sanitize(a) => sanitize(a),
        Command::Query(a) => query(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Ledger(a) => ledger_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // clap reserves 2 for usage errors; here 2 means I/O.
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("privcurate: error: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}
