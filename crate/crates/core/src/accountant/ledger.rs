//! Append-only privacy ledger with sequential ε composition.

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::entropy::EntropyReport;
use super::AccountError;
use crate::detect::DisclosureAssessment;
use crate::fsio;
use crate::mechanisms::PrivacyReceipt;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossEntry {
    pub update_index: u64,
    #[serde(flatten)]
    pub assessment: DisclosureAssessment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ledger {
    epsilon_budget: f64,
    created: u64,
    spent: CompensatedSum,
    zeta_dp: Vec<PrivacyReceipt>,
    zeta_entropy_content: Vec<EntropyReport>,
    zeta_entropy_metadata: Vec<EntropyReport>,
    loss_log: Vec<LossEntry>,
    journal: Vec<RecordKind>,
}

/// Kind of each appended record, in append order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RecordKind {
    Receipt,
    EntropyContent,
    EntropyMetadata,
    Loss,
}

impl Ledger {
    pub fn new(epsilon_budget: f64) -> Result<Self, AccountError> {
        Self::with_created(epsilon_budget, 0)
    }

    /// `created` is a caller-supplied logical timestamp written to the header.
    pub fn with_created(epsilon_budget: f64, created: u64) -> Result<Self, AccountError> {
        if !(epsilon_budget > 0.0 && epsilon_budget.is_finite()) {
            return Err(AccountError::Domain(format!(
                "epsilon budget must be positive, got {epsilon_budget}"
            )));
        }
        Ok(Self {
            epsilon_budget,
            created,
            spent: CompensatedSum::default(),
            zeta_dp: Vec::new(),
            zeta_entropy_content: Vec::new(),
            zeta_entropy_metadata: Vec::new(),
            loss_log: Vec::new(),
            journal: Vec::new(),
        })
    }

    pub fn epsilon_budget(&self) -> f64 {
        self.epsilon_budget
    }

    pub fn created(&self) -> u64 {
        self.created
    }

    pub fn epsilon_spent(&self) -> f64 {
        self.spent.value()
    }

    pub fn epsilon_remaining(&self) -> f64 {
        (self.epsilon_budget - self.epsilon_spent()).max(0.0)
    }

    pub fn zeta_dp(&self) -> &[PrivacyReceipt] {
        &self.zeta_dp
    }

    pub fn zeta_entropy_content(&self) -> &[EntropyReport] {
        &self.zeta_entropy_content
    }

    pub fn zeta_entropy_metadata(&self) -> &[EntropyReport] {
        &self.zeta_entropy_metadata
    }

    pub fn loss_log(&self) -> &[LossEntry] {
        &self.loss_log
    }

    /// Number of completed update cycles.
    pub fn cycles(&self) -> usize {
        self.zeta_entropy_content.len()
    }

    pub fn latest_entropy_content(&self) -> f64 {
        self.zeta_entropy_content.last().map_or(0.0, |r| r.value)
    }

    pub fn latest_entropy_metadata(&self) -> f64 {
        self.zeta_entropy_metadata.last().map_or(0.0, |r| r.value)
    }

    /// Appends the receipt if `spent + ε ≤ budget`; otherwise refuses and
    /// leaves the ledger unchanged.
    pub fn authorize_and_record(&mut self, receipt: PrivacyReceipt) -> Result<(), AccountError> {
        let eps = receipt.epsilon;
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(AccountError::Domain(format!("receipt epsilon must be positive, got {eps}")));
        }
        let mut next = self.spent;
        next.add(eps);
        if next.value() > self.epsilon_budget {
            return Err(AccountError::BudgetExceeded {
                requested: eps,
                remaining: self.epsilon_remaining(),
            });
        }
        self.spent = next;
        self.zeta_dp.push(receipt);
        self.journal.push(RecordKind::Receipt);
        Ok(())
    }

    pub(crate) fn push_entropy(&mut self, content: EntropyReport, metadata: EntropyReport) {
        self.zeta_entropy_content.push(content);
        self.zeta_entropy_metadata.push(metadata);
        self.journal.push(RecordKind::EntropyContent);
        self.journal.push(RecordKind::EntropyMetadata);
    }

    pub(crate) fn push_loss(&mut self, entry: LossEntry) {
        self.loss_log.push(entry);
        self.journal.push(RecordKind::Loss);
    }

    fn records(&self) -> Vec<LedgerRecord> {
        let mut out = vec![LedgerRecord::Header {
            epsilon_budget: self.epsilon_budget,
            created: self.created,
        }];
        let (mut r, mut c, mut m, mut l) = (0, 0, 0, 0);
        for kind in &self.journal {
            out.push(match kind {
                RecordKind::Receipt => {
                    r += 1;
                    LedgerRecord::Receipt(self.zeta_dp[r - 1].clone())
                }
                RecordKind::EntropyContent => {
                    c += 1;
                    LedgerRecord::EntropyContent(self.zeta_entropy_content[c - 1].clone())
                }
                RecordKind::EntropyMetadata => {
                    m += 1;
                    LedgerRecord::EntropyMetadata(self.zeta_entropy_metadata[m - 1].clone())
                }
                RecordKind::Loss => {
                    l += 1;
                    LedgerRecord::Loss(self.loss_log[l - 1].clone())
                }
            });
        }
        out
    }

    /// One JSON record per line: a header, then receipts, entropy values and
    /// losses tagged by `kind`, in append order.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in self.records() {
            s.push_str(&serde_json::to_string(&r).expect("ledger record serializes"));
            s.push('\n');
        }
        s
    }

    pub fn from_jsonl<R: BufRead>(reader: R) -> Result<Self, AccountError> {
        let mut ledger: Option<Ledger> = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| AccountError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: LedgerRecord = serde_json::from_str(&line)
                .map_err(|e| AccountError::Format(format!("line {}: {e}", i + 1)))?;
            match (rec, ledger.as_mut()) {
                (LedgerRecord::Header { epsilon_budget, created }, None) => {
                    ledger = Some(Ledger::with_created(epsilon_budget, created)?);
                }
                (LedgerRecord::Header { .. }, Some(_)) => {
                    return Err(AccountError::Format(format!("line {}: second header", i + 1)));
                }
                (_, None) => {
                    return Err(AccountError::Format("ledger must start with a header".into()));
                }
                (LedgerRecord::Receipt(r), Some(l)) => l.authorize_and_record(r).map_err(|e| {
                    AccountError::Format(format!("line {}: inconsistent receipt: {e}", i + 1))
                })?,
                (LedgerRecord::EntropyContent(r), Some(l)) => {
                    l.zeta_entropy_content.push(r);
                    l.journal.push(RecordKind::EntropyContent);
                }
                (LedgerRecord::EntropyMetadata(r), Some(l)) => {
                    l.zeta_entropy_metadata.push(r);
                    l.journal.push(RecordKind::EntropyMetadata);
                }
                (LedgerRecord::Loss(e), Some(l)) => l.push_loss(e),
            }
        }
        let ledger = ledger.ok_or_else(|| AccountError::Format("empty ledger file".into()))?;
        if ledger.zeta_entropy_content.len() != ledger.zeta_entropy_metadata.len() {
            return Err(AccountError::Format(
                "content and metadata entropy lists differ in length".into(),
            ));
        }
        Ok(ledger)
    }

    pub fn save(&self, path: &Path) -> Result<(), AccountError> {
        fsio::write_atomic(path, self.to_jsonl().as_bytes())
            .map_err(|e| AccountError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, AccountError> {
        let f = std::fs::File::open(path)
            .map_err(|e| AccountError::Io(format!("{}: {e}", path.display())))?;
        Self::from_jsonl(std::io::BufReader::new(f))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LedgerRecord {
    Header { epsilon_budget: f64, created: u64 },
    Receipt(PrivacyReceipt),
    EntropyContent(EntropyReport),
    EntropyMetadata(EntropyReport),
    Loss(LossEntry),
}
