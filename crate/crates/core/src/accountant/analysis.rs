//! Post-hoc summaries of a ledger: per-update rows, entropy trends and loss
//! statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ledger::{CompensatedSum, Ledger};

/// Differences smaller than this count as flat.
pub const TREND_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Increasing,
    Decreasing,
    Constant,
    Mixed,
    /// Fewer than two points.
    Insufficient,
}

impl Trend {
    pub fn of(values: &[f64]) -> Trend {
        if values.len() < 2 {
            return Trend::Insufficient;
        }
        let (mut up, mut down) = (false, false);
        for w in values.windows(2) {
            let d = w[1] - w[0];
            up |= d > TREND_TOLERANCE;
            down |= d < -TREND_TOLERANCE;
        }
        match (up, down) {
            (true, false) => Trend::Increasing,
            (false, true) => Trend::Decreasing,
            (false, false) => Trend::Constant,
            (true, true) => Trend::Mixed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRow {
    pub update_index: u64,
    pub epsilon_spent_cumulative: f64,
    #[serde(rename = "H_content")]
    pub h_content: f64,
    #[serde(rename = "H_metadata")]
    pub h_metadata: f64,
    /// Loss sums over documents scored in this update.
    pub loss_content: f64,
    pub loss_metadata: f64,
    pub loss_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub documents: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub epsilon_budget: f64,
    pub epsilon_spent: f64,
    pub epsilon_remaining: f64,
    pub releases: usize,
    /// ε spent per query kind.
    pub epsilon_by_kind: BTreeMap<String, f64>,
    pub content_trend: Trend,
    pub metadata_trend: Trend,
    /// Per-document `loss_total` statistics; `None` with no losses logged.
    pub loss: Option<LossSummary>,
    pub flags: Vec<String>,
    pub rows: Vec<AnalysisRow>,
}

pub const CSV_HEADER: [&str; 7] = [
    "update_index",
    "epsilon_spent_cumulative",
    "H_content",
    "H_metadata",
    "loss_content",
    "loss_metadata",
    "loss_total",
];

pub fn analyze(ledger: &Ledger) -> AnalysisReport {
    let mut rows = Vec::with_capacity(ledger.cycles());
    for (c, m) in ledger
        .zeta_entropy_content()
        .iter()
        .zip(ledger.zeta_entropy_metadata())
    {
        let k = c.update_index;
        let spent: CompensatedSum = ledger
            .zeta_dp()
            .iter()
            .filter(|r| r.update_index <= k)
            .map(|r| r.epsilon)
            .collect();
        let mut lc = CompensatedSum::default();
        let mut lm = CompensatedSum::default();
        let mut lt = CompensatedSum::default();
        for e in ledger.loss_log().iter().filter(|e| e.update_index == k) {
            lc.add(e.assessment.loss_content);
            lm.add(e.assessment.loss_metadata);
            lt.add(e.assessment.loss_total);
        }
        rows.push(AnalysisRow {
            update_index: k,
            epsilon_spent_cumulative: spent.value(),
            h_content: c.value,
            h_metadata: m.value,
            loss_content: lc.value(),
            loss_metadata: lm.value(),
            loss_total: lt.value(),
        });
    }

    let mut by_kind: BTreeMap<String, CompensatedSum> = BTreeMap::new();
    for r in ledger.zeta_dp() {
        by_kind.entry(r.query_kind.clone()).or_default().add(r.epsilon);
    }

    let totals: Vec<f64> = ledger.loss_log().iter().map(|e| e.assessment.loss_total).collect();
    let loss = (!totals.is_empty()).then(|| LossSummary {
        documents: totals.len(),
        min: totals.iter().copied().fold(f64::INFINITY, f64::min),
        max: totals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean: totals.iter().copied().collect::<CompensatedSum>().value() / totals.len() as f64,
    });

    let hc: Vec<f64> = rows.iter().map(|r| r.h_content).collect();
    let hm: Vec<f64> = rows.iter().map(|r| r.h_metadata).collect();
    let content_trend = Trend::of(&hc);
    let metadata_trend = Trend::of(&hm);

    let mut flags = Vec::new();
    for (name, t) in [("content", content_trend), ("metadata", metadata_trend)] {
        match t {
            Trend::Increasing => flags.push(format!("{name} diversity increasing")),
            Trend::Decreasing => flags.push(format!("{name} diversity decreasing")),
            _ => {}
        }
    }
    let spent = ledger.epsilon_spent();
    let budget = ledger.epsilon_budget();
    if ledger.epsilon_remaining() == 0.0 {
        flags.push("budget exhausted".to_string());
    } else if spent >= 0.9 * budget {
        flags.push("budget over 90% spent".to_string());
    }

    AnalysisReport {
        epsilon_budget: budget,
        epsilon_spent: spent,
        epsilon_remaining: ledger.epsilon_remaining(),
        releases: ledger.zeta_dp().len(),
        epsilon_by_kind: by_kind.into_iter().map(|(k, s)| (k, s.value())).collect(),
        content_trend,
        metadata_trend,
        loss,
        flags,
        rows,
    }
}

impl AnalysisReport {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.update_index.to_string(),
                r.epsilon_spent_cumulative.to_string(),
                r.h_content.to_string(),
                r.h_metadata.to_string(),
                r.loss_content.to_string(),
                r.loss_metadata.to_string(),
                r.loss_total.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
