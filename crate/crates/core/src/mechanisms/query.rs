//! Aggregate queries over a corpus and their L1 sensitivity under
//! add/remove-one-document adjacency.

use serde::{Deserialize, Serialize};

use super::MechanismError;
use crate::corpus::{Corpus, Document};

/// Document filter expression.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Predicate {
    #[default]
    All,
    MetaEquals {
        key: String,
        value: String,
    },
    MetaHas {
        key: String,
    },
    ContentContains {
        needle: String,
    },
    And {
        args: Vec<Predicate>,
    },
    Or {
        args: Vec<Predicate>,
    },
    Not {
        arg: Box<Predicate>,
    },
}

impl Predicate {
    pub fn matches(&self, doc: &Document) -> bool {
        match self {
            Predicate::All => true,
            Predicate::MetaEquals { key, value } => doc.metadata.get(key) == Some(value),
            Predicate::MetaHas { key } => doc.metadata.contains_key(key),
            Predicate::ContentContains { needle } => doc.content.contains(needle.as_str()),
            Predicate::And { args } => args.iter().all(|p| p.matches(doc)),
            Predicate::Or { args } => args.iter().any(|p| p.matches(doc)),
            Predicate::Not { arg } => !arg.matches(doc),
        }
    }

    fn is_all(&self) -> bool {
        matches!(self, Predicate::All)
    }
}

/// Per-document value summed by a SUM query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ValueSource {
    /// Metadata value parsed as a number; documents where it is missing or
    /// unparsable contribute nothing.
    Metadata { key: String },
    ContentBytes,
}

impl ValueSource {
    fn value(&self, doc: &Document) -> Option<f64> {
        match self {
            ValueSource::Metadata { key } => doc
                .metadata
                .get(key)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite()),
            ValueSource::ContentBytes => Some(doc.content.len() as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QueryKind {
    Count,
    /// Each document lands in the first bucket it matches, so buckets are
    /// mutually exclusive. Documents matching no bucket are not counted.
    Histogram { buckets: Vec<Predicate> },
    Sum {
        value: ValueSource,
        #[serde(default)]
        clamp_lo: Option<f64>,
        #[serde(default)]
        clamp_hi: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    #[serde(flatten)]
    pub kind: QueryKind,
    #[serde(default, skip_serializing_if = "Predicate::is_all")]
    pub predicate: Predicate,
}

impl QuerySpec {
    pub fn count() -> Self {
        Self {
            kind: QueryKind::Count,
            predicate: Predicate::All,
        }
    }

    pub fn histogram(buckets: Vec<Predicate>) -> Self {
        Self {
            kind: QueryKind::Histogram { buckets },
            predicate: Predicate::All,
        }
    }

    pub fn sum(value: ValueSource, clamp_lo: f64, clamp_hi: f64) -> Self {
        Self {
            kind: QueryKind::Sum {
                value,
                clamp_lo: Some(clamp_lo),
                clamp_hi: Some(clamp_hi),
            },
            predicate: Predicate::All,
        }
    }

    pub fn filtered(mut self, predicate: Predicate) -> Self {
        self.predicate = predicate;
        self
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            QueryKind::Count => "COUNT",
            QueryKind::Histogram { .. } => "HISTOGRAM",
            QueryKind::Sum { .. } => "SUM",
        }
    }

    /// Output dimension `d`.
    pub fn dimension(&self) -> usize {
        match &self.kind {
            QueryKind::Histogram { buckets } => buckets.len(),
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<(), MechanismError> {
        match &self.kind {
            QueryKind::Count => Ok(()),
            QueryKind::Histogram { buckets } if buckets.is_empty() => Err(
                MechanismError::InvalidQuery("histogram needs at least one bucket".into()),
            ),
            QueryKind::Histogram { .. } => Ok(()),
            QueryKind::Sum {
                clamp_lo, clamp_hi, ..
            } => match (clamp_lo, clamp_hi) {
                (Some(lo), Some(hi)) if lo.is_finite() && hi.is_finite() => {
                    if lo < hi {
                        Ok(())
                    } else {
                        Err(MechanismError::InvalidQuery(format!(
                            "clamp_lo {lo} must be below clamp_hi {hi}"
                        )))
                    }
                }
                _ => Err(MechanismError::UnboundedSensitivity),
            },
        }
    }

    /// Exact answer `Q(corpus)`.
    pub fn evaluate(&self, corpus: &Corpus) -> Result<Vec<f64>, MechanismError> {
        self.validate()?;
        Ok(self.evaluate_docs(corpus.documents()))
    }

    pub(crate) fn evaluate_docs<'a, I>(&self, docs: I) -> Vec<f64>
    where
        I: IntoIterator<Item = &'a Document>,
    {
        let docs = docs.into_iter().filter(|d| self.predicate.matches(d));
        match &self.kind {
            QueryKind::Count => vec![docs.count() as f64],
            QueryKind::Histogram { buckets } => {
                let mut out = vec![0.0; buckets.len()];
                for d in docs {
                    if let Some(i) = buckets.iter().position(|b| b.matches(d)) {
                        out[i] += 1.0;
                    }
                }
                out
            }
            QueryKind::Sum {
                value,
                clamp_lo,
                clamp_hi,
            } => {
                let (lo, hi) = (clamp_lo.unwrap_or(f64::MIN), clamp_hi.unwrap_or(f64::MAX));
                vec![docs.filter_map(|d| value.value(d)).map(|v| v.clamp(lo, hi)).sum()]
            }
        }
    }
}

/// L1 sensitivity `max ||Q(D) - Q(D')||_1` over add/remove-one neighbours.
pub fn sensitivity(q: &QuerySpec) -> Result<f64, MechanismError> {
    q.validate()?;
    Ok(match &q.kind {
        QueryKind::Count | QueryKind::Histogram { .. } => 1.0,
        QueryKind::Sum {
            clamp_lo, clamp_hi, ..
        } => {
            let (lo, hi) = (clamp_lo.unwrap(), clamp_hi.unwrap());
            lo.abs().max(hi.abs())
        }
    })
}
