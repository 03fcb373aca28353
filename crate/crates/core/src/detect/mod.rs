//! Sensitive-attribute extraction and disclosure-loss scoring.
//!
//! The extractor is rule based: regular expressions for e-mail addresses,
//! phone numbers, national id numbers, IPv4 addresses and dates, a
//! Luhn-validated matcher for card numbers, and whole-word gazetteer lookup
//! for person names and locations. Span confidences are aggregated into a
//! per-field disclosure probability with a noisy-or, and the probability is
//! turned into an adversarial log-likelihood cost `-ln(max(p, 1e-9))`.

mod gazetteer;
mod patterns;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::corpus::Document;

pub use patterns::{luhn_valid, validate_pattern_slice};

/// Probabilities are clamped to this floor before taking logarithms.
pub const PROBABILITY_FLOOR: f64 = 1e-9;

pub const PATTERN_CONFIDENCE: f64 = 0.99;
pub const GAZETTEER_CONFIDENCE: f64 = 0.80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Category {
    Email,
    Phone,
    IdNumber,
    CreditCard,
    IpAddress,
    PersonName,
    Date,
    Location,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::Email,
        Category::Phone,
        Category::IdNumber,
        Category::CreditCard,
        Category::IpAddress,
        Category::PersonName,
        Category::Date,
        Category::Location,
    ];

    pub fn index(self) -> usize {
        Category::ALL.iter().position(|&c| c == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Email => "EMAIL",
            Category::Phone => "PHONE",
            Category::IdNumber => "ID_NUMBER",
            Category::CreditCard => "CREDIT_CARD",
            Category::IpAddress => "IP_ADDRESS",
            Category::PersonName => "PERSON_NAME",
            Category::Date => "DATE",
            Category::Location => "LOCATION",
        }
    }

    pub fn is_gazetteer(self) -> bool {
        matches!(self, Category::PersonName | Category::Location)
    }

    pub fn default_confidence(self) -> f64 {
        if self.is_gazetteer() {
            GAZETTEER_CONFIDENCE
        } else {
            PATTERN_CONFIDENCE
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

/// Which text of a document a span lives in. Content sorts before metadata;
/// metadata fields sort by key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Field {
    Content,
    Metadata(String),
}

impl Field {
    pub fn text<'a>(&self, doc: &'a Document) -> Option<&'a str> {
        match self {
            Field::Content => Some(&doc.content),
            Field::Metadata(k) => doc.metadata.get(k).map(String::as_str),
        }
    }

    pub fn selector(&self) -> FieldSelector {
        match self {
            Field::Content => FieldSelector::Content,
            Field::Metadata(_) => FieldSelector::Metadata,
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Content => f.write_str("content"),
            Field::Metadata(k) => write!(f, "metadata.{k}"),
        }
    }
}

impl FromStr for Field {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "content" {
            Ok(Field::Content)
        } else if let Some(k) = s.strip_prefix("metadata.") {
            Ok(Field::Metadata(k.to_string()))
        } else {
            Err(format!("bad field {s:?}"))
        }
    }
}

impl Serialize for Field {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Field {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldSelector {
    Content,
    Metadata,
}

/// A detected sensitive region. Offsets are byte offsets into the field text,
/// half-open, on character boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitiveSpan {
    pub doc_id: String,
    pub field: Field,
    pub start: usize,
    pub end: usize,
    pub category: Category,
    pub confidence: f64,
}

impl SensitiveSpan {
    /// Slices the span out of its document, if it is in bounds.
    pub fn slice<'a>(&self, doc: &'a Document) -> Option<&'a str> {
        let text = self.field.text(doc)?;
        if self.start < self.end && self.end <= text.len() {
            text.get(self.start..self.end)
        } else {
            None
        }
    }
}

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("no detector category is enabled")]
    NothingEnabled,
    #[error("confidence for {category} must be in (0, 1], got {value}")]
    BadConfidence { category: Category, value: f64 },
    #[error("bad detector configuration: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("probability {0} is outside [0, 1]")]
    Domain(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryConfig {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default)]
    pub confidence: Option<f64>,
    #[serde(default)]
    pub gazetteer: Option<PathBuf>,
}

fn default_true() -> bool {
    true
}

/// Per-category detector settings. Categories without an entry are enabled
/// with their default confidence and built-in word list.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DetectorConfig {
    pub categories: BTreeMap<Category, CategoryConfig>,
}

impl DetectorConfig {
    pub fn only(categories: &[Category]) -> Self {
        let categories = Category::ALL
            .into_iter()
            .map(|c| {
                (
                    c,
                    CategoryConfig {
                        enabled: categories.contains(&c),
                        confidence: None,
                        gazetteer: None,
                    },
                )
            })
            .collect();
        Self { categories }
    }

    pub fn from_json(text: &str) -> Result<Self, DetectError> {
        serde_json::from_str(text).map_err(|e| DetectError::Config(e.to_string()))
    }

    /// Reads a configuration file. Relative gazetteer paths resolve against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, DetectError> {
        let text = std::fs::read_to_string(path).map_err(|source| DetectError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for c in cfg.categories.values_mut() {
            if let Some(g) = c.gazetteer.as_mut() {
                if g.is_relative() {
                    *g = base.join(&*g);
                }
            }
        }
        Ok(cfg)
    }

    pub fn enabled(&self, c: Category) -> bool {
        self.categories.get(&c).is_none_or(|cc| cc.enabled)
    }

    pub fn confidence(&self, c: Category) -> f64 {
        self.categories
            .get(&c)
            .and_then(|cc| cc.confidence)
            .unwrap_or_else(|| c.default_confidence())
    }
}

struct CategoryMatcher {
    category: Category,
    confidence: f64,
    regexes: Vec<Regex>,
}

/// A compiled detector. Construction validates the configuration and loads
/// gazetteers; detection itself is infallible and pure.
pub struct Detector {
    matchers: Vec<CategoryMatcher>,
    gazetteers: BTreeMap<Category, Vec<String>>,
}

impl fmt::Debug for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Detector")
            .field(
                "categories",
                &self.matchers.iter().map(|m| m.category).collect::<Vec<_>>(),
            )
            .finish()
    }
}

impl Default for Detector {
    fn default() -> Self {
        Detector::new(&DetectorConfig::default()).expect("default config is valid")
    }
}

impl Detector {
    pub fn new(config: &DetectorConfig) -> Result<Self, DetectError> {
        let mut matchers = Vec::new();
        let mut gazetteers = BTreeMap::new();
        for category in Category::ALL {
            if !config.enabled(category) {
                continue;
            }
            let confidence = config.confidence(category);
            if !(confidence > 0.0 && confidence <= 1.0) {
                return Err(DetectError::BadConfidence {
                    category,
                    value: confidence,
                });
            }
            let regexes = if category.is_gazetteer() {
                let words = match config.categories.get(&category).and_then(|c| c.gazetteer.as_ref()) {
                    Some(path) => gazetteer::load(path).map_err(|source| DetectError::Io {
                        path: path.display().to_string(),
                        source,
                    })?,
                    None => gazetteer::builtin(category),
                };
                let re = gazetteer::compile(&words);
                gazetteers.insert(category, words);
                re.into_iter().collect()
            } else {
                patterns::compile(category)
            };
            matchers.push(CategoryMatcher {
                category,
                confidence,
                regexes,
            });
        }
        if matchers.is_empty() {
            return Err(DetectError::NothingEnabled);
        }
        Ok(Self {
            matchers,
            gazetteers,
        })
    }

    pub fn categories(&self) -> impl Iterator<Item = Category> + '_ {
        self.matchers.iter().map(|m| m.category)
    }

    /// Whether `slice` is a valid instance of `category` under this detector:
    /// pattern categories must match fully (cards also pass Luhn), gazetteer
    /// categories must be a listed entry.
    pub fn validates(&self, category: Category, slice: &str) -> bool {
        match validate_pattern_slice(category, slice) {
            Some(ok) => ok,
            None => self
                .gazetteers
                .get(&category)
                .is_some_and(|ws| ws.iter().any(|w| w == slice)),
        }
    }

    fn scan_text(&self, doc_id: &str, field: &Field, text: &str, out: &mut Vec<SensitiveSpan>) {
        for m in &self.matchers {
            let mut hits: Vec<(usize, usize)> = m
                .regexes
                .iter()
                .flat_map(|re| re.find_iter(text).map(|h| (h.start(), h.end())))
                .filter(|&(s, e)| {
                    m.category != Category::CreditCard || luhn_valid(&text[s..e])
                })
                .collect();
            hits.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
            let mut last_end = 0;
            for (s, e) in hits {
                if s < last_end || s == e {
                    continue;
                }
                last_end = e;
                out.push(SensitiveSpan {
                    doc_id: doc_id.to_string(),
                    field: field.clone(),
                    start: s,
                    end: e,
                    category: m.category,
                    confidence: m.confidence,
                });
            }
        }
    }

    /// Detects sensitive spans in a document's content and metadata values.
    ///
    /// Output is sorted by `(field, start)` and then by category and end, and
    /// spans of one category never overlap.
    pub fn detect(&self, doc: &Document) -> Vec<SensitiveSpan> {
        let mut spans = Vec::new();
        self.scan_text(&doc.id, &Field::Content, &doc.content, &mut spans);
        for (k, v) in &doc.metadata {
            self.scan_text(&doc.id, &Field::Metadata(k.clone()), v, &mut spans);
        }
        spans.sort_by(|a, b| {
            (&a.field, a.start, a.category, a.end).cmp(&(&b.field, b.start, b.category, b.end))
        });
        spans
    }
}

pub fn detect_spans(doc: &Document, detector: &Detector) -> Vec<SensitiveSpan> {
    detector.detect(doc)
}

/// Noisy-or of span confidences: `1 - prod(1 - c_j)`, 0 when there are no spans.
///
/// Every span must come from the same document and from the selected field.
pub fn disclosure_probability(
    spans: &[SensitiveSpan],
    field: FieldSelector,
) -> Result<f64, DetectError> {
    if let Some(first) = spans.first() {
        if let Some(other) = spans.iter().find(|s| s.doc_id != first.doc_id) {
            return Err(DetectError::Contract(format!(
                "spans from documents {:?} and {:?}",
                first.doc_id, other.doc_id
            )));
        }
    }
    if let Some(bad) = spans.iter().find(|s| s.field.selector() != field) {
        return Err(DetectError::Contract(format!(
            "span in {} passed for {field:?} probability",
            bad.field
        )));
    }
    Ok(noisy_or(spans.iter().map(|s| s.confidence)))
}

pub(crate) fn noisy_or<I: IntoIterator<Item = f64>>(confidences: I) -> f64 {
    let keep: f64 = confidences.into_iter().map(|c| 1.0 - c).product();
    (1.0 - keep).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyLoss {
    pub loss_content: f64,
    pub loss_metadata: f64,
    pub loss_total: f64,
}

fn check_probability(p: f64) -> Result<f64, DetectError> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(DetectError::Domain(p))
    }
}

/// `-ln(max(p, 1e-9))` for content and metadata, and their sum.
pub fn privacy_loss(p_content: f64, p_metadata: f64) -> Result<PrivacyLoss, DetectError> {
    let loss_content = -check_probability(p_content)?.max(PROBABILITY_FLOOR).ln();
    let loss_metadata = -check_probability(p_metadata)?.max(PROBABILITY_FLOOR).ln();
    Ok(PrivacyLoss {
        loss_content,
        loss_metadata,
        loss_total: loss_content + loss_metadata,
    })
}

/// Per-document disclosure probabilities and losses. The losses are an
/// adversarial log-likelihood cost: large when the extractor is unlikely to
/// recover anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisclosureAssessment {
    pub doc_id: String,
    pub p_content: f64,
    pub p_metadata: f64,
    pub loss_content: f64,
    pub loss_metadata: f64,
    pub loss_total: f64,
}

impl DisclosureAssessment {
    pub fn from_probabilities(
        doc_id: impl Into<String>,
        p_content: f64,
        p_metadata: f64,
    ) -> Result<Self, DetectError> {
        let l = privacy_loss(p_content, p_metadata)?;
        Ok(Self {
            doc_id: doc_id.into(),
            p_content,
            p_metadata,
            loss_content: l.loss_content,
            loss_metadata: l.loss_metadata,
            loss_total: l.loss_total,
        })
    }
}

/// Splits one document's spans by field and scores both halves.
pub fn assess(doc_id: &str, spans: &[SensitiveSpan]) -> Result<DisclosureAssessment, DetectError> {
    if let Some(s) = spans.iter().find(|s| s.doc_id != doc_id) {
        return Err(DetectError::Contract(format!(
            "span from {:?} while assessing {doc_id:?}",
            s.doc_id
        )));
    }
    let (content, metadata): (Vec<_>, Vec<_>) = spans
        .iter()
        .cloned()
        .partition(|s| s.field == Field::Content);
    let pc = disclosure_probability(&content, FieldSelector::Content)?;
    let pm = disclosure_probability(&metadata, FieldSelector::Metadata)?;
    DisclosureAssessment::from_probabilities(doc_id, pc, pm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(field: Field, conf: f64) -> SensitiveSpan {
        SensitiveSpan {
            doc_id: "d".into(),
            field,
            start: 0,
            end: 1,
            category: Category::Email,
            confidence: conf,
        }
    }

    #[test]
    fn email_offsets() {
        // "mail me at " is 4 + 1 + 2 + 1 + 2 + 1 = 11 bytes; "a@b.com" is 7.
        let doc = Document::new("d", "mail me at a@b.com");
        let spans = Detector::default().detect(&doc);
        assert_eq!(spans.len(), 1);
        let s = &spans[0];
        assert_eq!((s.start, s.end, s.category), (11, 18, Category::Email));
        assert_eq!(s.confidence, 0.99);
        assert_eq!(s.slice(&doc), Some("a@b.com"));
    }

    #[test]
    fn nothing_found() {
        assert!(Detector::default()
            .detect(&Document::new("d", "no secrets here"))
            .is_empty());
    }

    #[test]
    fn credit_card_needs_checksum() {
        let det = Detector::default();
        let spans = det.detect(&Document::new("d", "card 4111111111111111"));
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].category, Category::CreditCard);
        assert_eq!((spans[0].start, spans[0].end), (5, 21));
        assert!(det
            .detect(&Document::new("d", "card 4111111111111112"))
            .is_empty());
    }

    #[test]
    fn metadata_and_order() {
        let doc = Document::new("d", "call 555-123-4567 or x@y.org")
            .with_meta("author", "Alice Smith")
            .with_meta("location", "London");
        let spans = Detector::default().detect(&doc);
        let got: Vec<_> = spans
            .iter()
            .map(|s| (s.field.to_string(), s.category))
            .collect();
        assert_eq!(
            got,
            vec![
                ("content".into(), Category::Phone),
                ("content".into(), Category::Email),
                ("metadata.author".into(), Category::PersonName),
                ("metadata.location".into(), Category::Location),
            ]
        );
        assert_eq!(spans[2].confidence, 0.80);
    }

    #[test]
    fn multibyte_text_keeps_boundaries() {
        let doc = Document::new("d", "héllo — écrivez à a@b.com ✓");
        let spans = Detector::default().detect(&doc);
        assert_eq!(spans.len(), 1);
        assert!(doc.content.is_char_boundary(spans[0].start));
        assert_eq!(spans[0].slice(&doc), Some("a@b.com"));
    }

    #[test]
    fn config_disables_and_validates() {
        let cfg = DetectorConfig::only(&[Category::Phone]);
        let det = Detector::new(&cfg).unwrap();
        assert!(det.detect(&Document::new("d", "a@b.com")).is_empty());
        assert!(matches!(
            Detector::new(&DetectorConfig::only(&[])),
            Err(DetectError::NothingEnabled)
        ));
        let bad = DetectorConfig::from_json(r#"{"EMAIL":{"confidence":1.5}}"#).unwrap();
        assert!(matches!(Detector::new(&bad), Err(DetectError::BadConfidence { .. })));
    }

    #[test]
    fn config_file_with_gazetteer() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("names.txt"), "Zebulon Quark\n# comment\n\n").unwrap();
        std::fs::write(
            dir.path().join("det.json"),
            r#"{"PERSON_NAME":{"gazetteer":"names.txt","confidence":0.7},"EMAIL":{"enabled":false}}"#,
        )
        .unwrap();
        let cfg = DetectorConfig::load(&dir.path().join("det.json")).unwrap();
        let det = Detector::new(&cfg).unwrap();
        let spans = det.detect(&Document::new("d", "ask Zebulon Quark at z@q.io"));
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].category, Category::PersonName);
        assert_eq!(spans[0].confidence, 0.7);
    }

    #[test]
    fn noisy_or_examples() {
        assert_eq!(disclosure_probability(&[], FieldSelector::Content).unwrap(), 0.0);
        let one = [span(Field::Content, 0.5)];
        assert_eq!(disclosure_probability(&one, FieldSelector::Content).unwrap(), 0.5);
        let two = [span(Field::Content, 0.5), span(Field::Content, 0.5)];
        assert_eq!(disclosure_probability(&two, FieldSelector::Content).unwrap(), 0.75);
    }

    #[test]
    fn wrong_field_is_contract_error() {
        let s = [span(Field::Metadata("author".into()), 0.5)];
        assert!(matches!(
            disclosure_probability(&s, FieldSelector::Content),
            Err(DetectError::Contract(_))
        ));
    }

    #[test]
    fn loss_examples() {
        let l = privacy_loss(1.0, 1.0).unwrap();
        assert_eq!((l.loss_content, l.loss_metadata, l.loss_total), (0.0, 0.0, 0.0));

        let l = privacy_loss((-1.0f64).exp(), 1.0).unwrap();
        assert!((l.loss_content - 1.0).abs() < 1e-15);
        assert_eq!(l.loss_metadata, 0.0);

        // ln(1e9) = 9 ln 10 = 9 * 2.302585092994046 = 20.72326583694641
        let l = privacy_loss(0.0, 0.0).unwrap();
        assert!((l.loss_content - 20.723_265_836_946_41).abs() < 1e-9);
        assert!((l.loss_total - 41.446_531_673_892_82).abs() < 1e-9);

        assert!(matches!(privacy_loss(1.1, 0.0), Err(DetectError::Domain(_))));
        assert!(matches!(privacy_loss(0.0, f64::NAN), Err(DetectError::Domain(_))));
    }

    #[test]
    fn assess_partitions_fields() {
        let spans = [
            span(Field::Content, 0.5),
            span(Field::Metadata("author".into()), 0.8),
        ];
        let a = assess("d", &spans).unwrap();
        assert_eq!(a.p_content, 0.5);
        assert_eq!(a.p_metadata, 0.8);
        assert_eq!(a.loss_total, a.loss_content + a.loss_metadata);
    }
}
