//! Text transforms applied to detected spans: masking, generalization and
//! keyed pseudonymization.

use std::collections::BTreeMap;

use hmac::{Hmac, KeyInit, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use super::MechanismError;
use crate::corpus::Document;
use crate::detect::{Category, Field, SensitiveSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RedactMode {
    Mask,
    Generalize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TransformMode {
    Mask,
    Generalize,
    Pseudonymize,
}

impl std::str::FromStr for TransformMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "MASK" => Ok(TransformMode::Mask),
            "GENERALIZE" => Ok(TransformMode::Generalize),
            "PSEUDONYMIZE" => Ok(TransformMode::Pseudonymize),
            _ => Err(format!("unknown mode {s:?} (MASK, GENERALIZE, PSEUDONYMIZE)")),
        }
    }
}

pub fn mask_token(c: Category) -> String {
    format!("[REDACTED:{c}]")
}

pub fn generic_token(c: Category) -> &'static str {
    match c {
        Category::Email => "[AN EMAIL ADDRESS]",
        Category::Phone => "[A PHONE NUMBER]",
        Category::IdNumber => "[AN ID NUMBER]",
        Category::CreditCard => "[A CARD NUMBER]",
        Category::IpAddress => "[AN IP ADDRESS]",
        Category::PersonName => "[A PERSON]",
        Category::Date => "[A DATE]",
        Category::Location => "[A LOCATION]",
    }
}

/// A maximal run of overlapping spans in one field. The category is that of
/// the earliest span in the run; MASK wins over GENERALIZE.
#[derive(Debug)]
struct Region {
    start: usize,
    end: usize,
    category: Category,
    mode: RedactMode,
}

/// Checks every span against `doc` and merges overlapping spans per field.
fn regions(
    doc: &Document,
    spans: &[(SensitiveSpan, RedactMode)],
) -> Result<BTreeMap<Field, Vec<Region>>, MechanismError> {
    let mut by_field: BTreeMap<Field, Vec<(&SensitiveSpan, RedactMode)>> = BTreeMap::new();
    for (s, mode) in spans {
        if s.doc_id != doc.id {
            return Err(MechanismError::Span(format!(
                "span for {:?} applied to {:?}",
                s.doc_id, doc.id
            )));
        }
        let text = s.field.text(doc).ok_or_else(|| {
            MechanismError::Span(format!("{} does not exist in {:?}", s.field, doc.id))
        })?;
        if !(s.start < s.end
            && s.end <= text.len()
            && text.is_char_boundary(s.start)
            && text.is_char_boundary(s.end))
        {
            return Err(MechanismError::Span(format!(
                "span {}..{} out of bounds for {} (len {})",
                s.start,
                s.end,
                s.field,
                text.len()
            )));
        }
        by_field.entry(s.field.clone()).or_default().push((s, *mode));
    }
    let mut out = BTreeMap::new();
    for (field, mut list) in by_field {
        list.sort_by_key(|(s, _)| (s.start, s.category, s.end));
        let mut merged: Vec<Region> = Vec::new();
        for (s, mode) in list {
            match merged.last_mut() {
                Some(r) if s.start < r.end => {
                    r.end = r.end.max(s.end);
                    if mode == RedactMode::Mask {
                        r.mode = RedactMode::Mask;
                    }
                }
                _ => merged.push(Region {
                    start: s.start,
                    end: s.end,
                    category: s.category,
                    mode,
                }),
            }
        }
        out.insert(field, merged);
    }
    Ok(out)
}

fn rewrite<F>(
    doc: &Document,
    spans: &[(SensitiveSpan, RedactMode)],
    mut replace: F,
) -> Result<Document, MechanismError>
where
    F: FnMut(Category, RedactMode, &str) -> String,
{
    let regions = regions(doc, spans)?;
    let mut next = doc.clone();
    for (field, regs) in regions {
        let text = field.text(doc).expect("checked in regions");
        let mut out = String::with_capacity(text.len());
        let mut cursor = 0;
        for r in regs {
            out.push_str(&text[cursor..r.start]);
            out.push_str(&replace(r.category, r.mode, &text[r.start..r.end]));
            cursor = r.end;
        }
        out.push_str(&text[cursor..]);
        match field {
            Field::Content => next.content = out,
            Field::Metadata(k) => {
                next.metadata.insert(k, out);
            }
        }
    }
    if next.content != doc.content || next.metadata != doc.metadata {
        next.version = doc.version + 1;
    }
    Ok(next)
}

/// Replaces every span with `[REDACTED:<CATEGORY>]` (MASK) or a generic
/// phrase such as `[AN EMAIL ADDRESS]` (GENERALIZE). The version is bumped
/// only when the text changes; any invalid span fails the whole call.
pub fn redact(doc: &Document, spans: &[SensitiveSpan], mode: RedactMode) -> Result<Document, MechanismError> {
    let tagged: Vec<_> = spans.iter().map(|s| (s.clone(), mode)).collect();
    redact_each(doc, &tagged)
}

/// Like [`redact`] with a mode per span. Where spans with different modes
/// overlap, MASK is applied.
pub fn redact_each(doc: &Document, spans: &[(SensitiveSpan, RedactMode)]) -> Result<Document, MechanismError> {
    rewrite(doc, spans, |c, mode, _| match mode {
        RedactMode::Mask => mask_token(c),
        RedactMode::Generalize => generic_token(c).to_string(),
    })
}

type HmacSha256 = Hmac<Sha256>;

/// Keyed, consistent placeholder assignment. The same surface text always
/// maps to the same `<CATEGORY_k>` under one key.
#[derive(Clone)]
pub struct Pseudonymizer {
    key: Vec<u8>,
}

impl std::fmt::Debug for Pseudonymizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pseudonymizer").field("key", &"[REDACTED]").finish()
    }
}

impl Pseudonymizer {
    pub fn new(key: impl AsRef<[u8]>) -> Result<Self, MechanismError> {
        let key = key.as_ref();
        if key.is_empty() {
            return Err(MechanismError::Domain("pseudonymization key must be nonempty".into()));
        }
        Ok(Self { key: key.to_vec() })
    }

    /// `k` is the first four bytes of HMAC-SHA256(key, surface) read as a
    /// big-endian integer.
    pub fn index(&self, surface: &str) -> u32 {
        let mut mac = HmacSha256::new_from_slice(&self.key).expect("HMAC takes any key length");
        mac.update(surface.as_bytes());
        let tag = mac.finalize().into_bytes();
        u32::from_be_bytes([tag[0], tag[1], tag[2], tag[3]])
    }

    pub fn placeholder(&self, category: Category, surface: &str) -> String {
        format!("<{category}_{}>", self.index(surface))
    }

    pub fn apply(&self, doc: &Document, spans: &[SensitiveSpan]) -> Result<Document, MechanismError> {
        let tagged: Vec<_> = spans.iter().map(|s| (s.clone(), RedactMode::Mask)).collect();
        rewrite(doc, &tagged, |c, _, surface| self.placeholder(c, surface))
    }
}

pub fn pseudonymize(doc: &Document, spans: &[SensitiveSpan], key: &[u8]) -> Result<Document, MechanismError> {
    Pseudonymizer::new(key)?.apply(doc, spans)
}
