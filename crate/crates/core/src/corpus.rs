//! Document model, line-delimited ingestion and event-sourced corpus updates.
//!
//! A [`Corpus`] is an immutable snapshot. [`Corpus::apply_update`] returns a
//! new snapshot and leaves its receiver untouched, so snapshots can be shared
//! freely across threads while a single writer advances the history.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::fsio;

/// Canonical metadata keys. Free keys are allowed alongside them.
pub const CANONICAL_METADATA_KEYS: [&str; 4] = ["author", "timestamp", "source", "location"];

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub content: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    #[serde(default)]
    pub version: u64,
}

impl Document {
    pub fn new(id: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            content: content.into(),
            metadata: BTreeMap::new(),
            version: 0,
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusUpdate {
    pub update_index: u64,
    #[serde(default)]
    pub added: Vec<Document>,
    #[serde(default)]
    pub removed: Vec<String>,
    #[serde(default)]
    pub modified: Vec<Document>,
}

impl CorpusUpdate {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.modified.is_empty()
    }

    /// Ids touched by this update that are present after it is applied.
    pub fn changed_ids(&self) -> impl Iterator<Item = &str> {
        self.added
            .iter()
            .chain(self.modified.iter())
            .map(|d| d.id.as_str())
    }

    /// Serializes the update in the line-delimited record format accepted by [`ingest`].
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (op, doc) in self
            .added
            .iter()
            .map(|d| (RecordOp::Add, d))
            .chain(self.modified.iter().map(|d| (RecordOp::Modify, d)))
        {
            let rec = WireRecord {
                id: doc.id.clone(),
                content: Some(doc.content.clone()),
                metadata: doc
                    .metadata
                    .iter()
                    .map(|(k, v)| (k.clone(), Value::String(v.clone())))
                    .collect(),
                op,
            };
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
        for id in &self.removed {
            let rec = WireRecord {
                id: id.clone(),
                content: None,
                metadata: BTreeMap::new(),
                op: RecordOp::Remove,
            };
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    fn validate_disjoint(&self) -> Result<(), CorpusError> {
        let mut seen = HashSet::new();
        let ids = self
            .added
            .iter()
            .map(|d| &d.id)
            .chain(self.removed.iter())
            .chain(self.modified.iter().map(|d| &d.id));
        for id in ids {
            if !seen.insert(id) {
                return Err(CorpusError::ConflictingOperations(id.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RecordOp {
    #[default]
    Add,
    Modify,
    Remove,
}

impl RecordOp {
    fn is_add(&self) -> bool {
        matches!(self, RecordOp::Add)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireRecord {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    content: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    metadata: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "RecordOp::is_add")]
    op: RecordOp,
}

/// A problem with one input line. Line numbers are 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

fn join_errors(errs: &[RecordError]) -> String {
    errs.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{} malformed record(s): {}", .0.len(), join_errors(.0))]
    Malformed(Vec<RecordError>),
    #[error("duplicate document id {0:?} in update")]
    DuplicateId(String),
    #[error("read failed: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("stale update: corpus is at epoch {epoch}, update has index {update_index}")]
    Stale { epoch: u64, update_index: u64 },
    #[error("document {0:?} does not exist")]
    MissingDocument(String),
    #[error("document {0:?} already exists")]
    DuplicateDocument(String),
    #[error("id {0:?} appears in more than one operation list")]
    ConflictingOperations(String),
    #[error("invalid document: {0}")]
    InvalidDocument(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("corpus i/o on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad manifest: {0}")]
    Manifest(String),
}

fn coerce_metadata_value(v: Value) -> String {
    match v {
        Value::String(s) => s,
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Reads line-delimited document records into a single update.
///
/// Blank lines are skipped. Malformed lines are collected and reported
/// together. A repeated id rejects the whole update. The returned update has
/// `update_index` 0; the caller assigns the real index.
pub fn ingest<R: BufRead>(reader: R) -> Result<CorpusUpdate, IngestError> {
    let mut update = CorpusUpdate::default();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    let mut duplicate = None;

    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: WireRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                errors.push(RecordError {
                    line: lineno,
                    message: e.to_string(),
                });
                continue;
            }
        };
        if rec.id.is_empty() {
            errors.push(RecordError {
                line: lineno,
                message: "empty id".into(),
            });
            continue;
        }
        if !seen.insert(rec.id.clone()) && duplicate.is_none() {
            duplicate = Some(rec.id.clone());
        }
        let metadata: BTreeMap<String, String> = rec
            .metadata
            .into_iter()
            .map(|(k, v)| (k, coerce_metadata_value(v)))
            .collect();
        match rec.op {
            RecordOp::Remove => update.removed.push(rec.id),
            op => {
                let Some(content) = rec.content else {
                    errors.push(RecordError {
                        line: lineno,
                        message: "missing field `content`".into(),
                    });
                    continue;
                };
                let doc = Document {
                    id: rec.id,
                    content,
                    metadata,
                    version: 0,
                };
                if op == RecordOp::Modify {
                    update.modified.push(doc);
                } else {
                    update.added.push(doc);
                }
            }
        }
    }

    if !errors.is_empty() {
        return Err(IngestError::Malformed(errors));
    }
    if let Some(id) = duplicate {
        return Err(IngestError::DuplicateId(id));
    }
    Ok(update)
}

pub fn ingest_str(text: &str) -> Result<CorpusUpdate, IngestError> {
    ingest(text.as_bytes())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    documents: BTreeMap<String, Document>,
    history: Vec<CorpusUpdate>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of applied updates.
    pub fn epoch(&self) -> u64 {
        self.history.len() as u64
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.documents.contains_key(id)
    }

    /// Documents in id order.
    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.documents.values()
    }

    pub fn ids(&self) -> BTreeSet<&str> {
        self.documents.keys().map(String::as_str).collect()
    }

    pub fn history(&self) -> &[CorpusUpdate] {
        &self.history
    }

    /// A corpus with the given documents and a single synthetic update adding them.
    pub fn from_documents<I: IntoIterator<Item = Document>>(docs: I) -> Result<Self, CorpusError> {
        let update = CorpusUpdate {
            update_index: 0,
            added: docs.into_iter().collect(),
            ..Default::default()
        };
        Corpus::new().apply_update(update)
    }

    /// Applies `update` and returns the next snapshot.
    pub fn apply_update(&self, update: CorpusUpdate) -> Result<Corpus, CorpusError> {
        if update.update_index != self.epoch() {
            return Err(CorpusError::Stale {
                epoch: self.epoch(),
                update_index: update.update_index,
            });
        }
        update.validate_disjoint()?;

        let mut documents = self.documents.clone();
        for id in &update.removed {
            if documents.remove(id).is_none() {
                return Err(CorpusError::MissingDocument(id.clone()));
            }
        }
        for doc in &update.modified {
            check_document(doc)?;
            let Some(prev) = documents.get(&doc.id) else {
                return Err(CorpusError::MissingDocument(doc.id.clone()));
            };
            let next = Document {
                version: prev.version + 1,
                ..doc.clone()
            };
            documents.insert(doc.id.clone(), next);
        }
        for doc in &update.added {
            check_document(doc)?;
            if documents.contains_key(&doc.id) {
                return Err(CorpusError::DuplicateDocument(doc.id.clone()));
            }
            documents.insert(
                doc.id.clone(),
                Document {
                    version: 0,
                    ..doc.clone()
                },
            );
        }

        let mut history = self.history.clone();
        history.push(update);
        Ok(Corpus { documents, history })
    }

    /// Rebuilds a corpus from an update history.
    pub fn replay<I: IntoIterator<Item = CorpusUpdate>>(updates: I) -> Result<Corpus, CorpusError> {
        updates
            .into_iter()
            .try_fold(Corpus::new(), |c, u| c.apply_update(u))
    }

    /// Writes the history as `update-<index>.jsonl` files plus a manifest.
    pub fn save_history(&self, dir: &Path) -> Result<(), CorpusError> {
        let io_err = |source| CorpusError::Io {
            path: dir.display().to_string(),
            source,
        };
        fs::create_dir_all(dir).map_err(io_err)?;
        for u in &self.history {
            let path = dir.join(update_file_name(u.update_index));
            fsio::write_atomic(&path, u.to_jsonl().as_bytes()).map_err(io_err)?;
        }
        let manifest = Manifest {
            updates: self.history.iter().map(|u| u.update_index).collect(),
        };
        let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fsio::write_atomic(&dir.join(MANIFEST_FILE), body.as_bytes()).map_err(io_err)
    }
}

fn check_document(doc: &Document) -> Result<(), CorpusError> {
    if doc.id.is_empty() {
        return Err(CorpusError::InvalidDocument("empty id".into()));
    }
    Ok(())
}

pub fn update_file_name(index: u64) -> String {
    format!("update-{index}.jsonl")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub updates: Vec<u64>,
}

/// Loads the ordered update files listed in a history directory's manifest.
pub fn load_updates(dir: &Path) -> Result<Vec<CorpusUpdate>, CorpusError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|source| CorpusError::Io {
        path: manifest_path.display().to_string(),
        source,
    })?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| CorpusError::Manifest(e.to_string()))?;
    for w in manifest.updates.windows(2) {
        if w[1] <= w[0] {
            return Err(CorpusError::Manifest(format!(
                "indices not strictly increasing: {} then {}",
                w[0], w[1]
            )));
        }
    }
    let mut out = Vec::with_capacity(manifest.updates.len());
    for idx in manifest.updates {
        let path = dir.join(update_file_name(idx));
        let file = fs::File::open(&path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut update = ingest(std::io::BufReader::new(file))?;
        update.update_index = idx;
        out.push(update);
    }
    Ok(out)
}

/// Loads a corpus from a history directory or from a single record file.
pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    if path.is_dir() {
        Corpus::replay(load_updates(path)?)
    } else {
        let file = fs::File::open(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let update = ingest(std::io::BufReader::new(file))?;
        Corpus::new().apply_update(update)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ingest_single_record() {
        let u = ingest_str(r#"{"id":"d1","content":"hello","metadata":{"author":"a"}}"#).unwrap();
        assert_eq!(u.added.len(), 1);
        assert_eq!(u.added[0].metadata["author"], "a");
        assert_eq!(u.added[0].version, 0);
        assert!(u.removed.is_empty() && u.modified.is_empty());
    }

    #[test]
    fn ingest_empty_stream() {
        let u = ingest_str("").unwrap();
        assert!(u.is_empty());
    }

    #[test]
    fn ingest_duplicate_id_rejected() {
        let err = ingest_str("{\"id\":\"d1\",\"content\":\"a\"}\n{\"id\":\"d1\",\"content\":\"b\"}\n")
            .unwrap_err();
        match err {
            IngestError::DuplicateId(id) => assert_eq!(id, "d1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ingest_collects_malformed_lines() {
        let text = "{\"id\":\"ok\",\"content\":\"x\"}\nnot json\n{\"id\":\"x\"}\n";
        match ingest_str(text).unwrap_err() {
            IngestError::Malformed(errs) => {
                assert_eq!(errs.iter().map(|e| e.line).collect::<Vec<_>>(), vec![2, 3]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn metadata_values_coerced_to_strings() {
        let u = ingest_str(r#"{"id":"d","content":"c","metadata":{"n":3,"b":true,"z":null}}"#).unwrap();
        let m = &u.added[0].metadata;
        assert_eq!(m["n"], "3");
        assert_eq!(m["b"], "true");
        assert_eq!(m["z"], "");
    }

    #[test]
    fn ingest_preserves_order() {
        let text = (0..5)
            .map(|i| format!("{{\"id\":\"d{i}\",\"content\":\"c\"}}"))
            .collect::<Vec<_>>()
            .join("\n");
        let u = ingest_str(&text).unwrap();
        let ids: Vec<_> = u.added.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["d0", "d1", "d2", "d3", "d4"]);
    }

    #[test]
    fn apply_add_then_remove() {
        let c0 = Corpus::new();
        let c1 = c0
            .apply_update(CorpusUpdate {
                update_index: 0,
                added: vec![Document::new("d1", "x")],
                ..Default::default()
            })
            .unwrap();
        assert_eq!((c1.len(), c1.epoch()), (1, 1));
        let c2 = c1
            .apply_update(CorpusUpdate {
                update_index: 1,
                removed: vec!["d1".into()],
                ..Default::default()
            })
            .unwrap();
        assert!(c2.is_empty());
        assert_eq!(c2.epoch(), 2);
        // input snapshot untouched
        assert_eq!(c1.len(), 1);
    }

    #[test]
    fn stale_update_rejected() {
        let mut c = Corpus::new();
        for i in 0..3 {
            c = c
                .apply_update(CorpusUpdate {
                    update_index: i,
                    ..Default::default()
                })
                .unwrap();
        }
        let err = c
            .apply_update(CorpusUpdate {
                update_index: 5,
                ..Default::default()
            })
            .unwrap_err();
        assert!(matches!(err, CorpusError::Stale { epoch: 3, update_index: 5 }));
    }

    #[test]
    fn modify_bumps_version() {
        let c = Corpus::from_documents([Document::new("d", "a")]).unwrap();
        let c = c
            .apply_update(CorpusUpdate {
                update_index: 1,
                modified: vec![Document::new("d", "b")],
                ..Default::default()
            })
            .unwrap();
        assert_eq!(c.get("d").unwrap().version, 1);
        assert_eq!(c.get("d").unwrap().content, "b");
    }

    #[test]
    fn unknown_ids_and_conflicts() {
        let c = Corpus::new();
        let err = c
            .apply_update(CorpusUpdate {
                update_index: 0,
                removed: vec!["nope".into()],
                ..Default::default()
            })
            .unwrap_err();
        assert!(matches!(err, CorpusError::MissingDocument(_)));

        let c = Corpus::from_documents([Document::new("d", "a")]).unwrap();
        let err = c
            .apply_update(CorpusUpdate {
                update_index: 1,
                removed: vec!["d".into()],
                modified: vec![Document::new("d", "b")],
                ..Default::default()
            })
            .unwrap_err();
        assert!(matches!(err, CorpusError::ConflictingOperations(_)));
    }

    #[test]
    fn save_and_load_history() {
        let dir = tempfile::tempdir().unwrap();
        let c = Corpus::from_documents([Document::new("a", "x").with_meta("author", "p")]).unwrap();
        let c = c
            .apply_update(CorpusUpdate {
                update_index: 1,
                added: vec![Document::new("b", "y")],
                modified: vec![Document::new("a", "z")],
                ..Default::default()
            })
            .unwrap();
        c.save_history(dir.path()).unwrap();
        let loaded = load_corpus(dir.path()).unwrap();
        assert_eq!(loaded, c);
    }
}
