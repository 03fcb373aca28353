//! C ABI over the privcurate library.
//!
//! Corpora and ledgers are opaque handles. Every function returns a
//! [`PcStatus`]; on failure a message is kept per thread and can be fetched
//! with [`pc_last_error`]. Structured values cross the boundary as JSON
//! strings, which the caller releases with [`pc_string_free`]. Handles are
//! not thread safe; share one across threads only with external locking.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use privcurate::accountant::{
    analyze, entropy, run_update_cycle, AccountError, CycleConfig, EntropyGroup, Ledger, ReleaseRecord,
};
use privcurate::corpus::{ingest_str, Corpus, CorpusError, IngestError};
use privcurate::detect::{assess, privacy_loss, Detector, DetectorConfig};
use privcurate::mechanisms::{laplace_release, PrivacyReceipt, QuerySpec};

/// Status codes returned by every `pc_*` function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Malformed input, bad configuration or a violated precondition.
    Invalid = 3,
    Io = 4,
    /// The ledger refused a release; nothing was recorded.
    BudgetRefused = 5,
    NotFound = 6,
    /// A Rust panic was caught at the boundary.
    Internal = 7,
}

/// A document collection and its update history.
pub struct PcCorpus {
    inner: Corpus,
}

/// A privacy budget ledger.
pub struct PcLedger {
    inner: Ledger,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(PcStatus, String);

impl Failure {
    fn invalid(msg: impl ToString) -> Self {
        Failure(PcStatus::Invalid, msg.to_string())
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        let code = match e {
            CorpusError::Io { .. } | CorpusError::Ingest(IngestError::Io(_)) => PcStatus::Io,
            _ => PcStatus::Invalid,
        };
        Failure(code, e.to_string())
    }
}

impl From<AccountError> for Failure {
    fn from(e: AccountError) -> Self {
        let code = match e {
            AccountError::Io(_) => PcStatus::Io,
            _ if e.is_refusal() => PcStatus::BudgetRefused,
            _ => PcStatus::Invalid,
        };
        Failure(code, e.to_string())
    }
}

macro_rules! invalid_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::invalid(e)
            }
        }
    )*};
}

invalid_from!(
    privcurate::detect::DetectError,
    privcurate::mechanisms::MechanismError,
    serde_json::Error
);

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PcStatus::Ok,
        Ok(Err(Failure(code, msg))) => {
            set_error(&msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            PcStatus::Internal
        }
    }
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(PcStatus::NullPointer, "null string argument".into()));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(PcStatus::InvalidUtf8, e.to_string()))
}

unsafe fn opt_text<'a>(p: *const c_char) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p).map(Some)
    }
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(PcStatus::NullPointer, "null handle".into()))
}

unsafe fn handle_mut<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(PcStatus::NullPointer, "null handle".into()))
}

unsafe fn put<T>(out: *mut T, v: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(PcStatus::NullPointer, "null output pointer".into()));
    }
    out.write(v);
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure(PcStatus::Internal, "output contains NUL".into()))?;
    put(out, c.into_raw())
}

unsafe fn put_json<T: serde::Serialize>(out: *mut *mut c_char, v: &T) -> Result<(), Failure> {
    put_string(out, serde_json::to_string(v)?)
}

fn detector(config_json: Option<&str>) -> Result<Detector, Failure> {
    let cfg = match config_json {
        Some(j) => DetectorConfig::from_json(j)?,
        None => DetectorConfig::default(),
    };
    Ok(Detector::new(&cfg)?)
}

/// Returns a copy of the calling thread's last error message, or NULL when
/// the last call succeeded. Free it with `pc_string_free`.
#[no_mangle]
pub extern "C" fn pc_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |c| c.clone().into_raw()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates an empty corpus.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pc_corpus_new(out: *mut *mut PcCorpus) -> PcStatus {
    guard(|| put(out, Box::into_raw(Box::new(PcCorpus { inner: Corpus::new() }))))
}

/// Loads a corpus from a record file or a history directory.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pc_corpus_load(path: *const c_char, out: *mut *mut PcCorpus) -> PcStatus {
    guard(|| {
        let c = privcurate::corpus::load_corpus(Path::new(text(path)?))?;
        put(out, Box::into_raw(Box::new(PcCorpus { inner: c })))
    })
}

/// Applies one update given as line-delimited records. `update_index` must
/// equal the corpus epoch. On failure the corpus is unchanged.
///
/// # Safety
/// `corpus` must be a live handle and `records` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pc_corpus_apply(corpus: *mut PcCorpus, records: *const c_char, update_index: u64) -> PcStatus {
    guard(|| {
        let c = handle_mut(corpus)?;
        let mut u = ingest_str(text(records)?).map_err(CorpusError::from)?;
        u.update_index = update_index;
        c.inner = c.inner.apply_update(u)?;
        Ok(())
    })
}

/// # Safety
/// `corpus` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pc_corpus_len(corpus: *const PcCorpus, out: *mut usize) -> PcStatus {
    guard(|| put(out, handle(corpus)?.inner.len()))
}

/// Number of updates applied so far.
///
/// # Safety
/// `corpus` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pc_corpus_epoch(corpus: *const PcCorpus, out: *mut u64) -> PcStatus {
    guard(|| put(out, handle(corpus)?.inner.epoch()))
}

/// # Safety
/// `corpus` must come from this library and not be used afterwards. NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn pc_corpus_free(corpus: *mut PcCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Detected spans of one document as a JSON array. `config_json` may be NULL
/// for the default detector.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pc_detect(
    corpus: *const PcCorpus,
    doc_id: *const c_char,
    config_json: *const c_char,
    out_json: *mut *mut c_char,
) -> PcStatus {
    guard(|| {
        let c = handle(corpus)?;
        let id = text(doc_id)?;
        let d = detector(opt_text(config_json)?)?;
        let doc = c
            .inner
            .get(id)
            .ok_or_else(|| Failure(PcStatus::NotFound, format!("no document {id:?}")))?;
        put_json(out_json, &d.detect(doc))
    })
}

/// Disclosure probabilities and losses of one document as JSON.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pc_assess(
    corpus: *const PcCorpus,
    doc_id: *const c_char,
    config_json: *const c_char,
    out_json: *mut *mut c_char,
) -> PcStatus {
    guard(|| {
        let c = handle(corpus)?;
        let id = text(doc_id)?;
        let d = detector(opt_text(config_json)?)?;
        let doc = c
            .inner
            .get(id)
            .ok_or_else(|| Failure(PcStatus::NotFound, format!("no document {id:?}")))?;
        put_json(out_json, &assess(id, &d.detect(doc))?)
    })
}

/// Total loss for given content and metadata disclosure probabilities.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pc_privacy_loss(p_content: f64, p_metadata: f64, out: *mut f64) -> PcStatus {
    guard(|| put(out, privacy_loss(p_content, p_metadata)?.loss_total))
}

/// Shannon entropy in bits of one distribution, scaled by `weight`. An
/// empty distribution has entropy 0.
///
/// # Safety
/// `probabilities` must point to `len` doubles (or be NULL with `len` 0).
#[no_mangle]
pub unsafe extern "C" fn pc_entropy(probabilities: *const f64, len: usize, weight: f64, out: *mut f64) -> PcStatus {
    guard(|| {
        if len == 0 {
            return put(out, 0.0);
        }
        if probabilities.is_null() {
            return Err(Failure(PcStatus::NullPointer, "null probabilities".into()));
        }
        let p = std::slice::from_raw_parts(probabilities, len);
        put(out, entropy(&[EntropyGroup::unlabeled(weight, p)])?)
    })
}

/// Weighted entropy of a JSON array of groups
/// (`[{"label": .., "weight": .., "outcomes": [[name, p], ..]}]`).
///
/// # Safety
/// `groups_json` must be NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn pc_entropy_groups(groups_json: *const c_char, out: *mut f64) -> PcStatus {
    guard(|| {
        let groups: Vec<EntropyGroup> = serde_json::from_str(text(groups_json)?)?;
        put(out, entropy(&groups)?)
    })
}

/// Laplace release of a JSON query. Writes `{"release": .., "receipt": ..}`.
/// The ledger is not consulted; pass the receipt to `pc_ledger_authorize`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pc_laplace_release(
    corpus: *const PcCorpus,
    query_json: *const c_char,
    epsilon: f64,
    seed: u64,
    test_mode: bool,
    out_json: *mut *mut c_char,
) -> PcStatus {
    guard(|| {
        let c = handle(corpus)?;
        let q: QuerySpec = serde_json::from_str(text(query_json)?)?;
        let (release, receipt) = laplace_release(&q, &c.inner, epsilon, seed, test_mode)?;
        put_json(out_json, &ReleaseRecord { release, receipt })
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pc_ledger_new(epsilon_budget: f64, out: *mut *mut PcLedger) -> PcStatus {
    guard(|| {
        let l = Ledger::new(epsilon_budget)?;
        put(out, Box::into_raw(Box::new(PcLedger { inner: l })))
    })
}

/// # Safety
/// `path` must be NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn pc_ledger_load(path: *const c_char, out: *mut *mut PcLedger) -> PcStatus {
    guard(|| {
        let l = Ledger::load(Path::new(text(path)?))?;
        put(out, Box::into_raw(Box::new(PcLedger { inner: l })))
    })
}

/// Writes the ledger atomically.
///
/// # Safety
/// `ledger` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pc_ledger_save(ledger: *const PcLedger, path: *const c_char) -> PcStatus {
    guard(|| Ok(handle(ledger)?.inner.save(Path::new(text(path)?))?))
}

/// # Safety
/// `ledger` must be a live handle; outputs valid.
#[no_mangle]
pub unsafe extern "C" fn pc_ledger_epsilon(ledger: *const PcLedger, spent: *mut f64, remaining: *mut f64) -> PcStatus {
    guard(|| {
        let l = &handle(ledger)?.inner;
        put(spent, l.epsilon_spent())?;
        put(remaining, l.epsilon_remaining())
    })
}

/// Records a JSON receipt if the budget allows it; otherwise returns
/// `PC_STATUS_BUDGET_REFUSED` and leaves the ledger unchanged.
///
/// # Safety
/// `ledger` must be a live handle; `receipt_json` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pc_ledger_authorize(ledger: *mut PcLedger, receipt_json: *const c_char) -> PcStatus {
    guard(|| {
        let l = handle_mut(ledger)?;
        let r: PrivacyReceipt = serde_json::from_str(text(receipt_json)?)?;
        Ok(l.inner.authorize_and_record(r)?)
    })
}

/// Post-hoc analysis report as JSON.
///
/// # Safety
/// `ledger` must be a live handle; `out_json` valid.
#[no_mangle]
pub unsafe extern "C" fn pc_ledger_analyze(ledger: *const PcLedger, out_json: *mut *mut c_char) -> PcStatus {
    guard(|| put_string(out_json, analyze(&handle(ledger)?.inner).to_json()))
}

/// # Safety
/// `ledger` must come from this library and not be used afterwards. NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn pc_ledger_free(ledger: *mut PcLedger) {
    if !ledger.is_null() {
        drop(Box::from_raw(ledger));
    }
}

/// Runs one update cycle: applies `records` as update `update_index`,
/// transforms and assesses the changed documents, runs the configured
/// releases and records entropy. `config_json` is a cycle configuration,
/// e.g. `{"transform": "MASK", "seed": 7, "releases": [..]}`;
/// `key` (may be NULL) is the pseudonymization key. Both handles are
/// updated only when the whole cycle succeeds.
///
/// # Safety
/// Handles must be live; strings NUL-terminated; `out_json` valid.
#[no_mangle]
pub unsafe extern "C" fn pc_run_cycle(
    corpus: *mut PcCorpus,
    ledger: *mut PcLedger,
    records: *const c_char,
    update_index: u64,
    config_json: *const c_char,
    key: *const c_char,
    out_json: *mut *mut c_char,
) -> PcStatus {
    guard(|| {
        let c = handle_mut(corpus)?;
        let l = handle_mut(ledger)?;
        let mut config: CycleConfig = serde_json::from_str(text(config_json)?)?;
        config.pseudonym_key = opt_text(key)?.map(|k| k.as_bytes().to_vec());
        let mut update = ingest_str(text(records)?).map_err(CorpusError::from)?;
        update.update_index = update_index;
        if out_json.is_null() {
            return Err(Failure(PcStatus::NullPointer, "null output pointer".into()));
        }
        let (next_corpus, next_ledger, report) =
            run_update_cycle(&c.inner, &update, &l.inner, &Detector::default(), &config)?;
        put_json(out_json, &report)?;
        c.inner = next_corpus;
        l.inner = next_ledger;
        Ok(())
    })
}
