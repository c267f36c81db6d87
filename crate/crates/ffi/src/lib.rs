//! C ABI over the metrics and the reference n-gram model.
//!
//! Every fallible function returns an [`AutophagyStatus`]. On failure the
//! message is available from [`autophagy_last_error`] on the same thread.
//! Handles are opaque; free them with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;
use std::sync::Arc;

use autophagy::corpus::{Document, Origin};
use autophagy::metrics;
use autophagy::model::{LanguageModel, NgramConfig, NgramModel, SamplingConfig};
use autophagy::tokenizer::Vocabulary;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AutophagyStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    Io = 4,
    Model = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

pub struct AutophagyVocab {
    inner: Arc<Vocabulary>,
}

pub struct AutophagyModel {
    inner: NgramModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Fail(AutophagyStatus, String);

impl Fail {
    fn arg(msg: impl Into<String>) -> Self {
        Fail(AutophagyStatus::InvalidArgument, msg.into())
    }
}

impl From<autophagy::Error> for Fail {
    fn from(e: autophagy::Error) -> Self {
        let status = match e {
            autophagy::Error::Io { .. } | autophagy::Error::Format { .. } => AutophagyStatus::Io,
            autophagy::Error::Model(_) => AutophagyStatus::Model,
            _ => AutophagyStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

impl From<autophagy::model::ModelError> for Fail {
    fn from(e: autophagy::model::ModelError) -> Self {
        Fail(AutophagyStatus::Model, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AutophagyStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AutophagyStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AutophagyStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(AutophagyStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be null only when `len` is 0, otherwise point to `len` values.
unsafe fn view<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(slice::from_raw_parts(p, len))
}

/// # Safety
/// `s` must be a valid NUL-terminated string.
unsafe fn string<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    non_null(s, what)?;
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Fail(AutophagyStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// Copies `src` into a caller buffer of `cap` elements. `written` always
/// receives the full length, so a too-small buffer can be resized.
///
/// # Safety
/// `out` must have room for `cap` elements; `written` must be writable.
unsafe fn emit<T: Copy>(src: &[T], out: *mut T, cap: usize, written: *mut usize) -> Result<(), Fail> {
    non_null(written, "written")?;
    *written = src.len();
    if src.len() > cap {
        return Err(Fail(
            AutophagyStatus::BufferTooSmall,
            format!("buffer holds {cap}, {} needed", src.len()),
        ));
    }
    if !src.is_empty() {
        non_null(out, "output buffer")?;
        ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    }
    Ok(())
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn autophagy_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static version string.
#[no_mangle]
pub extern "C" fn autophagy_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Gini coefficient of `q[0..n]`.
///
/// # Safety
/// `q` must point to `n` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn autophagy_gini(q: *const f64, n: usize, out: *mut f64) -> AutophagyStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = metrics::gini(view(q, n, "q")?)?;
        Ok(())
    })
}

/// True when some entry of `q[0..n]` strictly exceeds `tau`.
///
/// # Safety
/// `q` must point to `n` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn autophagy_collapsed(
    q: *const f64,
    n: usize,
    tau: f64,
    out: *mut bool,
) -> AutophagyStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = metrics::collapsed(view(q, n, "q")?, tau);
        Ok(())
    })
}

/// Normalized entropy of the token frequencies in `tokens[0..n]`.
///
/// # Safety
/// `tokens` must point to `n` ids and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn autophagy_entropy(
    tokens: *const u32,
    n: usize,
    out: *mut f64,
) -> AutophagyStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = metrics::linguistic_entropy(view(tokens, n, "tokens")?)?;
        Ok(())
    })
}

/// Builds a vocabulary from `n` NUL-terminated texts.
///
/// # Safety
/// `texts` must point to `n` valid strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn autophagy_vocab_build(
    texts: *const *const c_char,
    n: usize,
    min_count: u64,
    out: *mut *mut AutophagyVocab,
) -> AutophagyStatus {
    guard(|| {
        non_null(out, "out")?;
        let texts = view(texts, n, "texts")?
            .iter()
            .map(|&t| string(t, "text"))
            .collect::<Result<Vec<_>, _>>()?;
        let vocab = Vocabulary::build(texts, min_count)?;
        *out = Box::into_raw(Box::new(AutophagyVocab {
            inner: Arc::new(vocab),
        }));
        Ok(())
    })
}

/// # Safety
/// `vocab` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn autophagy_vocab_free(vocab: *mut AutophagyVocab) {
    if !vocab.is_null() {
        drop(Box::from_raw(vocab));
    }
}

/// Number of ids, reserved ones included. 0 for a null handle.
///
/// # Safety
/// `vocab` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn autophagy_vocab_len(vocab: *const AutophagyVocab) -> usize {
    vocab.as_ref().map_or(0, |v| v.inner.len())
}

/// Token ids of `text`. Returns `BUFFER_TOO_SMALL` with the needed length
/// in `written` when `cap` is short.
///
/// # Safety
/// `vocab` must be live, `text` a valid string, `out` room for `cap` ids.
#[no_mangle]
pub unsafe extern "C" fn autophagy_vocab_tokenize(
    vocab: *const AutophagyVocab,
    text: *const c_char,
    out: *mut u32,
    cap: usize,
    written: *mut usize,
) -> AutophagyStatus {
    guard(|| {
        non_null(vocab, "vocab")?;
        let ids = (*vocab).inner.tokenize(string(text, "text")?);
        emit(&ids, out, cap, written)
    })
}

/// Untrained reference model over `vocab` (the handle is not consumed).
///
/// # Safety
/// `vocab` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn autophagy_model_new(
    vocab: *const AutophagyVocab,
    order: usize,
    alpha: f64,
    backoff_lambda: f64,
    out: *mut *mut AutophagyModel,
) -> AutophagyStatus {
    guard(|| {
        non_null(vocab, "vocab")?;
        non_null(out, "out")?;
        let config = NgramConfig {
            order,
            alpha,
            backoff_lambda,
        };
        let model = NgramModel::new((*vocab).inner.clone(), config)?;
        *out = Box::into_raw(Box::new(AutophagyModel { inner: model }));
        Ok(())
    })
}

/// Loads a JSON snapshot.
///
/// # Safety
/// `path` must be a valid string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn autophagy_model_load(
    path: *const c_char,
    out: *mut *mut AutophagyModel,
) -> AutophagyStatus {
    guard(|| {
        non_null(out, "out")?;
        let model = NgramModel::load(&PathBuf::from(string(path, "path")?))?;
        *out = Box::into_raw(Box::new(AutophagyModel { inner: model }));
        Ok(())
    })
}

/// # Safety
/// `model` must be live and `path` a valid string.
#[no_mangle]
pub unsafe extern "C" fn autophagy_model_save(
    model: *const AutophagyModel,
    path: *const c_char,
) -> AutophagyStatus {
    guard(|| {
        non_null(model, "model")?;
        (*model).inner.save(&PathBuf::from(string(path, "path")?))?;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn autophagy_model_free(model: *mut AutophagyModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Adds `n_docs` documents laid end to end in `tokens`, the i-th of
/// length `lengths[i]`, with count weight `weight`.
///
/// # Safety
/// `model` must be live; `lengths` must hold `n_docs` values and `tokens`
/// their sum.
#[no_mangle]
pub unsafe extern "C" fn autophagy_model_fine_tune(
    model: *mut AutophagyModel,
    tokens: *const u32,
    lengths: *const usize,
    n_docs: usize,
    weight: f64,
) -> AutophagyStatus {
    guard(|| {
        non_null(model, "model")?;
        let lengths = view(lengths, n_docs, "lengths")?;
        let total = lengths
            .iter()
            .try_fold(0usize, |a, &l| a.checked_add(l))
            .ok_or_else(|| Fail::arg("document lengths overflow"))?;
        let tokens = view(tokens, total, "tokens")?;
        let mut docs = Vec::with_capacity(n_docs);
        let mut at = 0;
        for (i, &len) in lengths.iter().enumerate() {
            docs.push(Document::new(
                format!("ffi:{i}"),
                tokens[at..at + len].to_vec(),
                Origin::Human,
                "ffi",
            )?);
            at += len;
        }
        (*model).inner.fine_tune(&docs, weight)?;
        Ok(())
    })
}

/// The `n` most likely next tokens after `context`, descending, written to
/// `ids` and `probs` (both `cap` long).
///
/// # Safety
/// `model` must be live; `context` must hold `context_len` ids; `ids` and
/// `probs` must have room for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn autophagy_model_top_n(
    model: *const AutophagyModel,
    context: *const u32,
    context_len: usize,
    n: usize,
    ids: *mut u32,
    probs: *mut f64,
    cap: usize,
    written: *mut usize,
) -> AutophagyStatus {
    guard(|| {
        non_null(model, "model")?;
        let q = (*model)
            .inner
            .top_n_distribution(view(context, context_len, "context")?, n)?;
        let (i, p): (Vec<u32>, Vec<f64>) = q.entries().iter().copied().unzip();
        emit(&i, ids, cap, written)?;
        emit(&p, probs, cap, written)
    })
}

/// Surplexity of `tokens[0..n]`.
///
/// # Safety
/// `model` must be live, `tokens` hold `n` ids, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn autophagy_model_surplexity(
    model: *const AutophagyModel,
    tokens: *const u32,
    n: usize,
    out: *mut f64,
) -> AutophagyStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        *out = metrics::surplexity(&(*model).inner, view(tokens, n, "tokens")?)?;
        Ok(())
    })
}

/// Samples up to `max_new` tokens after `prompt`. A `temperature` of 0
/// selects greedy decoding.
///
/// # Safety
/// `model` must be live, `prompt` hold `prompt_len` ids, `out` room for
/// `cap` ids.
#[no_mangle]
pub unsafe extern "C" fn autophagy_model_generate(
    model: *const AutophagyModel,
    prompt: *const u32,
    prompt_len: usize,
    max_new: usize,
    temperature: f64,
    top_k: usize,
    seed: u64,
    out: *mut u32,
    cap: usize,
    written: *mut usize,
) -> AutophagyStatus {
    guard(|| {
        non_null(model, "model")?;
        let sampling = if temperature == 0.0 {
            SamplingConfig::greedy()
        } else {
            SamplingConfig {
                temperature,
                top_k,
                seed,
                ..SamplingConfig::default()
            }
        };
        let toks = (*model)
            .inner
            .generate_continuation(view(prompt, prompt_len, "prompt")?, max_new, &sampling)?;
        emit(&toks, out, cap, written)
    })
}
