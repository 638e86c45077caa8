// SPDX-License-Identifier: MIT OR Apache-2.0

//! C ABI over the `aglb` core.
//!
//! Every fallible function returns an [`AglbStatus`]; on failure a message is
//! available from [`aglb_last_error`] on the same thread. Handles are opaque
//! and owned by the caller, who releases them with the matching `_free`.
//! Strings are UTF-8 and NUL-terminated. Token sequences are passed as a
//! single space-separated string.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use aglb::evaluation::{evaluate, CHANCE};
use aglb::lstm::io::{from_bytes, load_checkpoint, to_bytes};
use aglb::lstm::{next_word_distribution, AblationMask, AblationMode, Checkpoint, UnitId};
use aglb::stimuli::{build_lexicon, generate_task, trials_to_jsonl, ExpandOptions, Task, Trial};
use aglb::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AglbStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Checkpoint = 4,
    Vocabulary = 5,
    Numeric = 6,
    BufferTooSmall = 7,
    Panic = 8,
    Other = 9,
}

/// A loaded language model.
pub struct AglbModel {
    ckpt: Checkpoint,
}

/// A list of stimulus trials.
pub struct AglbTrials {
    trials: Vec<Trial>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> AglbStatus {
    match e {
        Error::Argument(_) | Error::Config { .. } | Error::UnsupportedTarget { .. } => AglbStatus::InvalidArgument,
        Error::Io { .. } => AglbStatus::Io,
        Error::Checkpoint(_) => AglbStatus::Checkpoint,
        Error::Vocabulary { .. } => AglbStatus::Vocabulary,
        Error::NumericDomain(_) | Error::DivergedTraining { .. } => AglbStatus::Numeric,
        _ => AglbStatus::Other,
    }
}

struct Fail(AglbStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(AglbStatus::NullArgument, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AglbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            AglbStatus::Ok
        }
        Ok(Err(Fail(s, msg))) => {
            set_error(&msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            AglbStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(AglbStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn model_arg<'a>(m: *const AglbModel) -> Result<&'a AglbModel, Fail> {
    m.as_ref().ok_or_else(|| null("model"))
}

fn encode(ckpt: &Checkpoint, text: &str) -> Result<Vec<usize>, Fail> {
    let toks: Vec<&str> = text.split_whitespace().collect();
    Ok(ckpt.vocab.encode(&toks)?)
}

/// Mask from `n` (layer, index) pairs laid out flat.
unsafe fn mask_arg(units: *const u32, n: usize, hidden_only: bool) -> Result<AblationMask, Fail> {
    if n == 0 {
        return Ok(AblationMask::empty());
    }
    if units.is_null() {
        return Err(null("units"));
    }
    let flat = std::slice::from_raw_parts(units, 2 * n);
    let mode = if hidden_only {
        AblationMode::HiddenOnly
    } else {
        AblationMode::HiddenAndCell
    };
    Ok(AblationMask::from_units(flat.chunks(2).map(|p| UnitId::new(p[0] as usize, p[1] as usize))).with_mode(mode))
}

/// Message of the last failure on this thread ("" after a success). The
/// pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn aglb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn aglb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn aglb_model_load(path: *const c_char, out: *mut *mut AglbModel) -> AglbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ckpt = load_checkpoint(str_arg(path, "path")?).map_err(Error::from)?;
        *out = Box::into_raw(Box::new(AglbModel { ckpt }));
        Ok(())
    })
}

/// Parses a checkpoint from memory.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aglb_model_from_bytes(bytes: *const u8, len: usize, out: *mut *mut AglbModel) -> AglbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if bytes.is_null() {
            return Err(null("bytes"));
        }
        let ckpt = from_bytes(std::slice::from_raw_parts(bytes, len)).map_err(Error::from)?;
        *out = Box::into_raw(Box::new(AglbModel { ckpt }));
        Ok(())
    })
}

/// Serializes a model. With `buf` null or too small, writes the required
/// size to `needed` and returns `BufferTooSmall`.
///
/// # Safety
/// `buf` must be writable for `cap` bytes when non-null; `needed` writable.
#[no_mangle]
pub unsafe extern "C" fn aglb_model_to_bytes(model: *const AglbModel, buf: *mut u8, cap: usize, needed: *mut usize) -> AglbStatus {
    guard(|| {
        let m = model_arg(model)?;
        if needed.is_null() {
            return Err(null("needed"));
        }
        let bytes = to_bytes(&m.ckpt);
        *needed = bytes.len();
        if buf.is_null() || cap < bytes.len() {
            return Err(Fail(AglbStatus::BufferTooSmall, format!("need {} bytes", bytes.len())));
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn aglb_model_free(model: *mut AglbModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Vocabulary size, hidden units per layer and layer count.
///
/// # Safety
/// Output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn aglb_model_dims(
    model: *const AglbModel,
    vocab_size: *mut usize,
    hidden_dim: *mut usize,
    num_layers: *mut usize,
) -> AglbStatus {
    guard(|| {
        let m = model_arg(model)?;
        if vocab_size.is_null() || hidden_dim.is_null() || num_layers.is_null() {
            return Err(null("output"));
        }
        *vocab_size = m.ckpt.vocab.len();
        *hidden_dim = m.ckpt.hidden_dim();
        *num_layers = m.ckpt.num_layers();
        Ok(())
    })
}

/// Index of `token` in the model vocabulary.
///
/// # Safety
/// `token` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn aglb_model_token_index(model: *const AglbModel, token: *const c_char, out: *mut usize) -> AglbStatus {
    guard(|| {
        let m = model_arg(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = m.ckpt.vocab.require(str_arg(token, "token")?)?;
        Ok(())
    })
}

/// Next-word distribution after `prefix`, written to `probs` (length
/// `cap` ≥ vocabulary size). `units` holds `n_units` (layer, index) pairs
/// to ablate.
///
/// # Safety
/// `prefix` NUL-terminated; `probs` writable for `cap` doubles; `units`
/// readable for `2 * n_units` values when `n_units > 0`.
#[no_mangle]
pub unsafe extern "C" fn aglb_next_word_distribution(
    model: *const AglbModel,
    prefix: *const c_char,
    units: *const u32,
    n_units: usize,
    hidden_only: bool,
    probs: *mut f64,
    cap: usize,
) -> AglbStatus {
    guard(|| {
        let m = model_arg(model)?;
        if probs.is_null() {
            return Err(null("probs"));
        }
        let v = m.ckpt.vocab.len();
        if cap < v {
            return Err(Fail(AglbStatus::BufferTooSmall, format!("need {v} doubles")));
        }
        let ids = encode(&m.ckpt, str_arg(prefix, "prefix")?)?;
        let dist = next_word_distribution(&m.ckpt, &ids, &mask_arg(units, n_units, hidden_only)?)?;
        ptr::copy_nonoverlapping(dist.as_ptr(), probs, v);
        Ok(())
    })
}

/// Probabilities of the two candidate continuations of `prefix`.
///
/// # Safety
/// String arguments NUL-terminated; outputs writable; `units` as in
/// [`aglb_next_word_distribution`].
#[no_mangle]
pub unsafe extern "C" fn aglb_score_pair(
    model: *const AglbModel,
    prefix: *const c_char,
    correct: *const c_char,
    wrong: *const c_char,
    units: *const u32,
    n_units: usize,
    p_correct: *mut f64,
    p_wrong: *mut f64,
) -> AglbStatus {
    guard(|| {
        let m = model_arg(model)?;
        if p_correct.is_null() || p_wrong.is_null() {
            return Err(null("output"));
        }
        let ids = encode(&m.ckpt, str_arg(prefix, "prefix")?)?;
        let c = m.ckpt.vocab.require(str_arg(correct, "correct")?)?;
        let w = m.ckpt.vocab.require(str_arg(wrong, "wrong")?)?;
        let dist = next_word_distribution(&m.ckpt, &ids, &mask_arg(units, n_units, false)?)?;
        *p_correct = dist[c];
        *p_wrong = dist[w];
        Ok(())
    })
}

/// Generates `n` trials of the named task.
///
/// # Safety
/// `task` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn aglb_trials_generate(task: *const c_char, n: usize, seed: u64, out: *mut *mut AglbTrials) -> AglbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let task: Task = str_arg(task, "task")?.parse()?;
        let trials = generate_task(task, &build_lexicon(), n, seed, ExpandOptions::default())?;
        *out = Box::into_raw(Box::new(AglbTrials { trials }));
        Ok(())
    })
}

/// # Safety
/// `trials` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn aglb_trials_len(trials: *const AglbTrials) -> usize {
    trials.as_ref().map_or(0, |t| t.trials.len())
}

/// Trials as JSONL; release with [`aglb_string_free`].
///
/// # Safety
/// `trials` live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn aglb_trials_to_jsonl(trials: *const AglbTrials, out: *mut *mut c_char) -> AglbStatus {
    guard(|| {
        let t = trials.as_ref().ok_or_else(|| null("trials"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = CString::new(trials_to_jsonl(&t.trials))
            .map_err(|_| Fail(AglbStatus::Other, "interior NUL".into()))?
            .into_raw();
        Ok(())
    })
}

/// Agreement accuracy (share of targets where the correct form wins) and
/// mean success probability over every target of every trial.
///
/// # Safety
/// Handles live; outputs writable; `units` as in
/// [`aglb_next_word_distribution`].
#[no_mangle]
pub unsafe extern "C" fn aglb_trials_evaluate(
    model: *const AglbModel,
    trials: *const AglbTrials,
    units: *const u32,
    n_units: usize,
    accuracy: *mut f64,
    success_probability: *mut f64,
) -> AglbStatus {
    guard(|| {
        let m = model_arg(model)?;
        let t = trials.as_ref().ok_or_else(|| null("trials"))?;
        if accuracy.is_null() || success_probability.is_null() {
            return Err(null("output"));
        }
        let records = evaluate(&m.ckpt, &t.trials, None, &mask_arg(units, n_units, false)?)?;
        let n = records.len() as f64;
        if records.is_empty() {
            *accuracy = f64::NAN;
            *success_probability = CHANCE;
        } else {
            *accuracy = records.iter().map(|r| f64::from(r.score)).sum::<f64>() / n;
            *success_probability = records.iter().map(|r| r.success_probability).sum::<f64>() / n;
        }
        Ok(())
    })
}

/// # Safety
/// `trials` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn aglb_trials_free(trials: *mut AglbTrials) {
    if !trials.is_null() {
        drop(Box::from_raw(trials));
    }
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn aglb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
