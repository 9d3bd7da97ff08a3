//! C ABI over trained checkpoints: load a model, score text, compute
//! ranking metrics. Every function returns an [`AcnnStatus`]; on failure the
//! calling thread's message is available from [`acnn_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use acnn::data::{tokenize, SentenceBatch};
use acnn::metrics::{mean_metrics, RankedGroup};
use acnn::model::{Network, Task};
use acnn::train::Checkpoint;
use acnn::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AcnnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    BadCheckpoint = 4,
    WrongTask = 5,
    InvalidArgument = 6,
    BufferTooSmall = 7,
    Internal = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AcnnTask {
    Classify = 0,
    Match = 1,
}

/// Opaque handle to a loaded checkpoint.
pub struct AcnnModel {
    checkpoint: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("nul bytes removed"));
}

struct Failure(AcnnStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Io { .. } => AcnnStatus::Io,
            Error::Checkpoint(_) | Error::Parse { .. } => AcnnStatus::BadCheckpoint,
            Error::Config(_) | Error::Metric(_) => AcnnStatus::InvalidArgument,
            _ => AcnnStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: AcnnStatus, message: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, message.into()))
}

/// Runs `body`, records any failure for `acnn_last_error` and turns panics
/// into `Internal`.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> AcnnStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => AcnnStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AcnnStatus::Internal
        }
    }
}

unsafe fn text<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return fail(AcnnStatus::NullPointer, format!("`{what}` is null"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .or_else(|_| fail(AcnnStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

unsafe fn model<'a>(ptr: *const AcnnModel) -> Result<&'a AcnnModel, Failure> {
    ptr.as_ref().map_or_else(|| fail(AcnnStatus::NullPointer, "model handle is null"), Ok)
}

unsafe fn out<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().map_or_else(|| fail(AcnnStatus::NullPointer, format!("`{what}` is null")), Ok)
}

impl AcnnModel {
    fn batch(&self, text: &str) -> SentenceBatch {
        let ck = &self.checkpoint;
        let tokens: Vec<String> = tokenize(text).into_iter().take(ck.max_len).collect();
        SentenceBatch::from_rows(&[ck.vocab.encode(&tokens)], ck.network.config().h)
    }
}

/// Loads a checkpoint file. On success `*out_model` owns a handle that must be
/// released with `acnn_model_free`.
///
/// # Safety
/// `path` must be a valid C string and `out_model` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn acnn_model_load(path: *const c_char, out_model: *mut *mut AcnnModel) -> AcnnStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        *slot = std::ptr::null_mut();
        let path = text(path, "path")?;
        let checkpoint = Checkpoint::load(path)?;
        *slot = Box::into_raw(Box::new(AcnnModel { checkpoint }));
        Ok(())
    })
}

/// Releases a handle from `acnn_model_load`. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn acnn_model_free(model: *mut AcnnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `out_task` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn acnn_model_task(model: *const AcnnModel, out_task: *mut AcnnTask) -> AcnnStatus {
    guard(|| {
        let m = self::model(model)?;
        *out(out_task, "out_task")? = match m.checkpoint.network.task() {
            Task::Classify => AcnnTask::Classify,
            Task::Match => AcnnTask::Match,
        };
        Ok(())
    })
}

/// Number of classes (2 for matching models).
///
/// # Safety
/// `model` must be a live handle and `out_n` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn acnn_model_num_classes(model: *const AcnnModel, out_n: *mut usize) -> AcnnStatus {
    guard(|| {
        *out(out_n, "out_n")? = self::model(model)?.checkpoint.network.config().n_classes;
        Ok(())
    })
}

/// Classifies `text`. Writes the arg-max class to `*out_label` and, when
/// `logits` is non-null, the class logits to `logits[0..n_classes]`;
/// `logits_len` smaller than the class count yields `BufferTooSmall`.
///
/// # Safety
/// `logits` must be null or point to `logits_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn acnn_classify(
    model: *const AcnnModel,
    text: *const c_char,
    out_label: *mut usize,
    logits: *mut f64,
    logits_len: usize,
) -> AcnnStatus {
    guard(|| {
        let m = self::model(model)?;
        let Network::Classifier(classifier) = &m.checkpoint.network else {
            return fail(AcnnStatus::WrongTask, "model is a matching model");
        };
        let label = out(out_label, "out_label")?;
        let batch = m.batch(self::text(text, "text")?);
        let tensor = classifier.eval_logits(&batch)?;
        let values = tensor.data();
        if !logits.is_null() {
            if logits_len < values.len() {
                return fail(
                    AcnnStatus::BufferTooSmall,
                    format!("logits buffer holds {logits_len}, need {}", values.len()),
                );
            }
            std::slice::from_raw_parts_mut(logits, values.len()).copy_from_slice(values);
        }
        *label = values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0;
        Ok(())
    })
}

/// Relevance probability of `answer` for `question`.
///
/// # Safety
/// `model` must be a live handle; strings must be valid C strings.
#[no_mangle]
pub unsafe extern "C" fn acnn_match_score(
    model: *const AcnnModel,
    question: *const c_char,
    answer: *const c_char,
    out_score: *mut f64,
) -> AcnnStatus {
    guard(|| {
        let m = self::model(model)?;
        let Network::Matcher(matcher) = &m.checkpoint.network else {
            return fail(AcnnStatus::WrongTask, "model is a classifier");
        };
        let score = out(out_score, "out_score")?;
        let q = m.batch(text(question, "question")?);
        let a = m.batch(text(answer, "answer")?);
        *score = matcher.score(&q, &a)?[0];
        Ok(())
    })
}

/// MAP and MRR over `n_groups` groups laid out back to back: group `i` owns
/// the next `group_sizes[i]` entries of `scores` and `labels` (0 or 1).
/// Groups without a positive are skipped; none at all is `InvalidArgument`.
///
/// # Safety
/// `scores` and `labels` must hold the sum of `group_sizes` entries.
#[no_mangle]
pub unsafe extern "C" fn acnn_ranking_metrics(
    scores: *const f64,
    labels: *const u8,
    group_sizes: *const usize,
    n_groups: usize,
    out_map: *mut f64,
    out_mrr: *mut f64,
) -> AcnnStatus {
    guard(|| {
        if scores.is_null() || labels.is_null() || group_sizes.is_null() {
            return fail(AcnnStatus::NullPointer, "input array is null");
        }
        let (map, mrr) = (out(out_map, "out_map")?, out(out_mrr, "out_mrr")?);
        let sizes = std::slice::from_raw_parts(group_sizes, n_groups);
        let total: usize = sizes.iter().sum();
        let scores = std::slice::from_raw_parts(scores, total);
        let labels = std::slice::from_raw_parts(labels, total);
        let mut groups = Vec::with_capacity(n_groups);
        let mut offset = 0;
        for &n in sizes {
            let l = &labels[offset..offset + n];
            if l.iter().any(|&y| y > 1) {
                return fail(AcnnStatus::InvalidArgument, "labels must be 0 or 1");
            }
            groups.push(RankedGroup::new(scores[offset..offset + n].to_vec(), l.iter().map(|&y| y == 1).collect())?);
            offset += n;
        }
        let m = mean_metrics(&groups)?;
        *map = m.map;
        *mrr = m.mrr;
        Ok(())
    })
}

/// Message of the last failure on this thread, or an empty string. Valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn acnn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn acnn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
