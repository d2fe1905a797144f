//! C ABI over the affectfuse inference pipeline.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free` function. Every entry point returns an
//! [`AfStatus`]; on failure, [`af_last_error`] holds a message for the
//! calling thread until the next call on that thread. No entry point
//! unwinds across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use affectfuse::config::AppConfig;
use affectfuse::features::{decode_wav, AudioClip};
use affectfuse::pipeline::{load_pipeline, Pipeline, PipelineError, PredictRequest};
use affectfuse::service::PredictResponse;
use affectfuse::{EmotionLabel, N_CLASSES};

/// Number of emotion classes; probability buffers must hold this many values.
pub const AF_N_CLASSES: usize = 8;
const _: () = assert!(AF_N_CLASSES == N_CLASSES);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AfStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    LoadFailed = 4,
    InvalidAudio = 5,
    ClipTooShort = 6,
    NoInput = 7,
    TranscriptionUnavailable = 8,
    PredictFailed = 9,
    OutOfRange = 10,
    Panic = 11,
}

/// Loaded inference pipeline. Immutable after load, so one handle may be
/// shared by several threads.
pub struct AfPipeline {
    inner: Pipeline,
}

/// Result of one prediction.
pub struct AfPrediction {
    label: EmotionLabel,
    probs: [f64; N_CLASSES],
    json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: AfStatus, msg: impl Into<String>) -> AfStatus {
    set_error(msg);
    status
}

/// Runs `f`, clearing the error slot first and converting panics.
fn guard(f: impl FnOnce() -> AfStatus) -> AfStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(AfStatus::Panic, msg)
        }
    }
}

/// # Safety
/// `p` is null or a NUL-terminated string valid for the call.
unsafe fn opt_str<'a>(p: *const c_char) -> Result<Option<&'a str>, AfStatus> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p).to_str().map(Some).map_err(|_| fail(AfStatus::InvalidUtf8, "argument is not valid UTF-8"))
}

fn pipeline_status(e: &PipelineError) -> AfStatus {
    match e {
        PipelineError::ClipTooShort { .. } => AfStatus::ClipTooShort,
        PipelineError::NoInput | PipelineError::NoModalities(_) => AfStatus::NoInput,
        PipelineError::Transcription(_) => AfStatus::TranscriptionUnavailable,
        PipelineError::Feature(_) => AfStatus::InvalidAudio,
        _ => AfStatus::PredictFailed,
    }
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn af_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Canonical class name for `index`, or null when out of range. Static storage.
#[no_mangle]
pub extern "C" fn af_label_name(index: u32) -> *const c_char {
    const NAMES: [&CStr; N_CLASSES] = [c"angry", c"calm", c"disgust", c"fear", c"happy", c"neutral", c"sad", c"surprise"];
    NAMES.get(index as usize).map_or(ptr::null(), |s| s.as_ptr())
}

#[no_mangle]
pub extern "C" fn af_n_classes() -> u32 {
    N_CLASSES as u32
}

/// Loads configuration from `config_path` (null for defaults) plus
/// `AFFECTFUSE_` environment overrides, then the model artifacts it names.
///
/// # Safety
/// `config_path` is null or a valid C string; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn af_pipeline_load(config_path: *const c_char, out: *mut *mut AfPipeline) -> AfStatus {
    guard(|| {
        if out.is_null() {
            return fail(AfStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let path = match opt_str(config_path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let cfg = match AppConfig::load(path.map(Path::new)) {
            Ok(c) => c,
            Err(e) => return fail(AfStatus::InvalidConfig, e.to_string()),
        };
        match load_pipeline(&cfg) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(AfPipeline { inner: p }));
                AfStatus::Ok
            }
            Err(e) => fail(AfStatus::LoadFailed, e.to_string()),
        }
    })
}

/// # Safety
/// `p` is null or a handle from [`af_pipeline_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn af_pipeline_free(p: *mut AfPipeline) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// # Safety
/// `p` is a live pipeline handle and `out` a valid pointer.
unsafe fn run_predict(p: *const AfPipeline, request: PredictRequest, out: *mut *mut AfPrediction) -> AfStatus {
    let pipeline = &(*p).inner;
    match pipeline.predict(request) {
        Ok(o) => {
            let response = PredictResponse::from_output(&o, pipeline.model_versions());
            let json = serde_json::to_string(&response).expect("response serializes");
            let mut probs = [0.0; N_CLASSES];
            for (slot, l) in probs.iter_mut().zip(EmotionLabel::ALL) {
                *slot = o.fused.distribution.get(l);
            }
            let pred = AfPrediction { label: o.fused.label, probs, json: CString::new(json).expect("JSON has no NUL") };
            *out = Box::into_raw(Box::new(pred));
            AfStatus::Ok
        }
        Err(e) => fail(pipeline_status(&e), e.to_string()),
    }
}

/// Predicts from mono PCM samples in [-1, 1] at `sample_rate` Hz, with an
/// optional transcript. `samples` may be null only when `n_samples` is 0,
/// in which case `transcript` is required.
///
/// # Safety
/// `p` is a live handle; `samples` points to `n_samples` floats; `transcript`
/// and `clip_id` are null or valid C strings; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn af_predict_pcm(
    p: *const AfPipeline,
    samples: *const f32,
    n_samples: usize,
    sample_rate: u32,
    transcript: *const c_char,
    clip_id: *const c_char,
    out: *mut *mut AfPrediction,
) -> AfStatus {
    guard(|| {
        if p.is_null() || out.is_null() || (samples.is_null() && n_samples > 0) {
            return fail(AfStatus::NullArgument, "null pipeline, output or sample pointer");
        }
        *out = ptr::null_mut();
        let (transcript, clip_id) = match (opt_str(transcript), opt_str(clip_id)) {
            (Ok(t), Ok(c)) => (t, c),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let clip = if n_samples == 0 {
            None
        } else {
            let data = std::slice::from_raw_parts(samples, n_samples);
            match AudioClip::new(data.iter().map(|&x| f64::from(x)).collect(), sample_rate) {
                Ok(c) => Some(c),
                Err(e) => return fail(AfStatus::InvalidAudio, e.to_string()),
            }
        };
        let request = PredictRequest { clip, clip_id: clip_id.map(str::to_string), transcript: transcript.map(str::to_string) };
        run_predict(p, request, out)
    })
}

/// Predicts from an in-memory WAV file.
///
/// # Safety
/// As [`af_predict_pcm`], with `wav` pointing to `wav_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn af_predict_wav(
    p: *const AfPipeline,
    wav: *const u8,
    wav_len: usize,
    transcript: *const c_char,
    clip_id: *const c_char,
    out: *mut *mut AfPrediction,
) -> AfStatus {
    guard(|| {
        if p.is_null() || out.is_null() || wav.is_null() {
            return fail(AfStatus::NullArgument, "null pipeline, output or WAV pointer");
        }
        *out = ptr::null_mut();
        let (transcript, clip_id) = match (opt_str(transcript), opt_str(clip_id)) {
            (Ok(t), Ok(c)) => (t, c),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let clip = match decode_wav(std::slice::from_raw_parts(wav, wav_len)) {
            Ok(c) => c,
            Err(e) => return fail(AfStatus::InvalidAudio, e.to_string()),
        };
        let request = PredictRequest { clip: Some(clip), clip_id: clip_id.map(str::to_string), transcript: transcript.map(str::to_string) };
        run_predict(p, request, out)
    })
}

/// Index of the decided class.
///
/// # Safety
/// `pred` is a live prediction handle.
#[no_mangle]
pub unsafe extern "C" fn af_prediction_label(pred: *const AfPrediction) -> u32 {
    if pred.is_null() {
        return u32::MAX;
    }
    (*pred).label.index() as u32
}

/// Copies the fused distribution, in canonical class order, into `probs`,
/// which must hold `len >= AF_N_CLASSES` values.
///
/// # Safety
/// `pred` is a live prediction handle; `probs` points to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn af_prediction_probs(pred: *const AfPrediction, probs: *mut f64, len: usize) -> AfStatus {
    guard(|| {
        if pred.is_null() || probs.is_null() {
            return fail(AfStatus::NullArgument, "null prediction or buffer");
        }
        if len < N_CLASSES {
            return fail(AfStatus::OutOfRange, format!("buffer holds {len} values, need {N_CLASSES}"));
        }
        std::slice::from_raw_parts_mut(probs, N_CLASSES).copy_from_slice(&(*pred).probs);
        AfStatus::Ok
    })
}

/// Full response as a JSON object; valid while `pred` lives.
///
/// # Safety
/// `pred` is a live prediction handle.
#[no_mangle]
pub unsafe extern "C" fn af_prediction_json(pred: *const AfPrediction) -> *const c_char {
    if pred.is_null() {
        return ptr::null();
    }
    (*pred).json.as_ptr()
}

/// # Safety
/// `pred` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn af_prediction_free(pred: *mut AfPrediction) {
    if !pred.is_null() {
        drop(Box::from_raw(pred));
    }
}
