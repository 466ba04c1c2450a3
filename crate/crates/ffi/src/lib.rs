//! C ABI over `sewer_anomaly`.
//!
//! Every fallible call returns an [`SaStatus`]; on failure the message is
//! available from [`sa_last_error_message`] on the same thread. Models are
//! opaque [`SaModel`] handles released with [`sa_model_free`]. Strings handed
//! out by this library are released with [`sa_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sewer_anomaly::pipeline::{all_windows, evaluate_windows, reference_features, train_detector};
use sewer_anomaly::reading::{parse_csv_str, segment_series, to_csv_string};
use sewer_anomaly::{
    generate, DetectorConfig, DetectorKind, Error, GenConfig, ModelDocument, Verdict, WindowConfig,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Config = 4,
    Dimension = 5,
    /// Too few samples, no windows, or empty input.
    Data = 6,
    FormatVersion = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaVerdict {
    Normal = 0,
    Abnormal = 1,
}

impl From<Verdict> for SaVerdict {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Normal => SaVerdict::Normal,
            Verdict::Abnormal => SaVerdict::Abnormal,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaDetectorKind {
    Ocsvm = 0,
    Iforest = 1,
    Lof = 2,
    Ensemble = 3,
}

impl From<SaDetectorKind> for DetectorKind {
    fn from(k: SaDetectorKind) -> Self {
        match k {
            SaDetectorKind::Ocsvm => DetectorKind::Ocsvm,
            SaDetectorKind::Iforest => DetectorKind::Iforest,
            SaDetectorKind::Lof => DetectorKind::Lof,
            SaDetectorKind::Ensemble => DetectorKind::Ensemble,
        }
    }
}

/// Confusion counts and rates with abnormal as the positive class.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SaReport {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Opaque model handle.
pub struct SaModel {
    doc: ModelDocument,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(SaStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => SaStatus::Parse,
            Error::Config(_) => SaStatus::Config,
            Error::Dimension { .. } => SaStatus::Dimension,
            Error::FormatVersion { .. } => SaStatus::FormatVersion,
            Error::TooFewSamples { .. }
            | Error::NoWindows(_)
            | Error::LengthMismatch { .. }
            | Error::Empty(_) => SaStatus::Data,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SaStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside sewer_anomaly");
            SaStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(SaStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SaStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(SaStatus::Parse, "output contains a NUL byte".into()))
}

/// Message for the most recent failure on this thread, or null after a
/// success. The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn sa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn sa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse a model document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sa_model_from_json(json: *const c_char, out: *mut *mut SaModel) -> SaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let doc = ModelDocument::from_json(str_arg(json, "json")?)?;
        *out = Box::into_raw(Box::new(SaModel { doc }));
        Ok(())
    })
}

/// Serialize a model; release the result with [`sa_string_free`].
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sa_model_to_json(model: *const SaModel, out: *mut *mut c_char) -> SaStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = into_c_string(model.doc.to_json()?)?;
        Ok(())
    })
}

/// Train on every clean normal window of a readings CSV.
/// `config_json` may be null for default hyperparameters.
///
/// # Safety
/// String arguments must be NUL-terminated or (for `config_json`) null;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sa_model_train_csv(
    csv: *const c_char,
    n_history: usize,
    p_future: usize,
    kind: SaDetectorKind,
    seed: u64,
    config_json: *const c_char,
    out: *mut *mut SaModel,
) -> SaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let window = WindowConfig::new(n_history, p_future)?;
        let mut cfg = if config_json.is_null() {
            DetectorConfig::default()
        } else {
            serde_json::from_str(str_arg(config_json, "config_json")?).map_err(Error::from)?
        };
        cfg.seed = seed;
        cfg.validate()?;
        let readings = parse_csv_str(str_arg(csv, "csv")?)?;
        let windows = all_windows(&segment_series(&readings), window);
        if windows.is_empty() {
            return Err(Error::NoWindows(format!(
                "no segment spans N+P = {} readings",
                n_history + p_future
            ))
            .into());
        }
        let trained = train_detector(kind.into(), &reference_features(&windows), &cfg)?;
        *out = Box::into_raw(Box::new(SaModel {
            doc: ModelDocument::new(window, trained),
        }));
        Ok(())
    })
}

/// Feature length a model expects: `3 · n_history`. Zero for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sa_model_dim(model: *const SaModel) -> usize {
    model.as_ref().map_or(0, |m| m.doc.detector.dim())
}

/// Classify one raw feature vector. `score` may be null; it receives NaN
/// for the ensemble, which has no single score.
///
/// # Safety
/// `features` must point to `len` doubles; `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sa_model_decide(
    model: *const SaModel,
    features: *const f64,
    len: usize,
    verdict: *mut SaVerdict,
    score: *mut f64,
) -> SaStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if features.is_null() {
            return Err(null("features"));
        }
        if verdict.is_null() {
            return Err(null("verdict"));
        }
        let x = std::slice::from_raw_parts(features, len);
        let d = model.doc.detector.decide(x)?;
        *verdict = d.verdict.into();
        if !score.is_null() {
            *score = d.score.unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// Evaluate a model on every window of a readings CSV.
///
/// # Safety
/// `csv` must be NUL-terminated; `model` a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sa_model_evaluate_csv(
    model: *const SaModel,
    csv: *const c_char,
    out: *mut SaReport,
) -> SaStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let readings = parse_csv_str(str_arg(csv, "csv")?)?;
        let windows = all_windows(&segment_series(&readings), model.doc.window);
        if windows.is_empty() {
            return Err(Error::Empty("no windows to evaluate").into());
        }
        let r = *evaluate_windows(&model.doc.detector, &windows)?.primary();
        *out = SaReport {
            true_pos: r.tp as u64,
            false_pos: r.fp as u64,
            false_neg: r.fn_ as u64,
            true_neg: r.tn as u64,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
        };
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sa_model_free(model: *mut SaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Generate a synthetic readings CSV from a JSON generator config; release the
/// result with [`sa_string_free`].
///
/// # Safety
/// `config_json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sa_generate_csv(config_json: *const c_char, out: *mut *mut c_char) -> SaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg: GenConfig =
            serde_json::from_str(str_arg(config_json, "config_json")?).map_err(Error::from)?;
        *out = into_c_string(to_csv_string(&generate(&cfg)?))?;
        Ok(())
    })
}
