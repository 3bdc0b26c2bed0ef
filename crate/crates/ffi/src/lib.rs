//! C interface to `vessel_qca`.
//!
//! Masks and detection results live behind opaque handles that the caller
//! frees with the matching `*_free` function. Every fallible call returns a
//! [`QcaStatus`]; on failure a human-readable message is available from
//! [`qca_last_error`] on the same thread until the next failing call.
//!
//! No function unwinds across the boundary: panics are caught and reported
//! as [`QcaStatus::Internal`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use vessel_qca::metrics::{self, CountSeries};
use vessel_qca::stenosis::{self, Grade};
use vessel_qca::{analyze, BinaryMask, DetectorConfig, Error, PipelineConfig, StenosisFinding};

/// Result of every fallible call. Values 2–4 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QcaStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    Io = 2,
    InvalidInput = 3,
    InvalidSpec = 4,
    /// Index past the end of a collection.
    OutOfRange = 5,
    /// The result is mathematically undefined (e.g. a zero denominator).
    Undefined = 6,
    Internal = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QcaGrade {
    Mild = 1,
    Moderate = 2,
    Severe = 3,
}

impl From<Grade> for QcaGrade {
    fn from(g: Grade) -> Self {
        match g {
            Grade::Mild => QcaGrade::Mild,
            Grade::Moderate => QcaGrade::Moderate,
            Grade::Severe => QcaGrade::Severe,
        }
    }
}

/// Detection settings. Obtain defaults from [`qca_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct QcaConfig {
    pub min_mean_diameter: f64,
    pub cluster_threshold_tau: f64,
    pub report_floor: f64,
    pub max_radius: u32,
    /// Nonzero selects distance-transform radii.
    pub exact: u8,
}

impl From<PipelineConfig> for QcaConfig {
    fn from(c: PipelineConfig) -> Self {
        QcaConfig {
            min_mean_diameter: c.detector.min_mean_diameter,
            cluster_threshold_tau: c.detector.cluster_threshold_tau,
            report_floor: c.detector.report_floor,
            max_radius: c.max_radius,
            exact: c.exact as u8,
        }
    }
}

impl From<QcaConfig> for PipelineConfig {
    fn from(c: QcaConfig) -> Self {
        PipelineConfig {
            detector: DetectorConfig {
                min_mean_diameter: c.min_mean_diameter,
                cluster_threshold_tau: c.cluster_threshold_tau,
                report_floor: c.report_floor,
            },
            max_radius: c.max_radius,
            exact: c.exact != 0,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct QcaFinding {
    pub branch_id: usize,
    pub x: u32,
    pub y: u32,
    pub r_c: f64,
    pub r_s: f64,
    pub r_e: f64,
    pub eta: f64,
    pub grade: QcaGrade,
}

/// Segmentation scores; an undefined ratio is NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct QcaSegMetrics {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub iou: f64,
    pub acc: f64,
    pub spe: f64,
    pub sen: f64,
    pub f1: f64,
}

/// Count errors; `rrmse` is NaN when every image has zero labels.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct QcaCountErrors {
    pub armse: f64,
    pub rrmse: f64,
    pub rrmse_excluded: usize,
}

/// Opaque binary mask.
pub struct QcaMask(BinaryMask);

/// Opaque list of findings.
pub struct QcaFindings(Vec<StenosisFinding>);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: QcaStatus, message: &str) -> QcaStatus {
    set_last_error(message);
    status
}

fn from_error(e: Error) -> QcaStatus {
    let status = match e.exit_code() {
        2 => QcaStatus::Io,
        4 => QcaStatus::InvalidSpec,
        _ => QcaStatus::InvalidInput,
    };
    fail(status, &e.to_string())
}

fn guard(f: impl FnOnce() -> QcaStatus) -> QcaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(QcaStatus::Internal, "internal panic"),
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(QcaStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// Message of the last failure on this thread; empty if none. The pointer is
/// owned by the library and valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn qca_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Writes the default detection settings to `out`.
///
/// # Safety
/// `out` must be null or point to writable memory for one `QcaConfig`.
#[no_mangle]
pub unsafe extern "C" fn qca_config_default(out: *mut QcaConfig) -> QcaStatus {
    non_null!(out);
    *out = PipelineConfig::default().into();
    QcaStatus::Ok
}

/// Builds a mask from `width * height` 8-bit intensities (row-major);
/// foreground is `value >= threshold`.
///
/// # Safety
/// `pixels` must point to `len` readable bytes and `out` to a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn qca_mask_new(
    width: u32,
    height: u32,
    pixels: *const u8,
    len: usize,
    threshold: u8,
    out: *mut *mut QcaMask,
) -> QcaStatus {
    non_null!(pixels, out);
    *out = ptr::null_mut();
    guard(|| {
        let data = std::slice::from_raw_parts(pixels, len);
        match BinaryMask::from_gray(width, height, data, threshold) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(QcaMask(m)));
                QcaStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Loads an 8-bit PNG or PGM file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn qca_mask_load(path: *const c_char, threshold: u8, out: *mut *mut QcaMask) -> QcaStatus {
    non_null!(path, out);
    *out = ptr::null_mut();
    guard(|| {
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(QcaStatus::InvalidInput, "path is not valid UTF-8");
        };
        match vessel_qca::load_mask(path, threshold) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(QcaMask(m)));
                QcaStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `mask` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn qca_mask_free(mask: *mut QcaMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

/// # Safety
/// `mask` must be a live handle; `width` and `height` writable.
#[no_mangle]
pub unsafe extern "C" fn qca_mask_dims(mask: *const QcaMask, width: *mut u32, height: *mut u32) -> QcaStatus {
    non_null!(mask, width, height);
    let (w, h) = (*mask).0.dims();
    *width = w;
    *height = h;
    QcaStatus::Ok
}

/// Runs the full detection pipeline. `config` may be null for defaults;
/// `threads` of 0 or 1 runs sequentially.
///
/// # Safety
/// `mask` must be a live handle, `config` null or readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qca_detect(
    mask: *const QcaMask,
    config: *const QcaConfig,
    threads: usize,
    out: *mut *mut QcaFindings,
) -> QcaStatus {
    non_null!(mask, out);
    *out = ptr::null_mut();
    let config: PipelineConfig = if config.is_null() { PipelineConfig::default() } else { (*config).into() };
    guard(|| match analyze(&(*mask).0, &config, threads.max(1)) {
        Ok(a) => {
            *out = Box::into_raw(Box::new(QcaFindings(a.findings)));
            QcaStatus::Ok
        }
        Err(e) => from_error(e),
    })
}

/// Number of findings; 0 for a null handle.
///
/// # Safety
/// `findings` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qca_findings_len(findings: *const QcaFindings) -> usize {
    if findings.is_null() {
        0
    } else {
        (*findings).0.len()
    }
}

/// Copies finding `index` (findings are ordered by descending severity).
///
/// # Safety
/// `findings` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qca_findings_get(findings: *const QcaFindings, index: usize, out: *mut QcaFinding) -> QcaStatus {
    non_null!(findings, out);
    let list = &(*findings).0;
    let Some(f) = list.get(index) else {
        return fail(QcaStatus::OutOfRange, &format!("index {index} out of range for {} findings", list.len()));
    };
    *out = QcaFinding {
        branch_id: f.branch_id,
        x: f.location.x,
        y: f.location.y,
        r_c: f.r_c,
        r_s: f.r_s,
        r_e: f.r_e,
        eta: f.eta,
        grade: f.grade.into(),
    };
    QcaStatus::Ok
}

/// Findings as a JSON array. Release the string with [`qca_string_free`].
///
/// # Safety
/// `findings` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qca_findings_json(findings: *const QcaFindings, out: *mut *mut c_char) -> QcaStatus {
    non_null!(findings, out);
    *out = ptr::null_mut();
    guard(|| {
        let json = stenosis::findings_to_json(&(*findings).0);
        match CString::new(json) {
            Ok(c) => {
                *out = c.into_raw();
                QcaStatus::Ok
            }
            Err(_) => fail(QcaStatus::Internal, "JSON contained a NUL byte"),
        }
    })
}

/// # Safety
/// `findings` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qca_findings_free(findings: *mut QcaFindings) {
    if !findings.is_null() {
        drop(Box::from_raw(findings));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qca_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Pixel confusion counts and derived scores of `pred` against `truth`.
///
/// # Safety
/// Both masks must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qca_seg_metrics(pred: *const QcaMask, truth: *const QcaMask, out: *mut QcaSegMetrics) -> QcaStatus {
    non_null!(pred, truth, out);
    guard(|| match metrics::confusion(&(*pred).0, &(*truth).0) {
        Ok(c) => {
            let m = metrics::seg_metrics(&c);
            let nan = |v: Option<f64>| v.unwrap_or(f64::NAN);
            *out = QcaSegMetrics {
                tp: c.tp,
                fp: c.fp,
                fn_: c.fn_,
                tn: c.tn,
                iou: nan(m.iou),
                acc: nan(m.acc),
                spe: nan(m.spe),
                sen: nan(m.sen),
                f1: nan(m.f1),
            };
            QcaStatus::Ok
        }
        Err(e) => from_error(e),
    })
}

/// ARMSE and RRMSE over `n` images with the given predicted and labeled counts.
///
/// # Safety
/// `predicted` and `labeled` must each point to `n` readable values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qca_count_errors(
    predicted: *const u64,
    labeled: *const u64,
    n: usize,
    out: *mut QcaCountErrors,
) -> QcaStatus {
    non_null!(predicted, labeled, out);
    guard(|| {
        let p = std::slice::from_raw_parts(predicted, n);
        let l = std::slice::from_raw_parts(labeled, n);
        let series = match CountSeries::new(p.iter().copied().zip(l.iter().copied()).collect()) {
            Ok(s) => s,
            Err(_) => return fail(QcaStatus::Undefined, "count errors need at least one image"),
        };
        let e = metrics::count_errors(&series);
        *out = QcaCountErrors {
            armse: e.armse,
            rrmse: e.rrmse.unwrap_or(f64::NAN),
            rrmse_excluded: e.rrmse_excluded,
        };
        QcaStatus::Ok
    })
}
