//! C interface to `lesionmorph`.
//!
//! Every function returns an [`LmStatus`]; on failure the message is kept
//! per thread and read back with [`lm_last_error_message`]. Masks and models
//! are opaque handles owned by the caller and released with their `_free`
//! function. No function unwinds across the boundary: a panic inside is
//! caught and reported as `LM_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use lesionmorph::classifier::{self, ClassifierError, ClassifierModel};
use lesionmorph::dataset::ClassLabel;
use lesionmorph::imgproc::{binarize, decode_gray, Connectivity, GrayImage, MaskImage};
use lesionmorph::metrics::{self, confuse};
use lesionmorph::morphometry::{analyze, ExtractOptions, FeatureVector, RoundnessDiameter, Suppression, FEATURE_NAMES};

/// Number of classes: 0 normal, 1 benign, 2 malignant.
pub const LM_CLASSES: usize = 3;
/// Number of numeric feature columns.
pub const LM_FEATURES: usize = 18;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Data = 4,
    CorruptModel = 5,
    Internal = 6,
}

/// A binary mask.
pub struct LmMask {
    mask: MaskImage,
}

/// A trained classifier.
pub struct LmModel {
    model: ClassifierModel,
}

/// Extraction settings; start from [`lm_extract_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LmExtractOptions {
    /// Square working grid side; 0 keeps the mask's own grid.
    pub working_size: u32,
    pub k: u32,
    pub smooth_threshold: f64,
    /// 4 or 8.
    pub connectivity: u8,
    /// Use the hull diameter instead of the ellipse major axis for roundness.
    pub hull_roundness: bool,
    /// Merge curvature runs globally instead of within a 2k window.
    pub global_suppression: bool,
}

/// Feature columns in table order, plus the degenerate flag.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LmFeatureVector {
    pub perimeter: f64,
    pub height: f64,
    pub width: f64,
    pub area: f64,
    pub cspi: u32,
    pub lobulation_index: f64,
    pub ens: u32,
    pub aspect_ratio: f64,
    pub form_factor: f64,
    pub roundness: f64,
    pub solidity: f64,
    pub major_axis: f64,
    pub minor_axis: f64,
    pub enc: f64,
    pub ls_ratio: f64,
    pub convexity: f64,
    pub extent: f64,
    pub tca_ratio: f64,
    pub degenerate: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LmClassMetrics {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub f1: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LmMetricReport {
    pub per_class: [LmClassMetrics; LM_CLASSES],
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_specificity: f64,
    pub macro_f1: f64,
}

impl From<&FeatureVector> for LmFeatureVector {
    fn from(f: &FeatureVector) -> Self {
        Self {
            perimeter: f.perimeter,
            height: f.height,
            width: f.width,
            area: f.area,
            cspi: f.cspi,
            lobulation_index: f.lobulation_index,
            ens: f.ens,
            aspect_ratio: f.aspect_ratio,
            form_factor: f.form_factor,
            roundness: f.roundness,
            solidity: f.solidity,
            major_axis: f.major_axis,
            minor_axis: f.minor_axis,
            enc: f.enc,
            ls_ratio: f.ls_ratio,
            convexity: f.convexity,
            extent: f.extent,
            tca_ratio: f.tca_ratio,
            degenerate: f.degenerate,
        }
    }
}

impl From<&LmFeatureVector> for FeatureVector {
    fn from(f: &LmFeatureVector) -> Self {
        Self {
            perimeter: f.perimeter,
            height: f.height,
            width: f.width,
            area: f.area,
            cspi: f.cspi,
            lobulation_index: f.lobulation_index,
            ens: f.ens,
            aspect_ratio: f.aspect_ratio,
            form_factor: f.form_factor,
            roundness: f.roundness,
            solidity: f.solidity,
            major_axis: f.major_axis,
            minor_axis: f.minor_axis,
            enc: f.enc,
            ls_ratio: f.ls_ratio,
            convexity: f.convexity,
            extent: f.extent,
            tca_ratio: f.tca_ratio,
            degenerate: f.degenerate,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(LmStatus, String);

impl Failure {
    fn null(what: &str) -> Self {
        Failure(LmStatus::NullPointer, format!("{what} is null"))
    }

    fn arg(msg: impl Into<String>) -> Self {
        Failure(LmStatus::InvalidArgument, msg.into())
    }
}

impl From<ClassifierError> for Failure {
    fn from(e: ClassifierError) -> Self {
        let status = match e {
            ClassifierError::CorruptModelFile(_) => LmStatus::CorruptModel,
            ClassifierError::Io { .. } => LmStatus::Io,
            ClassifierError::DimensionMismatch { .. } => LmStatus::InvalidArgument,
            _ => LmStatus::Data,
        };
        Failure(status, e.to_string())
    }
}

/// Runs `f`, records any failure or panic, and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            LmStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal error: {msg}"));
            LmStatus::Internal
        }
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Failure> {
    if path.is_null() {
        return Err(Failure::null("path"));
    }
    let s = CStr::from_ptr(path).to_str().map_err(|_| Failure::arg("path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

fn options(o: &LmExtractOptions) -> Result<ExtractOptions, Failure> {
    let connectivity = match o.connectivity {
        4 => Connectivity::Four,
        8 => Connectivity::Eight,
        c => return Err(Failure::arg(format!("connectivity must be 4 or 8, got {c}"))),
    };
    if o.k == 0 {
        return Err(Failure::arg("k must be at least 1"));
    }
    if !(0.0..=180.0).contains(&o.smooth_threshold) {
        return Err(Failure::arg("smooth_threshold must lie in [0, 180]"));
    }
    Ok(ExtractOptions {
        working_size: (o.working_size > 0).then_some(o.working_size as usize),
        k: o.k as usize,
        smooth_threshold: o.smooth_threshold,
        connectivity,
        roundness: if o.hull_roundness { RoundnessDiameter::HullDiameter } else { RoundnessDiameter::EllipseMajor },
        suppression: if o.global_suppression { Suppression::Global } else { Suppression::Windowed },
    })
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn lm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Column name of feature `index` (0..18), or null when out of range.
#[no_mangle]
pub extern "C" fn lm_feature_name(index: usize) -> *const c_char {
    static NAMES: [&str; LM_FEATURES] = [
        "perimeter\0",
        "height\0",
        "width\0",
        "area\0",
        "cspi\0",
        "li\0",
        "ens\0",
        "aspect_ratio\0",
        "form_factor\0",
        "roundness\0",
        "solidity\0",
        "major_axis\0",
        "minor_axis\0",
        "enc\0",
        "ls_ratio\0",
        "convexity\0",
        "extent\0",
        "tca_ratio\0",
    ];
    debug_assert!(NAMES.iter().zip(FEATURE_NAMES).all(|(a, b)| a.trim_end_matches('\0') == b));
    NAMES.get(index).map_or(ptr::null(), |s| s.as_ptr().cast())
}

#[no_mangle]
pub extern "C" fn lm_extract_options_default() -> LmExtractOptions {
    let d = ExtractOptions::default();
    LmExtractOptions {
        working_size: d.working_size.unwrap_or(0) as u32,
        k: d.k as u32,
        smooth_threshold: d.smooth_threshold,
        connectivity: d.connectivity.as_number(),
        hull_roundness: false,
        global_suppression: false,
    }
}

/// Builds a mask from `width * height` row-major gray levels; pixels at or
/// above `threshold` are foreground.
///
/// # Safety
/// `pixels` must point to `width * height` readable bytes; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn lm_mask_new(
    pixels: *const u8,
    width: usize,
    height: usize,
    threshold: u8,
    out: *mut *mut LmMask,
) -> LmStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        *out = ptr::null_mut();
        if pixels.is_null() {
            return Err(Failure::null("pixels"));
        }
        let len = width.checked_mul(height).ok_or_else(|| Failure::arg("width * height overflows"))?;
        let data = slice::from_raw_parts(pixels, len).to_vec();
        let gray = GrayImage::new(width, height, data).map_err(|e| Failure::arg(e.to_string()))?;
        *out = Box::into_raw(Box::new(LmMask { mask: binarize(&gray, threshold) }));
        Ok(())
    })
}

/// Decodes a PNG (or any format the image decoder knows) and thresholds it.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lm_mask_load_png(path: *const c_char, threshold: u8, out: *mut *mut LmMask) -> LmStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        *out = ptr::null_mut();
        let path = path_arg(path)?;
        let gray = decode_gray(&path).map_err(|e| Failure(LmStatus::Io, e.to_string()))?;
        *out = Box::into_raw(Box::new(LmMask { mask: binarize(&gray, threshold) }));
        Ok(())
    })
}

/// # Safety
/// `mask` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lm_mask_free(mask: *mut LmMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

/// Foreground pixel count and dimensions.
///
/// # Safety
/// `mask` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn lm_mask_info(
    mask: *const LmMask,
    width: *mut usize,
    height: *mut usize,
    foreground: *mut usize,
) -> LmStatus {
    guard(|| {
        let m = &mask.as_ref().ok_or_else(|| Failure::null("mask"))?.mask;
        if width.is_null() || height.is_null() || foreground.is_null() {
            return Err(Failure::null("output pointer"));
        }
        (*width, *height, *foreground) = (m.width(), m.height(), m.count());
        Ok(())
    })
}

/// Computes the features of `mask`. `opts` may be null for the defaults.
/// Degenerate masks succeed with `degenerate` set.
///
/// # Safety
/// `mask` must be a live handle; `opts` null or readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lm_extract_features(
    mask: *const LmMask,
    opts: *const LmExtractOptions,
    out: *mut LmFeatureVector,
) -> LmStatus {
    guard(|| {
        let m = &mask.as_ref().ok_or_else(|| Failure::null("mask"))?.mask;
        let out = out.as_mut().ok_or_else(|| Failure::null("out"))?;
        let o = match opts.as_ref() {
            Some(o) => options(o)?,
            None => ExtractOptions::default(),
        };
        *out = LmFeatureVector::from(&analyze(m, &o).0);
        Ok(())
    })
}

/// Loads a model file written by `lesionmorph train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lm_model_load(path: *const c_char, out: *mut *mut LmModel) -> LmStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        *out = ptr::null_mut();
        let path = path_arg(path)?;
        let (model, _) = classifier::load_model(&path)?;
        *out = Box::into_raw(Box::new(LmModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lm_model_free(model: *mut LmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

unsafe fn rows_arg<'a>(rows: *const LmFeatureVector, n: usize) -> Result<&'a [LmFeatureVector], Failure> {
    if n == 0 {
        return Err(Failure::arg("no rows"));
    }
    if rows.is_null() {
        return Err(Failure::null("rows"));
    }
    Ok(slice::from_raw_parts(rows, n))
}

/// Class probabilities, `n * 3` values row by row. Degenerate rows carry no
/// shape and get probability 1 for normal.
///
/// # Safety
/// `model` must be a live handle, `rows` must hold `n` vectors and `probs`
/// room for `n * 3` doubles.
#[no_mangle]
pub unsafe extern "C" fn lm_model_predict_proba(
    model: *const LmModel,
    rows: *const LmFeatureVector,
    n: usize,
    probs: *mut f64,
) -> LmStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| Failure::null("model"))?.model;
        let rows = rows_arg(rows, n)?;
        if probs.is_null() {
            return Err(Failure::null("probs"));
        }
        let out = slice::from_raw_parts_mut(probs, n * LM_CLASSES);
        let live: Vec<Vec<f64>> = rows
            .iter()
            .filter(|r| !r.degenerate)
            .map(|r| FeatureVector::from(r).model_input().to_vec())
            .collect();
        let mut p = if live.is_empty() { Vec::new() } else { m.predict_proba(&live)? }.into_iter();
        for (r, dst) in rows.iter().zip(out.chunks_mut(LM_CLASSES)) {
            if r.degenerate {
                dst.copy_from_slice(&[1.0, 0.0, 0.0]);
            } else {
                dst.copy_from_slice(&p.next().expect("one row per live input"));
            }
        }
        Ok(())
    })
}

/// Predicted class index per row (0 normal, 1 benign, 2 malignant); ties go
/// to the lower index.
///
/// # Safety
/// As [`lm_model_predict_proba`], with `labels` room for `n` values.
#[no_mangle]
pub unsafe extern "C" fn lm_model_predict(
    model: *const LmModel,
    rows: *const LmFeatureVector,
    n: usize,
    labels: *mut u32,
) -> LmStatus {
    guard(|| {
        if labels.is_null() {
            return Err(Failure::null("labels"));
        }
        let mut probs = vec![0.0; n.saturating_mul(LM_CLASSES)];
        match lm_model_predict_proba(model, rows, n, probs.as_mut_ptr()) {
            LmStatus::Ok => {}
            s => {
                let msg = CStr::from_ptr(lm_last_error_message()).to_string_lossy().into_owned();
                return Err(Failure(s, msg));
            }
        }
        let out = slice::from_raw_parts_mut(labels, n);
        for (dst, p) in out.iter_mut().zip(probs.chunks(LM_CLASSES)) {
            *dst = classifier::argmax(p) as u32;
        }
        Ok(())
    })
}

/// 3x3 confusion counts, row-major with rows actual and columns predicted.
///
/// # Safety
/// `actual` and `predicted` must hold `n` labels; `counts` room for 9.
#[no_mangle]
pub unsafe extern "C" fn lm_confusion(
    actual: *const u32,
    predicted: *const u32,
    n: usize,
    counts: *mut u64,
) -> LmStatus {
    guard(|| {
        if actual.is_null() || predicted.is_null() || counts.is_null() {
            return Err(Failure::null("label or count pointer"));
        }
        let label = |v: &u32| {
            let i = *v as usize;
            (i < LM_CLASSES).then_some(i).ok_or_else(|| Failure::arg(format!("label {v} is not 0, 1 or 2")))
        };
        let a = slice::from_raw_parts(actual, n).iter().map(label).collect::<Result<Vec<_>, _>>()?;
        let p = slice::from_raw_parts(predicted, n).iter().map(label).collect::<Result<Vec<_>, _>>()?;
        let names = ClassLabel::ALL.map(ClassLabel::as_str);
        let cm = confuse(&names, &a, &p).map_err(|e| Failure::arg(e.to_string()))?;
        let out = slice::from_raw_parts_mut(counts, LM_CLASSES * LM_CLASSES);
        for (dst, v) in out.iter_mut().zip(cm.counts.iter().flatten()) {
            *dst = *v;
        }
        Ok(())
    })
}

/// Per-class and macro metrics from 3x3 confusion counts. Rates with a zero
/// denominator are reported as 0.
///
/// # Safety
/// `counts` must hold 9 values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lm_metrics_report(counts: *const u64, out: *mut LmMetricReport) -> LmStatus {
    guard(|| {
        if counts.is_null() {
            return Err(Failure::null("counts"));
        }
        let out = out.as_mut().ok_or_else(|| Failure::null("out"))?;
        let flat = slice::from_raw_parts(counts, LM_CLASSES * LM_CLASSES);
        let cm = metrics::ConfusionMatrix {
            classes: ClassLabel::ALL.iter().map(|c| c.as_str().to_string()).collect(),
            counts: flat.chunks(LM_CLASSES).map(<[u64]>::to_vec).collect(),
        };
        let r = metrics::report(&cm);
        let mut rep = LmMetricReport {
            accuracy: r.accuracy,
            macro_precision: r.macro_precision,
            macro_recall: r.macro_recall,
            macro_specificity: r.macro_specificity,
            macro_f1: r.macro_f1,
            ..LmMetricReport::default()
        };
        for (dst, c) in rep.per_class.iter_mut().zip(&r.per_class) {
            *dst = LmClassMetrics {
                tp: c.counts.tp,
                tn: c.counts.tn,
                fp: c.counts.fp,
                fn_: c.counts.fn_,
                precision: c.precision,
                recall: c.recall,
                specificity: c.specificity,
                f1: c.f1,
            };
        }
        *out = rep;
        Ok(())
    })
}
