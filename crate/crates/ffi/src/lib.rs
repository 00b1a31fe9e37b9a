//! C ABI over the sceneparse toolkit.
//!
//! Every fallible entry point returns an [`SpStatus`]; on failure the message
//! is available from [`sp_last_error`] on the same thread. Models are opaque
//! [`SpModel`] handles created by [`sp_model_load`] and released with
//! [`sp_model_free`]. No function panics across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use sceneparse::bundle::ModelBundle;
use sceneparse::gasel::fitness_value;
use sceneparse::imagedata::LabeledImage;
use sceneparse::metrics::evaluate;
use sceneparse::pipeline::predict_image;
use sceneparse::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpStatus {
    Ok = 0,
    NullArgument = 1,
    ConfigError = 2,
    DataError = 3,
    ModelError = 4,
    Panic = 5,
}

/// A loaded model bundle.
pub struct SpModel {
    bundle: ModelBundle,
}

/// Scalar metrics of one evaluation.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SpEvalSummary {
    pub global_acc: f64,
    pub class_acc: f64,
    pub mean_iou: f64,
    pub weighted_iou: f64,
    pub evaluated_pixels: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: SpStatus, msg: impl Into<String>) -> SpStatus {
    set_error(msg);
    status
}

fn from_error(e: &Error) -> SpStatus {
    let status = match e.exit_code() {
        2 => SpStatus::ConfigError,
        4 => SpStatus::ModelError,
        _ => SpStatus::DataError,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> SpStatus) -> SpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(SpStatus::Panic, "internal panic"),
    }
}

/// Copy `s` NUL-terminated into `buf` (truncating) and return the full
/// length needed including the terminator.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
unsafe fn copy_str(s: &str, buf: *mut c_char, len: usize) -> usize {
    if !buf.is_null() && len > 0 {
        let n = s.len().min(len - 1);
        std::ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), n);
        *buf.add(n) = 0;
    }
    s.len() + 1
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf`. Returns the
/// buffer size needed (message length + 1); 1 when there is no error.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn sp_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| copy_str(&e.borrow(), buf, len))
}

/// Load and validate a model bundle from a UTF-8 path.
///
/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sp_model_load(path: *const c_char, out: *mut *mut SpModel) -> SpStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(SpStatus::NullArgument, "null argument to sp_model_load");
        }
        *out = std::ptr::null_mut();
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(SpStatus::ConfigError, "model path is not valid UTF-8");
        };
        match ModelBundle::load(Path::new(path)) {
            Ok(bundle) => {
                *out = Box::into_raw(Box::new(SpModel { bundle }));
                SpStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Release a model. Null is ignored.
///
/// # Safety
/// `model` must come from `sp_model_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sp_model_free(model: *mut SpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sp_model_num_classes(model: *const SpModel, out: *mut usize) -> SpStatus {
    if model.is_null() || out.is_null() {
        return fail(SpStatus::NullArgument, "null argument to sp_model_num_classes");
    }
    *out = (*model).bundle.n_classes();
    SpStatus::Ok
}

/// Copy the name of class `index` into `buf`; `needed` (optional) receives
/// the size required including the terminator.
///
/// # Safety
/// `model` must be valid, `buf` null or valid for `len` bytes, `needed` null
/// or valid.
#[no_mangle]
pub unsafe extern "C" fn sp_model_class_name(
    model: *const SpModel,
    index: usize,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> SpStatus {
    if model.is_null() {
        return fail(SpStatus::NullArgument, "null model");
    }
    let names = (*model).bundle.classes.names();
    let Some(name) = names.get(index) else {
        return fail(SpStatus::ConfigError, format!("class index {index} out of range ({} classes)", names.len()));
    };
    let n = copy_str(name, buf, len);
    if !needed.is_null() {
        *needed = n;
    }
    SpStatus::Ok
}

/// Label an interleaved RGB image (`3 * width * height` bytes, row-major).
/// `out_labels` receives `width * height` class indices.
///
/// # Safety
/// Pointers must be valid for the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn sp_predict_rgb(
    model: *const SpModel,
    rgb: *const u8,
    width: usize,
    height: usize,
    out_labels: *mut i32,
) -> SpStatus {
    guard(|| {
        if model.is_null() || rgb.is_null() || out_labels.is_null() {
            return fail(SpStatus::NullArgument, "null argument to sp_predict_rgb");
        }
        let Some(n) = width.checked_mul(height).filter(|&n| n > 0) else {
            return fail(SpStatus::DataError, "image has no pixels");
        };
        let pixels = std::slice::from_raw_parts(rgb, 3 * n).to_vec();
        let result = LabeledImage::unlabeled("ffi", width, height, pixels).and_then(|img| predict_image(&(*model).bundle, &img));
        match result {
            Ok(pred) => {
                std::slice::from_raw_parts_mut(out_labels, n).copy_from_slice(pred.full());
                SpStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Pixel metrics of one prediction/ground-truth pair; negative ground truth
/// is ignored.
///
/// # Safety
/// `pred` and `gt` must be valid for `len` values and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sp_evaluate(
    pred: *const i32,
    gt: *const i32,
    len: usize,
    n_classes: usize,
    out: *mut SpEvalSummary,
) -> SpStatus {
    guard(|| {
        if pred.is_null() || gt.is_null() || out.is_null() {
            return fail(SpStatus::NullArgument, "null argument to sp_evaluate");
        }
        let pred = std::slice::from_raw_parts(pred, len);
        let gt = std::slice::from_raw_parts(gt, len);
        if pred.iter().any(|&p| p < 0) {
            return fail(SpStatus::DataError, "negative predicted label");
        }
        match evaluate([(pred, gt)], n_classes) {
            Ok(r) => {
                *out = SpEvalSummary {
                    global_acc: r.global_acc,
                    class_acc: r.class_acc,
                    mean_iou: r.mean_iou,
                    weighted_iou: r.weighted_iou,
                    evaluated_pixels: r.evaluated_pixels,
                };
                SpStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// GA fitness `alpha * error + beta * selected / total`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sp_fitness(error: f64, selected: usize, total: usize, alpha: f64, beta: f64, out: *mut f64) -> SpStatus {
    if out.is_null() {
        return fail(SpStatus::NullArgument, "null argument to sp_fitness");
    }
    if total == 0 || selected > total || !(0.0..=1.0).contains(&error) {
        return fail(SpStatus::ConfigError, "fitness needs 0 <= error <= 1 and selected <= total > 0");
    }
    *out = fitness_value(error, selected, total, alpha, beta);
    SpStatus::Ok
}
