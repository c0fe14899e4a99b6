//! C ABI over the msmha library.
//!
//! Models are opaque handles created by [`msmha_model_load`] and released by
//! [`msmha_model_free`]. Every fallible call returns an [`MsmhaStatus`]; on
//! failure [`msmha_last_error_message`] returns a thread-local description of
//! what went wrong. The generated header lives in `include/msmha.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use msmha::attention::{head_schedule, msmha_param_count};
use msmha::data::load_checkpoint;
use msmha::fusion::{late_fuse, ClassPosterior};
use msmha::model::{classify, ModelConfig, ModelParams};
use msmha::tensor::Tensor;
use msmha::Error;

/// Result of every fallible call in this interface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsmhaStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An output buffer is too small for the result.
    BufferTooSmall = 2,
    ShapeError = 3,
    ArgumentError = 4,
    ConfigError = 5,
    FormatError = 6,
    IoError = 7,
    ValidationError = 8,
    /// A string argument was not valid UTF-8.
    Utf8Error = 9,
    /// The library panicked; state may be inconsistent.
    InternalPanic = 10,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> MsmhaStatus {
    match err {
        Error::Shape(_) => MsmhaStatus::ShapeError,
        Error::Argument(_) => MsmhaStatus::ArgumentError,
        Error::Config(_) => MsmhaStatus::ConfigError,
        Error::Format(_) => MsmhaStatus::FormatError,
        Error::Io(_) => MsmhaStatus::IoError,
        Error::Validation(_) => MsmhaStatus::ValidationError,
    }
}

fn fail(err: &Error) -> MsmhaStatus {
    set_error(&err.to_string());
    status_of(err)
}

/// Run `f` with panics converted to `InternalPanic`.
fn guarded<F: FnOnce() -> MsmhaStatus>(f: F) -> MsmhaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            MsmhaStatus::InternalPanic
        }
    }
}

/// A loaded classifier: parameters plus their configuration.
pub struct MsmhaModel {
    params: ModelParams<f32>,
    config: ModelConfig,
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn msmha_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn msmha_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Write the pyramid head widths for `(feature_width, head_count)` into
/// `out_dims`, which must hold at least `head_count` entries.
///
/// # Safety
/// `out_dims` must point to `out_len` writable `uint32_t`s.
#[no_mangle]
pub unsafe extern "C" fn msmha_head_schedule(
    feature_width: u32,
    head_count: u32,
    out_dims: *mut u32,
    out_len: usize,
) -> MsmhaStatus {
    guarded(|| {
        if out_dims.is_null() {
            set_error("out_dims is null");
            return MsmhaStatus::NullPointer;
        }
        if out_len < head_count as usize {
            set_error("out_dims shorter than head_count");
            return MsmhaStatus::BufferTooSmall;
        }
        match head_schedule(feature_width as usize, head_count as usize) {
            Ok(schedule) => {
                for (i, &d) in schedule.dims().iter().enumerate() {
                    unsafe { *out_dims.add(i) = d as u32 };
                }
                MsmhaStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Analytic parameter count of the pyramid layout at `(feature_width,
/// head_count)`.
///
/// # Safety
/// `out_count` must point to a writable `uint64_t`.
#[no_mangle]
pub unsafe extern "C" fn msmha_pyramid_param_count(
    feature_width: u32,
    head_count: u32,
    include_bias: bool,
    out_count: *mut u64,
) -> MsmhaStatus {
    guarded(|| {
        if out_count.is_null() {
            set_error("out_count is null");
            return MsmhaStatus::NullPointer;
        }
        match msmha_param_count(feature_width as usize, head_count as usize, include_bias) {
            Ok(count) => {
                unsafe { *out_count = count };
                MsmhaStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Load a checkpoint from `path` into a fresh model handle.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_model` must be writable.
/// A returned handle must be released with [`msmha_model_free`].
#[no_mangle]
pub unsafe extern "C" fn msmha_model_load(
    path: *const c_char,
    out_model: *mut *mut MsmhaModel,
) -> MsmhaStatus {
    guarded(|| {
        if path.is_null() || out_model.is_null() {
            set_error("path or out_model is null");
            return MsmhaStatus::NullPointer;
        }
        let path = match unsafe { CStr::from_ptr(path) }.to_str() {
            Ok(p) => p,
            Err(e) => {
                set_error(&format!("path is not UTF-8: {e}"));
                return MsmhaStatus::Utf8Error;
            }
        };
        match load_checkpoint(path) {
            Ok((params, config)) => {
                let handle = Box::new(MsmhaModel { params, config });
                unsafe { *out_model = Box::into_raw(handle) };
                MsmhaStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Release a handle returned by [`msmha_model_load`]. Null is a no-op.
///
/// # Safety
/// `model` must have come from [`msmha_model_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn msmha_model_free(model: *mut MsmhaModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

macro_rules! model_getter {
    ($(#[$doc:meta])* $name:ident, $field:ident) => {
        $(#[$doc])*
        /// # Safety
        /// `model` must be a live handle and `out` a writable `uint32_t`.
        #[no_mangle]
        pub unsafe extern "C" fn $name(model: *const MsmhaModel, out: *mut u32) -> MsmhaStatus {
            guarded(|| {
                if model.is_null() || out.is_null() {
                    set_error("model or out is null");
                    return MsmhaStatus::NullPointer;
                }
                unsafe { *out = (*model).config.$field as u32 };
                MsmhaStatus::Ok
            })
        }
    };
}

model_getter!(
    /// Frames per input sequence (T).
    msmha_model_sequence_length,
    sequence_length
);
model_getter!(
    /// Raw frame-feature width (F).
    msmha_model_frame_dim,
    input_frame_dim
);
model_getter!(
    /// Number of gesture classes (C).
    msmha_model_class_count,
    class_count
);

/// Classify one frame sequence.
///
/// `frames` holds `T * F` values row-major (frame by frame); the posterior
/// (`class_count` probabilities summing to one) is written to
/// `out_posterior`.
///
/// # Safety
/// `frames` must hold `frames_len` readable floats and `out_posterior`
/// `out_len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn msmha_model_classify(
    model: *const MsmhaModel,
    frames: *const f32,
    frames_len: usize,
    out_posterior: *mut f32,
    out_len: usize,
) -> MsmhaStatus {
    guarded(|| {
        if model.is_null() || frames.is_null() || out_posterior.is_null() {
            set_error("model, frames or out_posterior is null");
            return MsmhaStatus::NullPointer;
        }
        let model = unsafe { &*model };
        let t = model.config.sequence_length;
        let f = model.config.input_frame_dim;
        let c = model.config.class_count;
        if frames_len != t * f {
            set_error(&format!(
                "frames_len {frames_len} does not match T*F = {}",
                t * f
            ));
            return MsmhaStatus::ShapeError;
        }
        if out_len < c {
            set_error(&format!("out_posterior holds {out_len}, need {c}"));
            return MsmhaStatus::BufferTooSmall;
        }
        let data = unsafe { std::slice::from_raw_parts(frames, frames_len) }.to_vec();
        let tensor = match Tensor::new(&[t, f], data) {
            Ok(t) => t,
            Err(e) => return fail(&e),
        };
        match classify(&tensor, &model.params, &model.config) {
            Ok(posterior) => {
                for (i, &p) in posterior.data().iter().enumerate() {
                    unsafe { *out_posterior.add(i) = p };
                }
                MsmhaStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Decision-level late fusion over per-stream posteriors.
///
/// `scores` holds `stream_count * class_count` probabilities row-major (one
/// normalized posterior per stream). The fused label is written to
/// `out_label`; when `out_score_sum` is non-null the summed scores
/// (`class_count` values) are written there too.
///
/// # Safety
/// `scores` must hold `stream_count * class_count` readable floats;
/// `out_label` must be writable; `out_score_sum` is either null or holds
/// `class_count` writable floats.
#[no_mangle]
pub unsafe extern "C" fn msmha_late_fuse(
    scores: *const f32,
    stream_count: usize,
    class_count: usize,
    out_label: *mut u32,
    out_score_sum: *mut f32,
) -> MsmhaStatus {
    guarded(|| {
        if scores.is_null() || out_label.is_null() {
            set_error("scores or out_label is null");
            return MsmhaStatus::NullPointer;
        }
        if stream_count == 0 || class_count == 0 {
            set_error("stream_count and class_count must be positive");
            return MsmhaStatus::ArgumentError;
        }
        let all = unsafe { std::slice::from_raw_parts(scores, stream_count * class_count) };
        let posteriors: Vec<ClassPosterior> = all
            .chunks(class_count)
            .enumerate()
            .map(|(i, row)| ClassPosterior::new(format!("stream-{i}"), row.to_vec()))
            .collect();
        match late_fuse(&posteriors) {
            Ok(result) => {
                unsafe { *out_label = result.label as u32 };
                if !out_score_sum.is_null() {
                    for (i, &s) in result.score_sum.iter().enumerate() {
                        unsafe { *out_score_sum.add(i) = s };
                    }
                }
                MsmhaStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}
