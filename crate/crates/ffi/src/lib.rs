//! C ABI over gesturekit.
//!
//! Models and sessions are opaque heap handles. Every fallible call returns a
//! [`GkStatus`]; on failure the message is available from
//! [`gk_last_error_message`] on the same thread until the next failing call.
//! Panics never cross the boundary; they surface as `GK_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use gesturekit::dataset::write_dataset;
use gesturekit::skeleton::JOINT_COUNT;
use gesturekit::stream::Session;
use gesturekit::synth::generate_dataset;
use gesturekit::weights::load_weights;
use gesturekit::{Error, GenConfig, GestureFrame, HandSkeleton, RecognizerModel};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    WeightFile = 4,
    InvalidFrame = 5,
    BufferTooSmall = 6,
    Internal = 99,
}

/// A loaded, immutable model. May be shared across threads.
pub struct GkModel {
    inner: Arc<RecognizerModel>,
}

/// One streaming session. Not thread-safe; use one per thread or lock.
pub struct GkSession {
    inner: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(msg).expect("nul bytes removed")));
}

fn fail(status: GkStatus, msg: impl Into<String>) -> GkStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> GkStatus {
    match e {
        Error::Io { .. } => GkStatus::Io,
        Error::WeightFile(_) => GkStatus::WeightFile,
        _ => GkStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> GkStatus) -> GkStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(GkStatus::Internal, "internal panic"))
}

unsafe fn path_arg(p: *const c_char) -> Result<String, GkStatus> {
    if p.is_null() {
        return Err(fail(GkStatus::NullPointer, "path is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| fail(GkStatus::InvalidArgument, "path is not UTF-8"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Frees a string returned through an out-parameter. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn gk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a weight file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gk_model_load(path: *const c_char, out: *mut *mut GkModel) -> GkStatus {
    guard(|| {
        if out.is_null() {
            return fail(GkStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_weights(&path) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(GkModel { inner: Arc::new(m) }));
                GkStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `model` must come from [`gk_model_load`] and be freed once. Sessions keep
/// their own reference, so they may outlive the model handle.
#[no_mangle]
pub unsafe extern "C" fn gk_model_free(model: *mut GkModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of output classes, 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gk_model_class_count(model: *const GkModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.class_count())
}

/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gk_session_new(model: *const GkModel, out: *mut *mut GkSession) -> GkStatus {
    guard(|| {
        if out.is_null() {
            return fail(GkStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let Some(m) = model.as_ref() else {
            return fail(GkStatus::NullPointer, "model is null");
        };
        *out = Box::into_raw(Box::new(GkSession {
            inner: Session::new(Arc::clone(&m.inner)),
        }));
        GkStatus::Ok
    })
}

/// # Safety
/// `session` must come from [`gk_session_new`] and be freed once.
#[no_mangle]
pub unsafe extern "C" fn gk_session_free(session: *mut GkSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Zeroes the recurrent state and forgets the previous frame.
///
/// # Safety
/// `session` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gk_session_reset(session: *mut GkSession) {
    if let Some(s) = session.as_mut() {
        s.inner.reset();
    }
}

/// Feeds one frame. `joints` holds 21 x/y/z triples (63 doubles); `gaze` is
/// NULL or two doubles. Writes `class_count` probabilities to `probs` and the
/// top class to `top_class` (which may be NULL). On failure the session is
/// unchanged.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn gk_session_step(
    session: *mut GkSession,
    t_ms: u64,
    joints: *const f64,
    gaze: *const f64,
    probs: *mut f64,
    probs_len: usize,
    top_class: *mut usize,
) -> GkStatus {
    guard(|| {
        let Some(s) = session.as_mut() else {
            return fail(GkStatus::NullPointer, "session is null");
        };
        if joints.is_null() || probs.is_null() {
            return fail(GkStatus::NullPointer, "joints and probs must not be null");
        }
        let classes = s.inner.model().class_count();
        if probs_len < classes {
            return fail(GkStatus::BufferTooSmall, format!("probs holds {probs_len}, need {classes}"));
        }
        let flat = std::slice::from_raw_parts(joints, 3 * JOINT_COUNT);
        let points: Vec<[f64; 3]> = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let skeleton = HandSkeleton::from_slice(&points).expect("exactly 21 joints");
        let gaze = (!gaze.is_null()).then(|| [*gaze, *gaze.add(1)]);
        let frame = GestureFrame { t_ms, skeleton, gaze };
        match s.inner.step(&frame) {
            Ok(step) => {
                std::slice::from_raw_parts_mut(probs, classes).copy_from_slice(&step.probs);
                if let Some(tc) = top_class.as_mut() {
                    *tc = step.class_id;
                }
                GkStatus::Ok
            }
            Err(e) => fail(GkStatus::InvalidFrame, format!("{}: {}", e.code, e.detail)),
        }
    })
}

/// Handles one wire-protocol JSON message. `*reply` receives a string to
/// release with [`gk_string_free`], or NULL when the message has no reply
/// (reset). Protocol-level errors are replies, not failures.
///
/// # Safety
/// `line` must be NUL-terminated; `reply` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gk_session_step_json(
    session: *mut GkSession,
    line: *const c_char,
    reply: *mut *mut c_char,
) -> GkStatus {
    guard(|| {
        if reply.is_null() || line.is_null() {
            return fail(GkStatus::NullPointer, "line and reply must not be null");
        }
        *reply = ptr::null_mut();
        let Some(s) = session.as_mut() else {
            return fail(GkStatus::NullPointer, "session is null");
        };
        let Ok(text) = CStr::from_ptr(line).to_str() else {
            return fail(GkStatus::InvalidArgument, "line is not UTF-8");
        };
        if let Some(r) = s.inner.handle_line(text) {
            *reply = CString::new(r).expect("JSON has no NUL").into_raw();
        }
        GkStatus::Ok
    })
}

/// Writes a synthetic corpus as JSONL, same as `gesturekit gen`.
///
/// # Safety
/// `out_path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gk_generate_dataset(
    per_class: usize,
    frames: usize,
    noise_std: f64,
    seed: u64,
    out_path: *const c_char,
) -> GkStatus {
    guard(|| {
        let path = match path_arg(out_path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let config = GenConfig {
            frames_per_sequence: frames,
            noise_std,
            seed,
            ..GenConfig::default()
        };
        match generate_dataset(per_class, &config).and_then(|d| write_dataset(&path, &d)) {
            Ok(()) => GkStatus::Ok,
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}
