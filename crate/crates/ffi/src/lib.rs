//! C ABI for the tactile loop simulator.
//!
//! Sessions are exposed as an opaque [`TlSession`] handle. Every fallible
//! call returns a [`TlStatus`]; on failure a human-readable message is kept
//! per thread and can be read with [`tl_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use tactile_loop::actuation::quantize26;
use tactile_loop::physics::{coil_force, PhysicsConfig};
use tactile_loop::session::Session;
use tactile_loop::{export_trace, run_session, Error, SessionConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TlStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The config document could not be parsed or failed validation.
    Config = 3,
    /// Reading or writing a file failed.
    Io = 4,
    /// A trace file could not be encoded.
    Format = 5,
    /// A panic was caught at the boundary.
    Panic = 6,
}

/// Opaque handle to a running session.
pub struct TlSession {
    inner: Session,
}

/// Snapshot of the session after the most recent tick.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TlState {
    /// Simulation time in seconds.
    pub t: f64,
    /// Magnet height above the surface in metres.
    pub z: f64,
    /// Magnet velocity in metres per second.
    pub v: f64,
    /// Last 7-bit sensor code, or -1 before the first sensor frame.
    pub raw_code: i32,
    /// Last calibrated proximity in [0, 1].
    pub proximity: f64,
    /// Last actuator level, or -1 before the first actuator frame.
    pub level: i32,
    /// Last quantized drive in [-1, 1].
    pub u_q: f64,
    /// Last coil current in amperes.
    pub current: f64,
    /// Number of triggers fired so far.
    pub trigger_count: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    let c = CString::new(text).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn fail(status: TlStatus, message: impl Into<String>) -> TlStatus {
    set_last_error(message);
    status
}

fn status_of(e: &Error) -> TlStatus {
    match e {
        Error::Config(_) => TlStatus::Config,
        Error::Io { .. } => TlStatus::Io,
        Error::Format { .. } => TlStatus::Format,
    }
}

/// Run `f`, converting a panic into [`TlStatus::Panic`].
fn guard(f: impl FnOnce() -> TlStatus) -> TlStatus {
    clear_last_error();
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(TlStatus::Panic, "internal panic"),
    }
}

/// # Safety
///
/// `s` must be null or point to a NUL-terminated string.
unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, TlStatus> {
    if s.is_null() {
        return Err(fail(TlStatus::NullPointer, format!("{what} is null")));
    }
    // SAFETY: non-null and NUL-terminated per the caller's contract.
    unsafe { CStr::from_ptr(s) }
        .to_str()
        .map_err(|_| fail(TlStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

/// # Safety
///
/// `config_json` must be null or a NUL-terminated string; null selects defaults.
unsafe fn config_arg(config_json: *const c_char) -> Result<SessionConfig, TlStatus> {
    if config_json.is_null() {
        return Ok(SessionConfig::default());
    }
    // SAFETY: forwarded caller contract.
    let text = unsafe { str_arg(config_json, "config_json") }?;
    let cfg = SessionConfig::from_json_str(text, "<config_json>").map_err(|e| fail(TlStatus::Config, e.to_string()))?;
    cfg.validate().map_err(|e| fail(TlStatus::Config, e.to_string()))?;
    Ok(cfg)
}

/// Create a session from a JSON config document.
///
/// Pass a null `config_json` to use the built-in defaults. On success the new
/// handle is written to `out` and must be released with [`tl_session_free`].
///
/// # Safety
///
/// `config_json` must be null or a NUL-terminated string. `out` must be a
/// valid pointer to writable storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn tl_session_new(config_json: *const c_char, out: *mut *mut TlSession) -> TlStatus {
    guard(|| {
        if out.is_null() {
            return fail(TlStatus::NullPointer, "out is null");
        }
        // SAFETY: `out` is non-null and writable per the contract.
        unsafe { *out = ptr::null_mut() };
        // SAFETY: forwarded caller contract.
        let cfg = match unsafe { config_arg(config_json) } {
            Ok(c) => c,
            Err(status) => return status,
        };
        match Session::new(cfg) {
            Ok(inner) => {
                let handle = Box::into_raw(Box::new(TlSession { inner }));
                // SAFETY: as above.
                unsafe { *out = handle };
                TlStatus::Ok
            }
            Err(e) => fail(TlStatus::Config, e.to_string()),
        }
    })
}

/// Release a session. Null is ignored.
///
/// # Safety
///
/// `session` must be null or a handle from [`tl_session_new`] that has not
/// already been freed.
#[no_mangle]
pub unsafe extern "C" fn tl_session_free(session: *mut TlSession) {
    if !session.is_null() {
        // SAFETY: ownership returns to Rust exactly once per the contract.
        drop(unsafe { Box::from_raw(session) });
    }
}

/// Advance the session by `ticks` physics steps.
///
/// # Safety
///
/// `session` must be a live handle from [`tl_session_new`].
#[no_mangle]
pub unsafe extern "C" fn tl_session_step(session: *mut TlSession, ticks: u64) -> TlStatus {
    guard(|| {
        // SAFETY: live, exclusive handle per the contract.
        let Some(s) = (unsafe { session.as_mut() }) else {
            return fail(TlStatus::NullPointer, "session is null");
        };
        for _ in 0..ticks {
            s.inner.tick();
        }
        TlStatus::Ok
    })
}

/// Override the hand target height in metres; clamped to the valid range.
///
/// # Safety
///
/// `session` must be a live handle from [`tl_session_new`].
#[no_mangle]
pub unsafe extern "C" fn tl_session_set_target(session: *mut TlSession, z_target: f64) -> TlStatus {
    guard(|| {
        // SAFETY: live, exclusive handle per the contract.
        let Some(s) = (unsafe { session.as_mut() }) else {
            return fail(TlStatus::NullPointer, "session is null");
        };
        if !z_target.is_finite() {
            return fail(TlStatus::Config, "z_target must be finite");
        }
        s.inner.set_target(z_target);
        TlStatus::Ok
    })
}

/// Discard the sensor calibration and start collecting extrema afresh.
///
/// # Safety
///
/// `session` must be a live handle from [`tl_session_new`].
#[no_mangle]
pub unsafe extern "C" fn tl_session_reset_calibration(session: *mut TlSession) -> TlStatus {
    guard(|| {
        // SAFETY: live, exclusive handle per the contract.
        let Some(s) = (unsafe { session.as_mut() }) else {
            return fail(TlStatus::NullPointer, "session is null");
        };
        s.inner.reset_calibration();
        TlStatus::Ok
    })
}

/// Copy the current state snapshot into `out`.
///
/// # Safety
///
/// `session` must be a live handle from [`tl_session_new`] and `out` a valid
/// pointer to writable [`TlState`] storage.
#[no_mangle]
pub unsafe extern "C" fn tl_session_state(session: *const TlSession, out: *mut TlState) -> TlStatus {
    guard(|| {
        // SAFETY: live handle per the contract.
        let Some(s) = (unsafe { session.as_ref() }) else {
            return fail(TlStatus::NullPointer, "session is null");
        };
        if out.is_null() {
            return fail(TlStatus::NullPointer, "out is null");
        }
        let s = &s.inner;
        let magnet = s.magnet();
        let sensor = s.last_sensor();
        let actuator = s.last_actuator();
        let state = TlState {
            t: s.time(),
            z: magnet.z,
            v: magnet.v,
            raw_code: sensor.map_or(-1, |f| i32::from(f.raw_code)),
            proximity: sensor.map_or(0.0, |f| f.proximity),
            level: actuator.map_or(-1, |f| i32::from(f.level)),
            u_q: actuator.map_or(0.0, |f| f.u_q),
            current: actuator.map_or(0.0, |f| f.current),
            trigger_count: s.behaviour_state().trigger_count,
        };
        // SAFETY: non-null and writable per the contract.
        unsafe { out.write(state) };
        TlStatus::Ok
    })
}

/// Run a full offline session and write its trace files into `out_dir`.
///
/// Pass a null `config_json` to use the built-in defaults.
///
/// # Safety
///
/// `config_json` must be null or a NUL-terminated string; `out_dir` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tl_run_and_export(config_json: *const c_char, out_dir: *const c_char) -> TlStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let dir = match unsafe { str_arg(out_dir, "out_dir") } {
            Ok(d) => d,
            Err(status) => return status,
        };
        // SAFETY: forwarded caller contract.
        let cfg = match unsafe { config_arg(config_json) } {
            Ok(c) => c,
            Err(status) => return status,
        };
        let trace = match run_session(&cfg) {
            Ok(t) => t,
            Err(e) => return fail(TlStatus::Config, e.to_string()),
        };
        match export_trace(&trace, Path::new(dir)) {
            Ok(_) => TlStatus::Ok,
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Quantize a drive value to the 26-level actuator grid.
///
/// Returns the level index (0..=25) and writes the quantized drive to
/// `u_q_out` when it is non-null.
///
/// # Safety
///
/// `u_q_out` must be null or a valid pointer to writable `double` storage.
#[no_mangle]
pub unsafe extern "C" fn tl_quantize26(u: f64, u_q_out: *mut f64) -> u8 {
    let (level, u_q) = quantize26(u);
    if !u_q_out.is_null() {
        // SAFETY: non-null and writable per the contract.
        unsafe { u_q_out.write(u_q) };
    }
    level
}

/// Coil force in newtons at drive `u` and height `z` with default physics.
#[no_mangle]
pub extern "C" fn tl_coil_force(u: f64, z: f64) -> f64 {
    coil_force(u, z, &PhysicsConfig::default())
}

/// Message describing the most recent failure on this thread, or null.
///
/// The returned string is owned by the caller and must be released with
/// [`tl_string_free`].
#[no_mangle]
pub extern "C" fn tl_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null_mut(), |c| c.clone().into_raw()))
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
///
/// `s` must be null or a pointer from [`tl_last_error_message`] that has not
/// already been freed.
#[no_mangle]
pub unsafe extern "C" fn tl_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: allocated by `CString::into_raw` in this library.
        drop(unsafe { CString::from_raw(s) });
    }
}
