//! C ABI over `hawkes-core`.
//!
//! Every fallible function returns a [`HawkesStatus`]; on failure the message
//! is available from [`hawkes_last_error_message`] on the same thread. Objects
//! are opaque handles released with their `_free` function, and strings
//! returned through out-pointers are released with [`hawkes_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hawkes_core::analysis;
use hawkes_core::config::{self, LoadedConfig, SamplerKind};
use hawkes_core::experiment::{self, Command};
use hawkes_core::multitype;
use hawkes_core::noise::CanonicalNoise;
use hawkes_core::samplers;
use hawkes_core::{EventStream, HawkesError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HawkesStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Config = 4,
    Supercritical = 5,
    Simulation = 6,
    Numerical = 7,
    Unsupported = 8,
    Io = 9,
    Panic = 10,
}

/// A validated experiment config.
pub struct HawkesModel {
    loaded: LoadedConfig,
}

/// One simulated event stream.
pub struct HawkesEvents {
    stream: EventStream,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &HawkesError) -> HawkesStatus {
    match e {
        HawkesError::InvalidParameter { .. } | HawkesError::Domain(_) => HawkesStatus::InvalidArgument,
        HawkesError::Config(_) | HawkesError::UnknownKeys(_) | HawkesError::Json(_) => HawkesStatus::Config,
        HawkesError::Supercritical(_) => HawkesStatus::Supercritical,
        HawkesError::EnvelopeViolation { .. } | HawkesError::TooManyEvents { .. } => HawkesStatus::Simulation,
        HawkesError::Numerical(_) => HawkesStatus::Numerical,
        HawkesError::Unsupported(_) | HawkesError::Precondition(_) => HawkesStatus::Unsupported,
        HawkesError::Io(_) => HawkesStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (HawkesStatus, String)>) -> HawkesStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HawkesStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            HawkesStatus::Panic
        }
    }
}

fn core_err(e: HawkesError) -> (HawkesStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (HawkesStatus, String) {
    (HawkesStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (HawkesStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (HawkesStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw()
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn hawkes_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hawkes_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parse and validate a JSON experiment config. No environment overrides are applied.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hawkes_model_from_json(json: *const c_char, out: *mut *mut HawkesModel) -> HawkesStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = read_str(json, "json")?;
        let loaded = config::from_str_with_env(text, std::iter::empty()).map_err(core_err)?;
        *out = Box::into_raw(Box::new(HawkesModel { loaded }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`hawkes_model_from_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hawkes_model_free(model: *mut HawkesModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Hex SHA-256 of the canonical config text.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hawkes_model_hash(model: *const HawkesModel, out: *mut *mut c_char) -> HawkesStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = into_c_string(m.loaded.hash.clone());
        Ok(())
    })
}

/// Simulate one replica on `[0, run.horizon]` with the configured sampler,
/// reading the noise of `(seed, stream)`.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hawkes_simulate(
    model: *const HawkesModel,
    seed: u64,
    stream: u64,
    out: *mut *mut HawkesEvents,
) -> HawkesStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = &m.loaded.config;
        let noise = CanonicalNoise::new(seed, stream);
        let stream = match (&cfg.model.multitype, cfg.run.sampler) {
            (Some(mt), _) => multitype::simulate_multitype(mt, cfg.run.horizon, &noise),
            (None, SamplerKind::Cluster) => samplers::simulate_cluster(&cfg.sim_config().map_err(core_err)?, &noise),
            (None, SamplerKind::Thinning) => samplers::simulate_thinning(&cfg.sim_config().map_err(core_err)?, &noise),
        }
        .map_err(core_err)?;
        *out = Box::into_raw(Box::new(HawkesEvents { stream }));
        Ok(())
    })
}

/// Number of events, or 0 for a null handle.
///
/// # Safety
/// `events` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hawkes_events_len(events: *const HawkesEvents) -> usize {
    events.as_ref().map_or(0, |e| e.stream.len())
}

/// Copy up to `capacity` event times into `buf`; `written` receives the count.
///
/// # Safety
/// `buf` must hold `capacity` doubles; `events` and `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hawkes_events_times(
    events: *const HawkesEvents,
    buf: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> HawkesStatus {
    guard(|| {
        let e = events.as_ref().ok_or_else(|| null("events"))?;
        if written.is_null() || (buf.is_null() && capacity > 0) {
            return Err(null("buffer"));
        }
        let times = e.stream.times();
        let n = times.len().min(capacity);
        if n > 0 {
            ptr::copy_nonoverlapping(times.as_ptr(), buf, n);
        }
        *written = n;
        Ok(())
    })
}

/// Copy up to `capacity` event types into `buf`; `written` receives the count.
///
/// # Safety
/// As for [`hawkes_events_times`].
#[no_mangle]
pub unsafe extern "C" fn hawkes_events_types(
    events: *const HawkesEvents,
    buf: *mut u16,
    capacity: usize,
    written: *mut usize,
) -> HawkesStatus {
    guard(|| {
        let e = events.as_ref().ok_or_else(|| null("events"))?;
        if written.is_null() || (buf.is_null() && capacity > 0) {
            return Err(null("buffer"));
        }
        let n = e.stream.len().min(capacity);
        for (i, m) in e.stream.marks().iter().take(n).enumerate() {
            *buf.add(i) = m.kind;
        }
        *written = n;
        Ok(())
    })
}

/// # Safety
/// `events` must come from [`hawkes_simulate`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hawkes_events_free(events: *mut HawkesEvents) {
    if !events.is_null() {
        drop(Box::from_raw(events));
    }
}

/// Hypothesis report as a JSON string.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hawkes_check_json(model: *const HawkesModel, out: *mut *mut c_char) -> HawkesStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let art = experiment::run(Command::Check, &m.loaded).map_err(core_err)?;
        *out = into_c_string(art.body);
        Ok(())
    })
}

/// Total-variation bound at time `t` between the process started from
/// `analysis.perturbation` (or the initial condition) and from rest.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hawkes_tv_bound(model: *const HawkesModel, t: f64, out: *mut f64) -> HawkesStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = &m.loaded.config;
        let a = &cfg.analysis;
        let g = a.perturbation.clone().unwrap_or_else(|| cfg.model.initial.clone());
        let setup = analysis::speed_setup(&cfg.model.rate, &cfg.modulus(), &cfg.model.kernel, &g, a.grid_step, a.grid_len)
            .map_err(core_err)?;
        *out = analysis::tv_bound(&setup).and_then(|b| b.at(t)).map_err(core_err)?;
        Ok(())
    })
}

/// Spectral radius of a row-major non-negative `d × d` matrix. `converged`
/// (optional) is set to 0 when the value is only a Gershgorin bound.
///
/// # Safety
/// `matrix` must hold `d * d` doubles; `radius` must be valid; `converged` may be null.
#[no_mangle]
pub unsafe extern "C" fn hawkes_spectral_radius(
    matrix: *const f64,
    d: usize,
    radius: *mut f64,
    converged: *mut i32,
) -> HawkesStatus {
    guard(|| {
        if matrix.is_null() || radius.is_null() {
            return Err(null("matrix or radius"));
        }
        let flat = std::slice::from_raw_parts(matrix, d * d);
        let rows: Vec<Vec<f64>> = flat.chunks(d.max(1)).map(|r| r.to_vec()).collect();
        let rep = multitype::spectral_radius(&rows).map_err(core_err)?;
        *radius = rep.radius;
        if !converged.is_null() {
            *converged = rep.converged as i32;
        }
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hawkes_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
