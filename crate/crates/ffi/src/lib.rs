//! C ABI over the mean-field model.
//!
//! Every function returns an [`OvhStatus`] and writes results through out
//! pointers. Models and sweep traces are opaque handles released with their
//! `_free` function. After a failure, [`ovh_last_error_message`] describes it
//! on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use overhauser::config::{parse_config, ConfigError, RunConfig};
use overhauser::meanfield::{self, MeanFieldParams, SteadyState};
use overhauser::model::{self, HoleNuclearParams, ModelParams};
use overhauser::sweep::{run_sweep, Pass, SweepSchedule, TraceSample};
use overhauser::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OvhStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    ValidationError = 4,
    NonConverged = 5,
    NoConvergence = 6,
    BracketEscape = 7,
    GridTooSmall = 8,
    CflViolation = 9,
    NumericOverflow = 10,
    BufferTooSmall = 11,
    IndexOutOfRange = 12,
    Panic = 13,
}

/// Model, feedback and sweep settings.
pub struct OvhModel {
    model: ModelParams,
    meanfield: MeanFieldParams,
    hole: HoleNuclearParams,
    schedule: SweepSchedule,
}

/// A finished sweep trace.
pub struct OvhSweep {
    samples: Vec<TraceSample>,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OvhSteadyState {
    /// Shift [rad/ns].
    pub omega_f: f64,
    pub stable: bool,
    /// `|drift|` at the root [rad/ns^2].
    pub residual: f64,
    pub basin_seed: f64,
    pub scaled_time: f64,
    /// Width of the final sign-change bracket [rad/ns].
    pub bracket: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OvhSample {
    /// Delay [ns].
    pub tau: f64,
    pub omega_f: f64,
    pub count: f64,
    /// Pumping rate at the shift [1/ns].
    pub beta_f: f64,
    pub stable: bool,
    pub jumped: bool,
    /// Set on the descending pass.
    pub backward: bool,
    pub residual: f64,
}

impl From<SteadyState> for OvhSteadyState {
    fn from(s: SteadyState) -> Self {
        Self {
            omega_f: s.omega_f,
            stable: s.stable,
            residual: s.residual,
            basin_seed: s.basin_seed,
            scaled_time: s.scaled_time,
            bracket: s.bracket,
        }
    }
}

impl From<&TraceSample> for OvhSample {
    fn from(t: &TraceSample) -> Self {
        Self {
            tau: t.tau,
            omega_f: t.omega_f,
            count: t.count,
            beta_f: t.beta_f,
            stable: t.stable,
            jumped: t.jumped,
            backward: t.pass == Pass::Backward,
            residual: t.residual,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: OvhStatus, msg: impl Into<String>) -> OvhStatus {
    set_error(msg);
    status
}

fn from_error(e: &Error) -> OvhStatus {
    let status = match e {
        Error::InvalidParameter { .. } => OvhStatus::ValidationError,
        Error::NonConverged { .. } => OvhStatus::NonConverged,
        Error::NoConvergence { .. } => OvhStatus::NoConvergence,
        Error::BracketEscape { .. } => OvhStatus::BracketEscape,
        Error::GridTooSmall { .. } => OvhStatus::GridTooSmall,
        Error::CflViolation { .. } => OvhStatus::CflViolation,
        Error::Diverged { .. } => OvhStatus::NumericOverflow,
    };
    fail(status, e.to_string())
}

fn from_config_error(e: &ConfigError) -> OvhStatus {
    let status = match e {
        ConfigError::Parse { .. } => OvhStatus::ParseError,
        ConfigError::Validation { .. } => OvhStatus::ValidationError,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> OvhStatus) -> OvhStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(OvhStatus::Panic, "internal panic"))
}

impl OvhModel {
    fn from_config(c: &RunConfig) -> Self {
        Self {
            model: c.model_params(),
            meanfield: c.meanfield_params(),
            hole: c.hole_params(),
            schedule: c.sweep,
        }
    }
}

unsafe fn model_ref<'a>(m: *const OvhModel) -> Option<&'a OvhModel> {
    m.as_ref()
}

/// Creates a model with every setting at its default.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn ovh_model_new_default(out: *mut *mut OvhModel) -> OvhStatus {
    guard(|| {
        if out.is_null() {
            return fail(OvhStatus::NullPointer, "out is null");
        }
        match parse_config("") {
            Ok(eff) => {
                *out = Box::into_raw(Box::new(OvhModel::from_config(&eff.config)));
                OvhStatus::Ok
            }
            Err(e) => from_config_error(&e),
        }
    })
}

/// Creates a model from TOML configuration text, as read by the CLI.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn ovh_model_from_config(text: *const c_char, out: *mut *mut OvhModel) -> OvhStatus {
    guard(|| {
        if text.is_null() || out.is_null() {
            return fail(OvhStatus::NullPointer, "text or out is null");
        }
        let Ok(text) = CStr::from_ptr(text).to_str() else {
            return fail(OvhStatus::InvalidUtf8, "config text is not UTF-8");
        };
        match parse_config(text) {
            Ok(eff) => {
                *out = Box::into_raw(Box::new(OvhModel::from_config(&eff.config)));
                OvhStatus::Ok
            }
            Err(e) => from_config_error(&e),
        }
    })
}

/// # Safety
/// `model` must come from an `ovh_model_*` constructor and not be freed
/// already. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ovh_model_free(model: *mut OvhModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Steady-state count rate at shift `omega` [rad/ns] and delay `tau` [ns].
///
/// # Safety
/// `model` must be a live handle and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn ovh_count_rate(model: *const OvhModel, omega: f64, tau: f64, out: *mut f64) -> OvhStatus {
    guard(|| {
        let (Some(m), false) = (model_ref(model), out.is_null()) else {
            return fail(OvhStatus::NullPointer, "model or out is null");
        };
        *out = model::count_rate(omega, tau, &m.model);
        OvhStatus::Ok
    })
}

/// Mean-field drift of the shift [rad/ns^2].
///
/// # Safety
/// `model` must be a live handle and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn ovh_drift(model: *const OvhModel, omega: f64, tau: f64, out: *mut f64) -> OvhStatus {
    guard(|| {
        let (Some(m), false) = (model_ref(model), out.is_null()) else {
            return fail(OvhStatus::NullPointer, "model or out is null");
        };
        *out = meanfield::drift(omega, tau, &m.model, &m.meanfield);
        OvhStatus::Ok
    })
}

/// Relaxes from `omega_init` to the stable root of its basin.
///
/// # Safety
/// `model` must be a live handle and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn ovh_relax_to_steady(
    model: *const OvhModel,
    omega_init: f64,
    tau: f64,
    out: *mut OvhSteadyState,
) -> OvhStatus {
    guard(|| {
        let (Some(m), false) = (model_ref(model), out.is_null()) else {
            return fail(OvhStatus::NullPointer, "model or out is null");
        };
        match meanfield::relax_to_steady(omega_init, tau, &m.model, &m.meanfield) {
            Ok(s) => {
                *out = s.into();
                OvhStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Every root of the drift at `tau`, ascending in shift.
///
/// Writes up to `capacity` roots into `buf` and the total count into
/// `n_roots`. Returns `BufferTooSmall` when the count exceeds `capacity`;
/// `buf` may be null when `capacity` is 0.
///
/// # Safety
/// `buf` must be valid for `capacity` writes and `n_roots` for one.
#[no_mangle]
pub unsafe extern "C" fn ovh_steady_states(
    model: *const OvhModel,
    tau: f64,
    buf: *mut OvhSteadyState,
    capacity: usize,
    n_roots: *mut usize,
) -> OvhStatus {
    guard(|| {
        let (Some(m), false) = (model_ref(model), n_roots.is_null()) else {
            return fail(OvhStatus::NullPointer, "model or n_roots is null");
        };
        if buf.is_null() && capacity > 0 {
            return fail(OvhStatus::NullPointer, "buf is null");
        }
        let roots = meanfield::steady_states(tau, &m.model, &m.meanfield);
        *n_roots = roots.len();
        for (i, r) in roots.iter().take(capacity).enumerate() {
            *buf.add(i) = (*r).into();
        }
        if roots.len() > capacity {
            return fail(
                OvhStatus::BufferTooSmall,
                format!("{} roots, capacity {capacity}", roots.len()),
            );
        }
        OvhStatus::Ok
    })
}

/// Runs the configured delay sweep.
///
/// # Safety
/// `model` must be a live handle and `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn ovh_sweep_run(model: *const OvhModel, out: *mut *mut OvhSweep) -> OvhStatus {
    guard(|| {
        let (Some(m), false) = (model_ref(model), out.is_null()) else {
            return fail(OvhStatus::NullPointer, "model or out is null");
        };
        match run_sweep(&m.schedule, &m.model, &m.meanfield) {
            Ok(samples) => {
                *out = Box::into_raw(Box::new(OvhSweep { samples }));
                OvhStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Number of samples in a sweep, 0 for null.
///
/// # Safety
/// `sweep` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ovh_sweep_len(sweep: *const OvhSweep) -> usize {
    sweep.as_ref().map_or(0, |s| s.samples.len())
}

/// # Safety
/// `sweep` must be a live handle and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn ovh_sweep_get(sweep: *const OvhSweep, index: usize, out: *mut OvhSample) -> OvhStatus {
    guard(|| {
        let (Some(s), false) = (sweep.as_ref(), out.is_null()) else {
            return fail(OvhStatus::NullPointer, "sweep or out is null");
        };
        match s.samples.get(index) {
            Some(t) => {
                *out = t.into();
                OvhStatus::Ok
            }
            None => fail(
                OvhStatus::IndexOutOfRange,
                format!("index {index}, length {}", s.samples.len()),
            ),
        }
    })
}

/// # Safety
/// `sweep` must come from [`ovh_sweep_run`] and not be freed already. Null
/// is ignored.
#[no_mangle]
pub unsafe extern "C" fn ovh_sweep_free(sweep: *mut OvhSweep) {
    if !sweep.is_null() {
        drop(Box::from_raw(sweep));
    }
}

/// Golden-rule rate [1/ns] at which the trion hole flips a nucleus.
///
/// # Safety
/// `model` must be a live handle and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn ovh_trion_flip_rate(model: *const OvhModel, out: *mut f64) -> OvhStatus {
    guard(|| {
        let (Some(m), false) = (model_ref(model), out.is_null()) else {
            return fail(OvhStatus::NullPointer, "model or out is null");
        };
        *out = model::trion_flip_rate(&m.hole);
        OvhStatus::Ok
    })
}

/// Message for the last failure on this thread, or null after a success.
/// Valid until the next `ovh_*` call on the same thread.
#[no_mangle]
pub extern "C" fn ovh_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static name of a status, e.g. `"NO_CONVERGENCE"`.
#[no_mangle]
pub extern "C" fn ovh_status_name(status: OvhStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        OvhStatus::Ok => b"OK\0",
        OvhStatus::NullPointer => b"NULL_POINTER\0",
        OvhStatus::InvalidUtf8 => b"INVALID_UTF8\0",
        OvhStatus::ParseError => b"PARSE_ERROR\0",
        OvhStatus::ValidationError => b"VALIDATION_ERROR\0",
        OvhStatus::NonConverged => b"NON_CONVERGED\0",
        OvhStatus::NoConvergence => b"NO_CONVERGENCE\0",
        OvhStatus::BracketEscape => b"BRACKET_ESCAPE\0",
        OvhStatus::GridTooSmall => b"GRID_TOO_SMALL\0",
        OvhStatus::CflViolation => b"CFL_VIOLATION\0",
        OvhStatus::NumericOverflow => b"NUMERIC_OVERFLOW\0",
        OvhStatus::BufferTooSmall => b"BUFFER_TOO_SMALL\0",
        OvhStatus::IndexOutOfRange => b"INDEX_OUT_OF_RANGE\0",
        OvhStatus::Panic => b"PANIC\0",
    };
    s.as_ptr().cast()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_names_match_core_error_codes() {
        let e = Error::NoConvergence {
            tau: 0.1,
            t_reached: 1.0,
            omega: 0.0,
            drift: 1.0,
        };
        let status = from_error(&e);
        let name = unsafe { CStr::from_ptr(ovh_status_name(status)) };
        assert_eq!(name.to_str().unwrap(), e.code());
        let e = Error::Diverged { t: 1.0 };
        let name = unsafe { CStr::from_ptr(ovh_status_name(from_error(&e))) };
        assert_eq!(name.to_str().unwrap(), e.code());
    }
}
