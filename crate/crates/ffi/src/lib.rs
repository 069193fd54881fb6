//! C ABI for the fedslate training and evaluation library.
//!
//! Handles are opaque; every fallible call returns an [`FslStatus`] and
//! leaves a human-readable message retrievable through
//! [`fsl_last_error_message`]. Strings returned by this library must be
//! freed with [`fsl_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fedslate::harness::{compute_etror, ExperimentConfig, Session};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FslStatus {
    Ok = 0,
    /// A pointer argument was null or otherwise unusable.
    InvalidArgument = 1,
    /// The configuration failed to parse or validate.
    InvalidConfig = 2,
    /// Training or evaluation failed at runtime.
    RuntimeError = 3,
    /// A panic was caught at the boundary.
    Panic = 4,
}

/// One metrics row, mirroring the metrics CSV columns.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FslMetricsRow {
    pub episode: u64,
    pub return_a: f64,
    pub return_b: f64,
    pub epsilon: f64,
    pub loss_alpha: f64,
    pub loss_beta: f64,
    pub wall_ms: u64,
}

/// Opaque experiment handle.
pub struct FslRunner {
    session: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn classify(err: &fedslate::Error) -> FslStatus {
    match err {
        fedslate::Error::Config(_) | fedslate::Error::Json(_) => FslStatus::InvalidConfig,
        _ => FslStatus::RuntimeError,
    }
}

fn guard(f: impl FnOnce() -> FslStatus) -> FslStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_last_error("panic caught at the C boundary".into());
            FslStatus::Panic
        }
    }
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn fsl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// The most recent error message on this thread, or null when the last call
/// succeeded. Free with [`fsl_string_free`].
#[no_mangle]
pub extern "C" fn fsl_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map(|c| c.clone().into_raw())
            .unwrap_or(ptr::null_mut())
    })
}

/// Free a string allocated by this library.
///
/// # Safety
/// `s` must be a pointer previously returned by this library and not yet
/// freed; null is accepted and ignored.
#[no_mangle]
pub unsafe extern "C" fn fsl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn config_from_ptr(config_json: *const c_char) -> Result<ExperimentConfig, FslStatus> {
    if config_json.is_null() {
        set_last_error("config_json is null".into());
        return Err(FslStatus::InvalidArgument);
    }
    let text = match CStr::from_ptr(config_json).to_str() {
        Ok(t) => t,
        Err(_) => {
            set_last_error("config_json is not valid UTF-8".into());
            return Err(FslStatus::InvalidArgument);
        }
    };
    ExperimentConfig::from_json(text).map_err(|e| {
        set_last_error(e.to_string());
        FslStatus::InvalidConfig
    })
}

/// Create an experiment from a JSON configuration string. On success writes
/// the handle through `out` and returns `Ok`.
///
/// # Safety
/// `config_json` must be a valid NUL-terminated string and `out` a valid
/// pointer; the returned handle must be released with [`fsl_runner_free`]
/// or [`fsl_runner_finish`].
#[no_mangle]
pub unsafe extern "C" fn fsl_runner_new(
    config_json: *const c_char,
    out: *mut *mut FslRunner,
) -> FslStatus {
    guard(|| {
        clear_last_error();
        if out.is_null() {
            set_last_error("out is null".into());
            return FslStatus::InvalidArgument;
        }
        let config = match config_from_ptr(config_json) {
            Ok(c) => c,
            Err(status) => return status,
        };
        match Session::new(config) {
            Ok(session) => {
                *out = Box::into_raw(Box::new(FslRunner { session }));
                FslStatus::Ok
            }
            Err(e) => {
                set_last_error(e.to_string());
                classify(&e)
            }
        }
    })
}

/// Advance a runner by `count` episodes.
///
/// # Safety
/// `runner` must be a live handle from [`fsl_runner_new`].
#[no_mangle]
pub unsafe extern "C" fn fsl_runner_run_episodes(
    runner: *mut FslRunner,
    count: u64,
) -> FslStatus {
    guard(|| {
        clear_last_error();
        let Some(runner) = runner.as_mut() else {
            set_last_error("runner is null".into());
            return FslStatus::InvalidArgument;
        };
        match runner.session.run_episodes(count) {
            Ok(()) => FslStatus::Ok,
            Err(e) => {
                set_last_error(e.to_string());
                classify(&e)
            }
        }
    })
}

/// Number of completed episodes.
///
/// # Safety
/// `runner` must be a live handle from [`fsl_runner_new`] or null.
#[no_mangle]
pub unsafe extern "C" fn fsl_runner_episodes_done(runner: *const FslRunner) -> u64 {
    runner
        .as_ref()
        .map(|r| r.session.episodes_done())
        .unwrap_or(0)
}

/// Copy the metrics row of one episode into `out_row`.
///
/// # Safety
/// `runner` must be a live handle and `out_row` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fsl_runner_metrics_row(
    runner: *const FslRunner,
    episode: u64,
    out_row: *mut FslMetricsRow,
) -> FslStatus {
    guard(|| {
        clear_last_error();
        let Some(runner) = runner.as_ref() else {
            set_last_error("runner is null".into());
            return FslStatus::InvalidArgument;
        };
        if out_row.is_null() {
            set_last_error("out_row is null".into());
            return FslStatus::InvalidArgument;
        }
        match runner.session.metrics().get(episode as usize) {
            Some(m) => {
                *out_row = FslMetricsRow {
                    episode: m.episode,
                    return_a: m.return_a,
                    return_b: m.return_b,
                    epsilon: m.epsilon,
                    loss_alpha: m.loss_alpha,
                    loss_beta: m.loss_beta,
                    wall_ms: m.wall_ms,
                };
                FslStatus::Ok
            }
            None => {
                set_last_error(format!("episode {episode} has no metrics yet"));
                FslStatus::InvalidArgument
            }
        }
    })
}

/// Finish a runner: write the configured outputs (metrics CSV, checkpoint,
/// logs) and release the handle. The handle is consumed even on failure.
///
/// # Safety
/// `runner` must be a live handle from [`fsl_runner_new`]; it must not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fsl_runner_finish(runner: *mut FslRunner) -> FslStatus {
    guard(|| {
        clear_last_error();
        if runner.is_null() {
            set_last_error("runner is null".into());
            return FslStatus::InvalidArgument;
        }
        let boxed = Box::from_raw(runner);
        match boxed.session.finish() {
            Ok(_) => FslStatus::Ok,
            Err(e) => {
                set_last_error(e.to_string());
                classify(&e)
            }
        }
    })
}

/// Release a runner without writing outputs.
///
/// # Safety
/// `runner` must be a handle from [`fsl_runner_new`] or null.
#[no_mangle]
pub unsafe extern "C" fn fsl_runner_free(runner: *mut FslRunner) {
    if !runner.is_null() {
        drop(Box::from_raw(runner));
    }
}

/// Run a whole experiment from a JSON configuration. Outputs go to the
/// configured output directory.
///
/// # Safety
/// `config_json` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fsl_run_experiment(config_json: *const c_char) -> FslStatus {
    guard(|| {
        clear_last_error();
        let config = match config_from_ptr(config_json) {
            Ok(c) => c,
            Err(status) => return status,
        };
        match fedslate::harness::run_experiment(&config) {
            Ok(_) => FslStatus::Ok,
            Err(e) => {
                set_last_error(e.to_string());
                classify(&e)
            }
        }
    })
}

/// Episodes-to-reach-optimal-reward over a return series. Writes -1 to
/// `out_m_prime` (and NaN to `out_optimal`) when the series does not
/// converge.
///
/// # Safety
/// `values` must point to `len` readable doubles; the out pointers must be
/// valid.
#[no_mangle]
pub unsafe extern "C" fn fsl_etror(
    values: *const f64,
    len: usize,
    epsilon_term: f64,
    window: usize,
    out_m_prime: *mut i64,
    out_optimal: *mut f64,
) -> FslStatus {
    guard(|| {
        clear_last_error();
        if (values.is_null() && len > 0) || out_m_prime.is_null() || out_optimal.is_null() {
            set_last_error("null pointer argument".into());
            return FslStatus::InvalidArgument;
        }
        if window == 0 {
            set_last_error("window must be positive".into());
            return FslStatus::InvalidArgument;
        }
        let series: &[f64] = if len == 0 {
            &[]
        } else {
            std::slice::from_raw_parts(values, len)
        };
        let r = compute_etror(series, epsilon_term, window);
        match (r.m_prime, r.optimal_reward) {
            (Some(m), Some(opt)) => {
                *out_m_prime = m as i64;
                *out_optimal = opt;
            }
            _ => {
                *out_m_prime = -1;
                *out_optimal = f64::NAN;
            }
        }
        FslStatus::Ok
    })
}
