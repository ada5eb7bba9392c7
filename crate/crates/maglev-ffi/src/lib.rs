//! C ABI over the maglev toolkit.
//!
//! Conventions shared by every entry point:
//!
//! * Experiments are opaque handles created by [`maglev_experiment_new`] or
//!   [`maglev_experiment_from_file`] and released with
//!   [`maglev_experiment_free`]. A handle owns an immutable configuration;
//!   concurrent runs on the same handle from different threads are safe.
//! * Functions report a [`MaglevStatus`]. Any value other than `OK` stores a
//!   human-readable message retrievable with [`maglev_last_error`].
//! * Array parameters have fixed sizes: coordinate vectors are 6 doubles in
//!   the order x, y, z, chi, psi, zeta; matrices are 36 doubles, row-major.
//! * Panics never unwind across the boundary; they surface as
//!   `RUN_ERROR` with a generic message.
//!
//! The matching header, `include/maglev.h`, is regenerated on every build.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use maglev::cli::stability_analysis;
use maglev::config::ExperimentConfig;
use maglev::dynamics::GeneralizedState;
use maglev::sim::{error_metrics, Scenario};
use maglev::{Error, MethodKind, Vector6};

/// Outcome of a call across the C boundary.
///
/// Everything except `Ok` leaves a message for `maglev_last_error`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaglevStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The configuration file or a selector name was rejected.
    ConfigError = 3,
    /// The simulation or certificate search failed.
    RunError = 4,
    /// Reading or writing a file failed.
    IoError = 5,
}

/// Opaque owner of one experiment configuration.
pub struct MaglevExperiment {
    cfg: ExperimentConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

/// Records `msg` as the thread's last error and passes `status` through.
fn fail(status: MaglevStatus, msg: impl std::fmt::Display) -> MaglevStatus {
    let text = msg.to_string();
    let stored = CString::new(text)
        .unwrap_or_else(|_| CString::new("error message contained an interior NUL").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(stored));
    status
}

fn fail_with(err: Error) -> MaglevStatus {
    let status = match err {
        Error::Config(_) => MaglevStatus::ConfigError,
        Error::Io(_) => MaglevStatus::IoError,
        _ => MaglevStatus::RunError,
    };
    fail(status, err)
}

/// Runs `body` with a panic guard so unwinding never crosses into C.
fn guarded(body: impl FnOnce() -> MaglevStatus) -> MaglevStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(MaglevStatus::RunError, "internal panic caught at the C boundary"),
    }
}

unsafe fn require_handle<'a>(
    handle: *const MaglevExperiment,
) -> Result<&'a MaglevExperiment, MaglevStatus> {
    handle
        .as_ref()
        .ok_or_else(|| fail(MaglevStatus::NullArgument, "experiment handle must not be null"))
}

unsafe fn require_str<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, MaglevStatus> {
    if ptr.is_null() {
        return Err(fail(MaglevStatus::NullArgument, format!("{name} must not be null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(MaglevStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn read_vector(ptr: *const f64, name: &str) -> Result<Vector6, MaglevStatus> {
    if ptr.is_null() {
        return Err(fail(MaglevStatus::NullArgument, format!("{name} must not be null")));
    }
    Ok(Vector6::from_column_slice(std::slice::from_raw_parts(ptr, 6)))
}

unsafe fn write_values(ptr: *mut f64, name: &str, values: &[f64]) -> Result<(), MaglevStatus> {
    if ptr.is_null() {
        return Err(fail(MaglevStatus::NullArgument, format!("{name} must not be null")));
    }
    std::ptr::copy_nonoverlapping(values.as_ptr(), ptr, values.len());
    Ok(())
}

fn parse_scenario(name: &str) -> Result<Scenario, MaglevStatus> {
    name.parse().map_err(fail_with)
}

fn parse_method(name: &str) -> Result<MethodKind, MaglevStatus> {
    name.parse().map_err(fail_with)
}

/// Returns the toolkit version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn maglev_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Returns the message of the most recent failure on the calling thread, or
/// null if no call has failed yet.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn maglev_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(std::ptr::null(), |msg| msg.as_ptr()))
}

/// Creates an experiment with the default configuration and stores the new
/// handle in `out`.
///
/// # Safety
///
/// `out` must be a valid pointer to writable storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn maglev_experiment_new(out: *mut *mut MaglevExperiment) -> MaglevStatus {
    guarded(|| {
        let Some(out) = out.as_mut() else {
            return fail(MaglevStatus::NullArgument, "out must not be null");
        };
        *out = Box::into_raw(Box::new(MaglevExperiment { cfg: ExperimentConfig::default() }));
        MaglevStatus::Ok
    })
}

/// Loads a TOML configuration file and stores the new handle in `out`.
///
/// # Safety
///
/// `path` must be a NUL-terminated string and `out` a valid pointer to
/// writable storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn maglev_experiment_from_file(
    path: *const c_char,
    out: *mut *mut MaglevExperiment,
) -> MaglevStatus {
    guarded(|| {
        let path = match require_str(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        if out.is_null() {
            return fail(MaglevStatus::NullArgument, "out must not be null");
        }
        match ExperimentConfig::from_path(Path::new(path)) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(MaglevExperiment { cfg }));
                MaglevStatus::Ok
            }
            Err(err) => fail_with(err),
        }
    })
}

/// Releases a handle. Passing null is a no-op; passing a freed handle is
/// undefined behavior.
///
/// # Safety
///
/// `handle` must be null or a pointer previously returned by one of the
/// constructors and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn maglev_experiment_free(handle: *mut MaglevExperiment) {
    if !handle.is_null() {
        guarded(|| {
            drop(Box::from_raw(handle));
            MaglevStatus::Ok
        });
    }
}

/// Simulates one scenario under one feedforward method and writes the
/// tracking-error norms per coordinate: `l2` receives the six
/// root-sum-square values, `linf` the six peak magnitudes.
///
/// Scenario names: `ol-match`, `ol-mismatch`, `cl-match`, `cl-mismatch`,
/// `cl-match-dist`, `cl-mismatch-dist`. Method names: `mass`,
/// `annihilate-global`, `annihilate-local`, `nonlinear`, `lpv-local`,
/// `lpv-global-inv`, `lpv-global-ic`.
///
/// # Safety
///
/// `scenario` and `method` must be NUL-terminated strings; `l2` and `linf`
/// must each point to writable storage for 6 doubles.
#[no_mangle]
pub unsafe extern "C" fn maglev_run_metrics(
    handle: *const MaglevExperiment,
    scenario: *const c_char,
    method: *const c_char,
    l2: *mut f64,
    linf: *mut f64,
) -> MaglevStatus {
    guarded(|| {
        let experiment = match require_handle(handle) {
            Ok(h) => h,
            Err(status) => return status,
        };
        let scenario = match require_str(scenario, "scenario").and_then(parse_scenario) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let method = match require_str(method, "method").and_then(parse_method) {
            Ok(m) => m,
            Err(status) => return status,
        };
        if l2.is_null() || linf.is_null() {
            return fail(MaglevStatus::NullArgument, "l2 and linf must not be null");
        }
        let record = match maglev::cli::run_one(&experiment.cfg, scenario, method) {
            Ok(record) => record,
            Err(err) => return fail_with(err),
        };
        let metrics = match error_metrics(&record) {
            Ok(metrics) => metrics,
            Err(err) => return fail_with(err),
        };
        if let Err(status) = write_values(l2, "l2", metrics.l2.as_slice()) {
            return status;
        }
        if let Err(status) = write_values(linf, "linf", metrics.linf.as_slice()) {
            return status;
        }
        MaglevStatus::Ok
    })
}

/// Simulates one scenario under one feedforward method and writes the full
/// sample record as CSV to `path` (same layout as the `maglev simulate`
/// artifacts).
///
/// # Safety
///
/// `scenario`, `method`, and `path` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn maglev_run_to_csv(
    handle: *const MaglevExperiment,
    scenario: *const c_char,
    method: *const c_char,
    path: *const c_char,
) -> MaglevStatus {
    guarded(|| {
        let experiment = match require_handle(handle) {
            Ok(h) => h,
            Err(status) => return status,
        };
        let scenario = match require_str(scenario, "scenario").and_then(parse_scenario) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let method = match require_str(method, "method").and_then(parse_method) {
            Ok(m) => m,
            Err(status) => return status,
        };
        let path = match require_str(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        let record = match maglev::cli::run_one(&experiment.cfg, scenario, method) {
            Ok(record) => record,
            Err(err) => return fail_with(err),
        };
        match std::fs::write(path, maglev::report::record_csv(&record)) {
            Ok(()) => MaglevStatus::Ok,
            Err(err) => fail_with(Error::Io(err)),
        }
    })
}

/// Runs the Lyapunov certificate search on the handle's configuration and
/// writes the largest certified energy-mixing parameter to `epsilon`.
///
/// Returns `RUN_ERROR` when no feasible parameter exists or when the
/// certified rate condition fails on some sample of the verification run.
///
/// # Safety
///
/// `epsilon` must point to writable storage for one double.
#[no_mangle]
pub unsafe extern "C" fn maglev_stability_epsilon(
    handle: *const MaglevExperiment,
    epsilon: *mut f64,
) -> MaglevStatus {
    guarded(|| {
        let experiment = match require_handle(handle) {
            Ok(h) => h,
            Err(status) => return status,
        };
        if epsilon.is_null() {
            return fail(MaglevStatus::NullArgument, "epsilon must not be null");
        }
        match stability_analysis(&experiment.cfg) {
            Ok(analysis) if analysis.rate_nonpositive => {
                *epsilon = analysis.epsilon;
                MaglevStatus::Ok
            }
            Ok(analysis) => fail(MaglevStatus::RunError, analysis.verdict),
            Err(err) => fail_with(err),
        }
    })
}

/// Evaluates the configuration-dependent mass matrix at the coordinates `q`
/// and writes it to `out` as 36 doubles in row-major order.
///
/// # Safety
///
/// `q` must point to 6 readable doubles and `out` to 36 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn maglev_mass_matrix(
    handle: *const MaglevExperiment,
    q: *const f64,
    out: *mut f64,
) -> MaglevStatus {
    guarded(|| {
        let experiment = match require_handle(handle) {
            Ok(h) => h,
            Err(status) => return status,
        };
        let q = match read_vector(q, "q") {
            Ok(v) => v,
            Err(status) => return status,
        };
        let m = maglev::mass_matrix(&q, &experiment.cfg.plant);
        let mut rows = [0.0; 36];
        for i in 0..6 {
            for j in 0..6 {
                rows[i * 6 + j] = m[(i, j)];
            }
        }
        match write_values(out, "out", &rows) {
            Ok(()) => MaglevStatus::Ok,
            Err(status) => status,
        }
    })
}

/// Solves the plant's forward dynamics at coordinates `q`, velocities `qd`,
/// and applied generalized forces `u`, writing the accelerations to `qdd`.
///
/// Returns `RUN_ERROR` if the mass matrix is not positive definite at `q`
/// (the pitch angle reached the representation boundary).
///
/// # Safety
///
/// `q`, `qd`, and `u` must each point to 6 readable doubles and `qdd` to 6
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn maglev_forward_dynamics(
    handle: *const MaglevExperiment,
    q: *const f64,
    qd: *const f64,
    u: *const f64,
    qdd: *mut f64,
) -> MaglevStatus {
    guarded(|| {
        let experiment = match require_handle(handle) {
            Ok(h) => h,
            Err(status) => return status,
        };
        let q = match read_vector(q, "q") {
            Ok(v) => v,
            Err(status) => return status,
        };
        let qd = match read_vector(qd, "qd") {
            Ok(v) => v,
            Err(status) => return status,
        };
        let u = match read_vector(u, "u") {
            Ok(v) => v,
            Err(status) => return status,
        };
        let state = GeneralizedState::new(q, qd);
        match maglev::forward_dynamics(&state, &u, &experiment.cfg.plant) {
            Ok(a) => match write_values(qdd, "qdd", a.as_slice()) {
                Ok(()) => MaglevStatus::Ok,
                Err(status) => status,
            },
            Err(err) => fail_with(err),
        }
    })
}
