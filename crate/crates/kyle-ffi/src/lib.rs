//! C ABI over the equilibrium lab.
//!
//! Scenarios are opaque handles created from TOML text or a file path.
//! Results come back either as JSON strings (caller frees with
//! `kyle_string_free`) or through caller-allocated arrays. Every call
//! returns a status code; on failure `kyle_last_error_message` returns a
//! human-readable description for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use kyle_core::equil::report::{run_mc, McConfig, McInputs};
use kyle_core::error::Error;
use kyle_core::options::iv_curve;
use kyle_core::scenario::Scenario;

/// Opaque scenario handle.
pub struct KyleScenario {
    scenario: Scenario,
}

/// Status codes returned by every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KyleStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    ParseError = 3,
    DomainError = 4,
    SolverFailure = 5,
    IoError = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> KyleStatus {
    match err {
        Error::InvalidArgument(_) => KyleStatus::InvalidArgument,
        Error::Domain(_) => KyleStatus::DomainError,
        Error::Solver(_) => KyleStatus::SolverFailure,
        Error::Config(_) => KyleStatus::ParseError,
        Error::Io(_) => KyleStatus::IoError,
    }
}

fn guard<F: FnOnce() -> KyleStatus>(f: F) -> KyleStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic".to_string());
            KyleStatus::Panic
        }
    }
}

/// Version of the library as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn kyle_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the last error on this thread, or NULL when none.
/// The caller owns the returned string (free with `kyle_string_free`).
#[no_mangle]
pub extern "C" fn kyle_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        Some(c) => c.clone().into_raw(),
        None => std::ptr::null_mut(),
    })
}

/// Free a string returned by this library.
///
/// # Safety
/// `s` must be a pointer previously returned by this library (or NULL).
#[no_mangle]
pub unsafe extern "C" fn kyle_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn build_scenario(
    make: impl FnOnce() -> Result<Scenario, Error>,
    out: *mut *mut KyleScenario,
) -> KyleStatus {
    if out.is_null() {
        set_error("output handle pointer is NULL".into());
        return KyleStatus::NullArgument;
    }
    match make() {
        Ok(scenario) => {
            *out = Box::into_raw(Box::new(KyleScenario { scenario }));
            KyleStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    }
}

/// Parse a scenario from TOML text.
///
/// # Safety
/// `text` must be a valid NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn kyle_scenario_parse(
    text: *const c_char,
    out: *mut *mut KyleScenario,
) -> KyleStatus {
    guard(|| {
        if text.is_null() {
            set_error("scenario text is NULL".into());
            return KyleStatus::NullArgument;
        }
        let s = match CStr::from_ptr(text).to_str() {
            Ok(s) => s.to_owned(),
            Err(_) => {
                set_error("scenario text is not valid UTF-8".into());
                return KyleStatus::InvalidArgument;
            }
        };
        build_scenario(|| Scenario::from_toml_str(&s), out)
    })
}

/// Load a scenario from a TOML file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn kyle_scenario_load(
    path: *const c_char,
    out: *mut *mut KyleScenario,
) -> KyleStatus {
    guard(|| {
        if path.is_null() {
            set_error("path is NULL".into());
            return KyleStatus::NullArgument;
        }
        let p = match CStr::from_ptr(path).to_str() {
            Ok(s) => s.to_owned(),
            Err(_) => {
                set_error("path is not valid UTF-8".into());
                return KyleStatus::InvalidArgument;
            }
        };
        build_scenario(|| Scenario::from_file(Path::new(&p)), out)
    })
}

/// Destroy a scenario handle.
///
/// # Safety
/// `handle` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kyle_scenario_free(handle: *mut KyleScenario) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Run the simulate pipeline and return the verification report as JSON.
/// `seed_override < 0` and `n_paths_override == 0` keep the config values.
///
/// # Safety
/// `handle` must be a live scenario handle; `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn kyle_simulate_json(
    handle: *const KyleScenario,
    seed_override: i64,
    n_paths_override: usize,
    out_json: *mut *mut c_char,
) -> KyleStatus {
    guard(|| {
        if handle.is_null() || out_json.is_null() {
            set_error("NULL handle or output pointer".into());
            return KyleStatus::NullArgument;
        }
        let sc = &(*handle).scenario;
        let mut mc: McConfig = sc.config.mc.clone();
        if seed_override >= 0 {
            mc.seed = seed_override as u64;
        }
        if n_paths_override > 0 {
            mc.n_paths = n_paths_override;
        }
        let backend = match sc.solve_backend() {
            Ok(b) => b,
            Err(e) => {
                set_error(e.to_string());
                return status_of(&e);
            }
        };
        let inputs = McInputs {
            market: &sc.market,
            grid: &sc.grid,
            dist: &sc.config.dist,
            vol: &sc.config.vol,
            rfield: &sc.rfield,
            backend: &backend,
        };
        match run_mc(&inputs, &mc) {
            Ok(outcome) => {
                let json = serde_json::to_string_pretty(&outcome.report).unwrap_or_default();
                *out_json = CString::new(json).unwrap().into_raw();
                KyleStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Price one implied-total-variance curve into caller-allocated buffers of
/// length `n_strikes`. Strikes whose time value is below resolution get
/// NaN entries; `out_interior_minima` reports the well count of the
/// surviving curve.
///
/// # Safety
/// All pointers must be valid for `n_strikes` elements.
#[no_mangle]
pub unsafe extern "C" fn kyle_iv_curve(
    handle: *const KyleScenario,
    xi: f64,
    big_sigma: f64,
    strikes: *const f64,
    n_strikes: usize,
    out_prices: *mut f64,
    out_total_variance: *mut f64,
    out_interior_minima: *mut u32,
) -> KyleStatus {
    guard(|| {
        if handle.is_null() || strikes.is_null() || out_prices.is_null() || out_total_variance.is_null() {
            set_error("NULL pointer argument".into());
            return KyleStatus::NullArgument;
        }
        if n_strikes == 0 {
            set_error("empty strike list".into());
            return KyleStatus::InvalidArgument;
        }
        let sc = &(*handle).scenario;
        let ks = std::slice::from_raw_parts(strikes, n_strikes);
        match iv_curve(&sc.rfield, xi, big_sigma, ks) {
            Ok(curve) => {
                let prices = std::slice::from_raw_parts_mut(out_prices, n_strikes);
                let tvs = std::slice::from_raw_parts_mut(out_total_variance, n_strikes);
                prices.fill(f64::NAN);
                tvs.fill(f64::NAN);
                // align survivors back onto the requested grid
                let mut j = 0;
                for (i, &k) in ks.iter().enumerate() {
                    if j < curve.strikes.len() && curve.strikes[j] == k {
                        prices[i] = curve.prices[j];
                        tvs[i] = curve.total_variance[j];
                        j += 1;
                    }
                }
                if !out_interior_minima.is_null() {
                    *out_interior_minima = curve.interior_minima as u32;
                }
                KyleStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                status_of(&e)
            }
        }
    })
}
