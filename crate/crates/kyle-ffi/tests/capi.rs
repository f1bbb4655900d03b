//! Exercise the C surface directly through the exported symbols.

use std::ffi::{CStr, CString};
use std::ptr;

use kyle_ffi::{
    kyle_iv_curve, kyle_last_error_message, kyle_scenario_free, kyle_scenario_parse,
    kyle_simulate_json, kyle_string_free, kyle_version, KyleScenario, KyleStatus,
};

const BASELINE: &str = r#"
version = 1

[market]
horizon = 1.0
rho = 0.0

[dist]
family = "lognormal"
scale = 1.0
log_vol = 0.5

[vol]
model = "deterministic"
levels = [[0.0, 1.0]]

[grid]
n = 64
refinement = { kind = "geometric-near-end", factor = 0.5 }

[mc]
n_paths = 300
seed = 9
"#;

fn parse(text: &str) -> (*mut KyleScenario, KyleStatus) {
    let c = CString::new(text).unwrap();
    let mut handle: *mut KyleScenario = ptr::null_mut();
    let status = unsafe { kyle_scenario_parse(c.as_ptr(), &mut handle) };
    (handle, status)
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(kyle_version()) };
    assert!(!v.to_str().unwrap().is_empty());
}

#[test]
fn parse_simulate_roundtrip() {
    let (handle, status) = parse(BASELINE);
    assert_eq!(status, KyleStatus::Ok);
    assert!(!handle.is_null());

    let mut json: *mut std::ffi::c_char = ptr::null_mut();
    let status = unsafe { kyle_simulate_json(handle, -1, 0, &mut json) };
    assert_eq!(status, KyleStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["n_paths"], 300);
    assert!(report["checks"].as_array().unwrap().len() > 5);
    unsafe {
        kyle_string_free(json);
        kyle_scenario_free(handle);
    }
}

#[test]
fn seed_override_changes_report() {
    let (handle, _) = parse(BASELINE);
    let get = |seed: i64| -> String {
        let mut json: *mut std::ffi::c_char = ptr::null_mut();
        let status = unsafe { kyle_simulate_json(handle, seed, 0, &mut json) };
        assert_eq!(status, KyleStatus::Ok);
        let s = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
        unsafe { kyle_string_free(json) };
        s
    };
    let a = get(9);
    let b = get(9);
    let c = get(10);
    assert_eq!(a, b);
    assert_ne!(a, c);
    unsafe { kyle_scenario_free(handle) };
}

#[test]
fn iv_curve_fills_buffers() {
    let (handle, _) = parse(BASELINE);
    let strikes = [0.5, 0.8, 1.0, 1.3, 1.8];
    let mut prices = [f64::NAN; 5];
    let mut tvs = [f64::NAN; 5];
    let mut minima = u32::MAX;
    let status = unsafe {
        kyle_iv_curve(
            handle,
            0.0,
            0.5,
            strikes.as_ptr(),
            strikes.len(),
            prices.as_mut_ptr(),
            tvs.as_mut_ptr(),
            &mut minima,
        )
    };
    assert_eq!(status, KyleStatus::Ok);
    assert!(prices.iter().all(|p| p.is_finite()));
    // lognormal law: flat total variance at sigma_v^2 Sigma = 0.125
    for w in tvs {
        assert!((w - 0.125).abs() < 1e-3, "w = {w}");
    }
    assert_eq!(minima, 0);
    unsafe { kyle_scenario_free(handle) };
}

#[test]
fn errors_set_status_and_message() {
    let (handle, status) = parse("version = 9");
    assert_eq!(status, KyleStatus::ParseError);
    assert!(handle.is_null());
    let msg = kyle_last_error_message();
    assert!(!msg.is_null());
    let text = unsafe { CStr::from_ptr(msg) }.to_str().unwrap().to_owned();
    assert!(!text.is_empty());
    unsafe { kyle_string_free(msg) };

    // NULL arguments are rejected, not dereferenced
    let status = unsafe { kyle_scenario_parse(ptr::null(), ptr::null_mut()) };
    assert_eq!(status, KyleStatus::NullArgument);

    let (handle, _) = parse(BASELINE);
    let status = unsafe { kyle_simulate_json(handle, -1, 0, ptr::null_mut()) };
    assert_eq!(status, KyleStatus::NullArgument);

    // empty strike list is a usage error
    let mut minima = 0u32;
    let status = unsafe {
        kyle_iv_curve(handle, 0.0, 0.5, [1.0].as_ptr(), 0, ptr::null_mut(), ptr::null_mut(), &mut minima)
    };
    assert_eq!(status, KyleStatus::NullArgument);
    unsafe { kyle_scenario_free(handle) };
}

#[test]
fn generated_header_exists_and_declares_surface() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/kyle_ffi.h");
    let text = std::fs::read_to_string(header).expect("cbindgen header present");
    for symbol in [
        "kyle_version",
        "kyle_scenario_parse",
        "kyle_scenario_load",
        "kyle_scenario_free",
        "kyle_simulate_json",
        "kyle_iv_curve",
        "kyle_last_error_message",
        "kyle_string_free",
        "KyleStatus",
    ] {
        assert!(text.contains(symbol), "header misses {symbol}");
    }
}
