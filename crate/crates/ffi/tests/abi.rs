use std::ffi::{CStr, CString};
use std::ptr;

use qbsde_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = qbsde_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(qbsde_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_arguments_are_reported() {
    let mut h = ptr::null_mut();
    let st = unsafe { qbsde_scenario_parse(ptr::null(), &mut h) };
    assert_eq!(st, QbsdeStatus::NullPointer);
    assert!(h.is_null());
    assert!(last_error().contains("toml"));
    assert_eq!(unsafe { qbsde_transform_eval(ptr::null(), 0.0, ptr::null_mut(), ptr::null_mut()) }, QbsdeStatus::NullPointer);
    assert!(!unsafe { qbsde_outcome_pass(ptr::null()) });
    unsafe {
        qbsde_scenario_free(ptr::null_mut());
        qbsde_outcome_free(ptr::null_mut());
        qbsde_transform_free(ptr::null_mut());
    }
}

#[test]
fn config_error_names_the_key() {
    let mut h = ptr::null_mut();
    let st = unsafe { qbsde_scenario_parse(c("name = \"x\"\n[task]\nkind = \"transforms\"\n").as_ptr(), &mut h) };
    assert_eq!(st, QbsdeStatus::Config);
    assert!(last_error().contains("seed"));
}

#[test]
fn success_clears_the_error() {
    let mut h = ptr::null_mut();
    unsafe { qbsde_scenario_parse(ptr::null(), &mut h) };
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { qbsde_transform_new(c("kind = \"zero\"").as_ptr(), &mut t) }, QbsdeStatus::Ok);
    assert!(qbsde_last_error().is_null());
    unsafe { qbsde_transform_free(t) };
}

#[test]
fn transform_round_trip() {
    let mut t = ptr::null_mut();
    let st = unsafe { qbsde_transform_new(c("kind = \"indicator\"\nc = 0.5\na = 1.0").as_ptr(), &mut t) };
    assert_eq!(st, QbsdeStatus::Ok);
    let m = unsafe { qbsde_transform_mass(t) };
    assert!((m - 2f64.exp()).abs() < 1e-9, "{m}");
    for x in [-3.0, -0.4, 0.0, 0.7, 2.5] {
        let (mut u, mut du, mut back) = (0.0, 0.0, 0.0);
        assert_eq!(unsafe { qbsde_transform_eval(t, x, &mut u, &mut du) }, QbsdeStatus::Ok);
        assert!(du >= 1.0 / m && du <= m);
        assert_eq!(unsafe { qbsde_transform_invert(t, u, &mut back) }, QbsdeStatus::Ok);
        assert!((back - x).abs() < 1e-8);
    }
    unsafe { qbsde_transform_free(t) };
}

#[test]
fn zero_coefficient_exact_value_is_the_terminal_mean() {
    let mut y0 = f64::NAN;
    let st = unsafe {
        qbsde_pure_exact_y0(c("kind = \"zero\"").as_ptr(), c("kind = \"linear\"\na = 0.25").as_ptr(), 1.0, &mut y0)
    };
    assert_eq!(st, QbsdeStatus::Ok, "{}", last_error());
    assert!((y0 - 0.25).abs() < 1e-10, "{y0}");
}

#[test]
fn scenario_runs_and_exposes_checks() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = ptr::null_mut();
    let text = "name = \"ffi\"\nseed = 1\n[task]\nkind = \"transforms\"\npoints = 200\n";
    assert_eq!(unsafe { qbsde_scenario_parse(c(text).as_ptr(), &mut s) }, QbsdeStatus::Ok);
    assert_eq!(unsafe { qbsde_scenario_set_seed(s, 9) }, QbsdeStatus::Ok);
    let mut o = ptr::null_mut();
    let out = c(dir.path().to_str().unwrap());
    assert_eq!(unsafe { qbsde_scenario_run(s, out.as_ptr(), &mut o) }, QbsdeStatus::Ok);
    assert!(unsafe { qbsde_outcome_pass(o) });
    assert!(unsafe { qbsde_outcome_error(o) }.is_null());
    let n = unsafe { qbsde_outcome_check_count(o) };
    assert_eq!(n, 2);
    let mut chk = QbsdeCheck { criterion: 0, value: 0.0, threshold: 0.0, pass: false };
    assert_eq!(unsafe { qbsde_outcome_check(o, 0, &mut chk) }, QbsdeStatus::Ok);
    assert_eq!(chk.criterion, 1);
    assert!(chk.pass);
    assert_eq!(unsafe { qbsde_outcome_check(o, n, &mut chk) }, QbsdeStatus::OutOfRange);
    assert!(dir.path().join("ffi/summary.json").exists());
    unsafe {
        qbsde_outcome_free(o);
        qbsde_scenario_free(s);
    }
}
