use std::ffi::{CStr, CString};
use std::ptr;

use mmimo_ffi::*;

fn last_error() -> String {
    let p = mmimo_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn small_config() -> *mut MmimoConfig {
    let text = CString::new("L = 4\nK = 2\nM = 8\nseed = 3\n").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { mmimo_config_from_toml(text.as_ptr(), &mut cfg) }, MmimoStatus::Ok);
    assert!(!cfg.is_null());
    cfg
}

#[test]
fn detequiv_round_trip() {
    let cfg = small_config();
    let mut res = ptr::null_mut();
    assert_eq!(unsafe { mmimo_run_detequiv(cfg, 1, 1, &mut res) }, MmimoStatus::Ok);
    let n = unsafe { mmimo_result_ue_count(res) };
    assert_eq!(n, 8);
    let mut ue = std::mem::MaybeUninit::<MmimoUe>::uninit();
    assert_eq!(unsafe { mmimo_result_ue(res, 7, ue.as_mut_ptr()) }, MmimoStatus::Ok);
    let ue = unsafe { ue.assume_init() };
    assert_eq!((ue.cell, ue.ue), (3, 1));
    assert!(ue.gamma_bar > 0.0);
    assert!(ue.mean_sinr_mc.is_nan());

    let (mut mc, mut de) = (0.0, 0.0);
    assert_eq!(unsafe { mmimo_result_sum_se(res, &mut mc, &mut de) }, MmimoStatus::Ok);
    assert!(mc.is_nan() && de > 0.0);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { mmimo_result_to_json(res, &mut json) }, MmimoStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    assert!(text.contains("\"gamma_bar\""));
    unsafe {
        mmimo_string_free(json);
        mmimo_result_free(res);
        mmimo_config_free(cfg);
    }
}

#[test]
fn monte_carlo_is_reproducible() {
    let cfg = small_config();
    let run = || {
        let mut res = ptr::null_mut();
        assert_eq!(unsafe { mmimo_run_monte_carlo(cfg, 5, 1, 1, &mut res) }, MmimoStatus::Ok);
        let mut ue = std::mem::MaybeUninit::<MmimoUe>::uninit();
        assert_eq!(unsafe { mmimo_result_ue(res, 0, ue.as_mut_ptr()) }, MmimoStatus::Ok);
        unsafe { mmimo_result_free(res) };
        unsafe { ue.assume_init() }.mean_sinr_mc
    };
    let a = run();
    assert!(a > 0.0);
    assert_eq!(a.to_bits(), run().to_bits());
    unsafe { mmimo_config_free(cfg) };
}

#[test]
fn errors_are_reported() {
    let mut cfg = ptr::null_mut();
    let bad = CString::new("K = 0\n").unwrap();
    assert_eq!(unsafe { mmimo_config_from_toml(bad.as_ptr(), &mut cfg) }, MmimoStatus::Config);
    assert!(!last_error().is_empty());

    let unknown = CString::new("antennas = 3\n").unwrap();
    assert_eq!(unsafe { mmimo_config_from_toml(unknown.as_ptr(), &mut cfg) }, MmimoStatus::Config);

    assert_eq!(unsafe { mmimo_config_from_toml(ptr::null(), &mut cfg) }, MmimoStatus::NullPointer);
    assert_eq!(unsafe { mmimo_run_detequiv(ptr::null(), 1, 1, &mut ptr::null_mut()) }, MmimoStatus::NullPointer);

    let cfg = small_config();
    assert_eq!(unsafe { mmimo_config_set_dims(cfg, 4, 0, 8) }, MmimoStatus::Config);
    let mut res = ptr::null_mut();
    assert_eq!(unsafe { mmimo_run_monte_carlo(cfg, 0, 1, 1, &mut res) }, MmimoStatus::Config);
    assert!(res.is_null());
    assert_eq!(unsafe { mmimo_run_detequiv(cfg, 1, 1, &mut res) }, MmimoStatus::Ok);
    let mut ue = std::mem::MaybeUninit::<MmimoUe>::uninit();
    assert_eq!(unsafe { mmimo_result_ue(res, 99, ue.as_mut_ptr()) }, MmimoStatus::OutOfRange);
    unsafe {
        mmimo_result_free(res);
        mmimo_config_free(cfg);
        mmimo_config_free(ptr::null_mut());
    }
}

#[test]
fn closed_form_and_counts() {
    let mut cf = std::mem::MaybeUninit::<MmimoUncorrelated>::uninit();
    assert_eq!(
        unsafe { mmimo_closed_form_uncorrelated(64, 8, 2, 0.5, 100.0, 800.0, cf.as_mut_ptr()) },
        MmimoStatus::Ok
    );
    let cf = unsafe { cf.assume_init() };
    let sum = cf.noise + cf.non_coherent + cf.coherent;
    assert!((1.0 / sum - cf.gamma_bar).abs() <= 1e-12 * cf.gamma_bar);

    let mut counts = MmimoComplexity::default();
    assert_eq!(unsafe { mmimo_complexity_counts(4, 2, 3, 2, &mut counts) }, MmimoStatus::Ok);
    assert_eq!(counts.quadratic_estimation, 4 * 2 + 3 * 16);
    assert_eq!(counts.quadratic_gamma, 10 * 7 + 20);
    assert_eq!(counts.mse_gamma, 10 * (9 * 4 + 3) + 20 + 8);
    assert_eq!(unsafe { mmimo_complexity_counts(0, 2, 3, 2, &mut counts) }, MmimoStatus::InvalidInput);
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/mmimo.h")).unwrap();
    for name in [
        "typedef struct MmimoConfig MmimoConfig",
        "typedef struct MmimoResult MmimoResult",
        "MMIMO_STATUS_NON_CONVERGENCE",
        "mmimo_run_monte_carlo",
        "mmimo_run_detequiv",
        "mmimo_result_free",
        "mmimo_last_error",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
