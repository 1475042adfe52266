use std::ffi::CStr;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use driftsample_ffi::*;

fn model(z: f64) -> *mut DsModel {
    let mut m = ptr::null_mut();
    let st = unsafe { ds_model_new(1.0, 1.0, 0.75, 1.0, z, -1.0, true, &mut m) };
    assert_eq!(st, DsStatus::Ok);
    m
}

fn last_error() -> String {
    let p = ds_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn steady_state_matches_worked_example() {
    let m = model(0.0);
    let cases: [(&[f64], f64); 3] = [
        (&[1.0], (5f64.sqrt() - 1.0) / 2.0),
        (&[0.0, 2.0], 0.582_106_781_186_547_5),
        (&[0.0, 0.0, 2.0, 2.0], 0.576_560_760_5),
    ];
    for (period, want) in cases {
        let mut t = ptr::null_mut();
        assert_eq!(unsafe { ds_steady_state(m, period.as_ptr(), period.len(), &mut t) }, DsStatus::Ok);
        let mut cost = f64::NAN;
        let mut value = f64::NAN;
        assert_eq!(unsafe { ds_trace_summary(t, &mut cost, &mut value) }, DsStatus::Ok);
        assert!((cost - want).abs() < 1e-9, "{period:?}: {cost}");
        assert!((cost + value - 0.75).abs() < 1e-12);
        let n = unsafe { ds_trace_posteriors(t, ptr::null_mut(), 0) };
        assert_eq!(n, period.len());
        let mut buf = vec![0.0; n];
        unsafe { ds_trace_posteriors(t, buf.as_mut_ptr(), n) };
        assert!(buf.iter().all(|v| *v > 0.0));
        unsafe { ds_trace_free(t) };
    }
    unsafe { ds_model_free(m) };
}

#[test]
fn kalman_step_and_simulate_agree() {
    let m = model(0.0);
    let samples = [1.0, 0.0, 2.5];
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { ds_simulate(m, samples.as_ptr(), samples.len(), &mut t) }, DsStatus::Ok);
    let mut post = [0.0; 3];
    unsafe { ds_trace_posteriors(t, post.as_mut_ptr(), 3) };
    let mut v = 1.0;
    for (s, want) in samples.iter().zip(post) {
        let mut next = 0.0;
        assert_eq!(unsafe { ds_kalman_step(m, v, *s, &mut next) }, DsStatus::Ok);
        assert!((next - want).abs() < 1e-15);
        v = next;
    }
    unsafe {
        ds_trace_free(t);
        ds_model_free(m);
    }
}

#[test]
fn optimizers_round_trip_json() {
    let m = model(0.0);
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { ds_vstar(m, 1e-4, &mut r) }, DsStatus::Ok);
    let v = unsafe { ds_result_value(r) };
    assert!((v + unsafe { ds_result_cost(r) } - 0.75).abs() < 1e-12);
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { ds_result_json(r, &mut s) }, DsStatus::Ok);
    let text = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!((doc["value"].as_f64().unwrap() - v).abs() < 1e-15);
    unsafe {
        ds_string_free(s);
        ds_result_free(r);
    }

    let mut lazy = ptr::null_mut();
    assert_eq!(unsafe { ds_optimize_lazy(m, &mut lazy) }, DsStatus::Ok);
    let lv = unsafe { ds_result_value(lazy) };
    assert!(lv >= 0.5 * v, "lazy {lv} vstar {v}");
    unsafe {
        ds_result_free(lazy);
        ds_model_free(m);
    }
}

#[test]
fn errors_are_reported() {
    let mut m = ptr::null_mut();
    let st = unsafe { ds_model_new(1.0, 0.0, 0.75, 1.0, 0.0, -1.0, true, &mut m) };
    assert_eq!(st, DsStatus::InvalidParameter);
    assert!(m.is_null());
    assert!(last_error().contains("sigma"));

    assert_eq!(unsafe { ds_kalman_step(ptr::null(), 1.0, 1.0, ptr::null_mut()) }, DsStatus::NullPointer);
    let m = model(0.0);
    assert_eq!(unsafe { ds_kalman_step(m, 1.0, 1.0, ptr::null_mut()) }, DsStatus::NullPointer);
    assert_eq!(unsafe { ds_simulate(m, ptr::null(), 3, &mut ptr::null_mut()) }, DsStatus::NullPointer);

    let bad = [-1.0];
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { ds_simulate(m, bad.as_ptr(), 1, &mut t) }, DsStatus::InvalidSchedule);

    // a later success clears the message
    let mut x = 0.0;
    assert_eq!(unsafe { ds_kalman_step(m, 1.0, 1.0, &mut x) }, DsStatus::Ok);
    assert!(ds_last_error().is_null());

    assert!(unsafe { ds_result_value(ptr::null()) }.is_nan());
    assert_eq!(unsafe { ds_trace_len(ptr::null()) }, 0);
    unsafe {
        ds_model_free(m);
        ds_model_free(ptr::null_mut());
        ds_trace_free(ptr::null_mut());
        ds_result_free(ptr::null_mut());
        ds_string_free(ptr::null_mut());
    }
}

#[test]
fn onoff_rejects_fixed_cost() {
    let m = model(0.2);
    let mut r = ptr::null_mut();
    let st = unsafe { ds_optimize_onoff(m, 4, &mut r) };
    assert_ne!(st, DsStatus::Ok);
    assert!(r.is_null());
    assert!(!last_error().is_empty());
    unsafe { ds_model_free(m) };
}

#[test]
fn binary_run_is_deterministic() {
    let mut a = DsBinarySummary::default();
    let mut b = DsBinarySummary::default();
    assert_eq!(unsafe { ds_binary_run(0.01, 0.2, 0.05, 500, 7, &mut a) }, DsStatus::Ok);
    assert_eq!(unsafe { ds_binary_run(0.01, 0.2, 0.05, 500, 7, &mut b) }, DsStatus::Ok);
    assert_eq!(a.mean_samples, b.mean_samples);
    assert_eq!(a.accuracy, b.accuracy);
    assert!(a.accuracy > 0.5 && a.mean_samples > 0.0);
    assert_eq!(unsafe { ds_binary_run(0.7, 0.2, 0.05, 10, 7, &mut a) }, DsStatus::InvalidParameter);
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(ds_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib_dir = target_dir();
    if Command::new("cc").arg("--version").output().is_err() || !lib_dir.join("libdriftsample_ffi.so").exists() {
        eprintln!("skipping: no C compiler or shared library");
        return;
    }
    let tmp = std::env::temp_dir().join(format!("ds_ffi_smoke_{}", std::process::id()));
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(root.join("include"))
        .arg(root.join("tests/c/smoke.c"))
        .arg("-L")
        .arg(&lib_dir)
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .arg("-ldriftsample_ffi")
        .arg("-lm")
        .arg("-o")
        .arg(&tmp)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&tmp).output().unwrap();
    let _ = std::fs::remove_file(&tmp);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
