use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use ccbank_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ccb_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn shapley_through_the_abi_matches_the_library() {
    let toy = ccb_oracle_toy(11);
    let ids = [10u32, 20, 21, 22, 23, 6];
    let mask = [0u8, 1, 1, 1, 1, 0];
    let (mut phi, mut base, mut full) = ([0.0f64; 4], 0.0, 0.0);
    let st = unsafe {
        ccb_shapley(toy, ids.as_ptr(), mask.as_ptr(), 6, 30, CcbEstimator::Exact, 12, 1, 0, phi.as_mut_ptr(), 4, &mut base, &mut full)
    };
    assert_eq!(st, CcbStatus::Ok);
    assert!((base + phi.iter().sum::<f64>() - full).abs() < 1e-9);

    // All 4! orderings reproduce the exact values.
    let mut perm = [0.0f64; 4];
    let st = unsafe {
        ccb_shapley(toy, ids.as_ptr(), mask.as_ptr(), 6, 30, CcbEstimator::Permutation, 12, 24, 5, perm.as_mut_ptr(), 4, ptr::null_mut(), ptr::null_mut())
    };
    assert_eq!(st, CcbStatus::Ok);
    for (a, b) in phi.iter().zip(&perm) {
        assert!((a - b).abs() < 1e-9);
    }

    let st = unsafe {
        ccb_shapley(toy, ids.as_ptr(), mask.as_ptr(), 6, 30, CcbEstimator::Exact, 2, 1, 0, phi.as_mut_ptr(), 4, ptr::null_mut(), ptr::null_mut())
    };
    assert_eq!(st, CcbStatus::TooManyTokens);
    assert!(last_error().contains("exceeds"));
    unsafe { ccb_oracle_free(toy) };
}

#[test]
fn null_and_invalid_inputs_report_status() {
    let mut out = 0.0;
    let st = unsafe { ccb_cc_shap(ptr::null(), ptr::null(), 3, &mut out) };
    assert_eq!(st, CcbStatus::NullPointer);
    assert!(last_error().contains("prediction"));
    assert_eq!(unsafe { ccb_rescale_cc_shap(2.0, &mut out) }, CcbStatus::InvalidArgument);
    assert_eq!(unsafe { ccb_rescale_cc_shap(-1.0, &mut out) }, CcbStatus::Ok);
    assert_eq!(out, 0.0);
    assert!(unsafe { ccb_oracle_http(ptr::null()) }.is_null());
    unsafe { ccb_oracle_free(ptr::null_mut()) };
}

#[test]
fn ratios_profiles_and_scores() {
    let phi = [0.2, -0.1, 0.1];
    let mut r = [0.0; 3];
    assert_eq!(unsafe { ccb_ratios(phi.as_ptr(), 3, 1e-8, r.as_mut_ptr()) }, CcbStatus::Ok);
    assert_eq!(r, [0.5, -0.25, 0.25]);
    assert_eq!(unsafe { ccb_ratios([0.0; 3].as_ptr(), 3, 1e-8, r.as_mut_ptr()) }, CcbStatus::Degenerate);

    let rows = [0.5, 0.5, 0.3, 0.7, 9.0, 9.0];
    let flags = [0u8, 0, 1];
    let mut c = [0.0; 2];
    assert_eq!(unsafe { ccb_aggregate(rows.as_ptr(), 3, 2, flags.as_ptr(), c.as_mut_ptr()) }, CcbStatus::Ok);
    assert!((c[0] - 0.4).abs() < 1e-12 && (c[1] - 0.6).abs() < 1e-12);

    let mut s = 0.0;
    assert_eq!(unsafe { ccb_cc_shap(c.as_ptr(), c.as_ptr(), 2, &mut s) }, CcbStatus::Ok);
    assert_eq!(s, 1.0);
    let neg = [-0.4, -0.6];
    assert_eq!(unsafe { ccb_cc_shap(c.as_ptr(), neg.as_ptr(), 2, &mut s) }, CcbStatus::Ok);
    assert!((s + 1.0).abs() < 1e-12);

    let b = [1u8, 1, 1];
    let x = [1.0, 2.0, 3.0];
    assert_eq!(unsafe { ccb_point_biserial(b.as_ptr(), x.as_ptr(), 3, &mut s) }, CcbStatus::Undefined);
}

#[test]
fn run_writes_records_and_manifest() {
    let dir = tempfile_dir();
    let results = CString::new(dir.join("r.jsonl").to_str().unwrap()).unwrap();
    let config = CString::new(r#"{"task":"comve","tests":["cc-shap-posthoc"],"samples":3,"seed":7}"#).unwrap();
    let toy = ccb_oracle_toy(0);
    let mut manifest: *mut std::ffi::c_char = ptr::null_mut();
    let st = unsafe { ccb_run(toy, config.as_ptr(), ptr::null(), results.as_ptr(), &mut manifest) };
    assert_eq!(st, CcbStatus::Ok, "{}", last_error());
    let json = unsafe { CStr::from_ptr(manifest) }.to_str().unwrap().to_owned();
    assert!(json.contains("\"sample_count\":3"));
    unsafe { ccb_string_free(manifest) };
    let text = std::fs::read_to_string(dir.join("r.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 3);

    let bad = CString::new("{not json").unwrap();
    assert_eq!(unsafe { ccb_run(toy, bad.as_ptr(), ptr::null(), results.as_ptr(), ptr::null_mut()) }, CcbStatus::InvalidArgument);
    unsafe { ccb_oracle_free(toy) };
    std::fs::remove_dir_all(dir).unwrap();
}

fn tempfile_dir() -> PathBuf {
    let d = std::env::temp_dir().join(format!("ccbank-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn have(tool: &str) -> bool {
    Command::new(tool).arg("--version").output().is_ok()
}

/// Compiles and runs a C program against the generated header and the
/// static library. Skipped when no C compiler or static library is present.
#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    assert!(header_dir.join("ccbank.h").exists());
    if !have("cc") {
        eprintln!("skipped: no C compiler");
        return;
    }
    // The test binary lives in <target>/<profile>/deps.
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libccbank_ffi.a");
    let out = std::env::temp_dir().join(format!("ccbank-smoke-{}", std::process::id()));
    let mut cmd = Command::new("cc");
    cmd.arg(manifest.join("tests/c/smoke.c")).arg("-I").arg(&header_dir);
    if !lib.exists() {
        let st = cmd.arg("-fsyntax-only").status().unwrap();
        assert!(st.success(), "header does not compile");
        eprintln!("skipped linking: {} not built", lib.display());
        return;
    }
    let st = cmd.arg(&lib).args(["-lpthread", "-ldl", "-lm"]).arg("-o").arg(&out).status().unwrap();
    assert!(st.success(), "C smoke program failed to build");
    let run = Command::new(&out).output().unwrap();
    let _ = std::fs::remove_file(&out);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
