use std::ffi::{CStr, CString};
use std::ptr;

use csqpt_ffi::*;

fn last_error() -> String {
    let p = csqpt_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn coherent_state_round_trips_through_json() {
    unsafe {
        let mut rho = ptr::null_mut();
        assert_eq!(csqpt_state_coherent(1.0, 0.5, 8, &mut rho), CsqptStatus::Ok);
        assert_eq!(csqpt_state_size(rho), 9);
        let (mut re, mut im) = (0.0, 0.0);
        assert_eq!(csqpt_state_element(rho, 0, 0, &mut re, &mut im), CsqptStatus::Ok);
        // renormalized after truncation
        assert!((re - (-1.25f64).exp()).abs() < 1e-4 && im == 0.0);

        let mut json = ptr::null_mut();
        assert_eq!(csqpt_state_to_json(rho, &mut json), CsqptStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(csqpt_state_from_json(json, &mut back), CsqptStatus::Ok);
        let mut f = 0.0;
        assert_eq!(csqpt_state_fidelity(rho, back, &mut f), CsqptStatus::Ok);
        assert!((f - 1.0).abs() < 1e-9);
        csqpt_string_free(json);
        csqpt_state_free(back);
        csqpt_state_free(rho);
    }
}

#[test]
fn oracle_process_rotates_coherent_input() {
    unsafe {
        let (theta, t) = (1.46, 0.25);
        let mut e = ptr::null_mut();
        assert_eq!(csqpt_process_oracle(theta, t, 6, &mut e), CsqptStatus::Ok);
        let mut rho = ptr::null_mut();
        csqpt_state_coherent(1.2, 0.0, 6, &mut rho);
        let mut phi = 0.0;
        assert_eq!(csqpt_output_phase(e, rho, 0, 1, &mut phi), CsqptStatus::Ok);
        assert!((phi + theta).abs() < 1e-9, "{phi}");

        let mut out = ptr::null_mut();
        let mut trace = 0.0;
        assert_eq!(csqpt_process_apply(e, rho, &mut out, &mut trace), CsqptStatus::Ok);
        assert!(trace > 0.99 && trace <= 1.0 + 1e-12);

        let mut f = 0.0;
        assert_eq!(csqpt_process_fidelity(e, e, &mut f), CsqptStatus::Ok);
        assert!((f - 1.0).abs() < 1e-9);

        let (mut re, mut im) = (0.0, 0.0);
        assert_eq!(csqpt_process_element(e, 0, 0, 1, 1, &mut re, &mut im), CsqptStatus::Ok);
        assert!((re - (1.0 - t)).abs() < 1e-12);
        assert_eq!(csqpt_process_element(e, 7, 0, 0, 0, &mut re, &mut im), CsqptStatus::InvalidArgument);

        csqpt_state_free(out);
        csqpt_state_free(rho);
        csqpt_process_free(e);
    }
}

#[test]
fn squeezed_prediction_matches_gaussian_loss() {
    unsafe {
        let mut e = ptr::null_mut();
        csqpt_process_oracle(2.13, 0.25, 30, &mut e);
        let (mut lo, mut hi, mut shift) = (0.0, 0.0, 0.0);
        assert_eq!(csqpt_predict_squeezed(e, 4.3, 0.0, &mut lo, &mut hi, &mut shift), CsqptStatus::Ok);
        let var = |db: f64| 10.0 * (0.25 * 10f64.powf(db / 10.0) + 0.75).log10();
        assert!((lo - var(-4.3)).abs() < 0.02 && (hi - var(4.3)).abs() < 0.02, "{lo} {hi}");
        csqpt_process_free(e);
    }
}

#[test]
fn failures_report_status_and_message() {
    unsafe {
        let mut e = ptr::null_mut();
        assert_eq!(csqpt_process_oracle(0.0, 1.5, 4, &mut e), CsqptStatus::InvalidArgument);
        assert!(e.is_null());
        assert!(!last_error().is_empty());

        assert_eq!(csqpt_process_oracle(0.0, 0.5, 4, ptr::null_mut()), CsqptStatus::NullPointer);
        assert!(last_error().contains("out"));

        let bad = CString::new("{not json").unwrap();
        let mut rho = ptr::null_mut();
        assert_eq!(csqpt_state_from_json(bad.as_ptr(), &mut rho), CsqptStatus::Config);

        let mut vac = ptr::null_mut();
        csqpt_state_coherent(0.0, 0.0, 4, &mut vac);
        csqpt_process_oracle(0.5, 0.5, 4, &mut e);
        let mut phi = 0.0;
        assert_eq!(csqpt_output_phase(e, vac, 0, 1, &mut phi), CsqptStatus::UndefinedPhase);
        csqpt_state_free(vac);
        csqpt_process_free(e);

        csqpt_state_free(ptr::null_mut());
        csqpt_process_free(ptr::null_mut());
        csqpt_string_free(ptr::null_mut());
        assert_eq!(csqpt_state_size(ptr::null()), 0);
    }
}

#[test]
fn run_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let exp = CString::new("state-demo").unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let config = CString::new("[state_demo]\nmean_photon_number = 1.0\n[detection]\nsamples = 5000\n").unwrap();
    unsafe {
        let mut summary = ptr::null_mut();
        assert_eq!(csqpt_run(exp.as_ptr(), config.as_ptr(), 11, out.as_ptr(), &mut summary), CsqptStatus::Ok);
        let text = CStr::from_ptr(summary).to_str().unwrap().to_owned();
        csqpt_string_free(summary);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(v["delta_theta_eit"].as_f64().unwrap() > 1.5);

        let missing_seed = csqpt_run(exp.as_ptr(), ptr::null(), -1, out.as_ptr(), ptr::null_mut());
        assert_eq!(missing_seed, CsqptStatus::Config);
        let unknown = CString::new("nonsense").unwrap();
        assert_eq!(csqpt_run(unknown.as_ptr(), ptr::null(), 1, out.as_ptr(), ptr::null_mut()), CsqptStatus::Config);
    }
    assert!(dir.path().join("manifest.json").is_file());
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(csqpt_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
