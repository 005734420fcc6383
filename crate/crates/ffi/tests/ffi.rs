use std::f64::consts::PI;
use std::ffi::{CStr, CString};
use std::ptr;

use blochgeom_ffi::*;

const FREE_1D: &str = r#"{"dimension": 1, "a": [1], "coeffs": [], "e_cut": 200, "n_bands": 4}"#;

const SQUARE: &str = r#"{"dimension": 2, "a": [[1, 0], [0, 1]], "e_cut": 150, "n_bands": 8,
    "coeffs": [{"g": [1, 0], "v": [0.05, 0]}, {"g": [0, 1], "v": [0.05, 0]},
               {"g": [1, 1], "v": [0.038242109364224425, 0.03221088436188455]}]}"#;

fn model(json: &str) -> *mut BgModel {
    let text = CString::new(json).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { bg_model_from_config_json(text.as_ptr(), &mut m) },
        BgStatus::Ok
    );
    assert!(!m.is_null());
    m
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(bg_last_error_message()) }
        .to_str()
        .unwrap()
        .to_owned()
}

#[test]
fn free_particle_energies_match_plane_waves() {
    let m = model(FREE_1D);
    assert_eq!(unsafe { bg_model_dimension(m) }, 1);
    assert_eq!(unsafe { bg_model_basis_size(m) }, 7);
    let k = [0.3];
    let mut e = [0.0; 4];
    assert_eq!(
        unsafe { bg_model_solve(m, k.as_ptr(), 1, 4, e.as_mut_ptr()) },
        BgStatus::Ok
    );
    let mut oracle: Vec<f64> = (-3..=3).map(|n| 0.5 * (0.3 + 2.0 * PI * n as f64).powi(2)).collect();
    oracle.sort_by(f64::total_cmp);
    for (a, b) in e.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-12 * b.max(1.0), "{a} vs {b}");
    }
    assert_eq!(last_error(), "");
    unsafe { bg_model_free(m) };
}

#[test]
fn curvature_methods_are_odd_under_k_reversal() {
    let m = model(SQUARE);
    for method in [BgMethod::Kubo, BgMethod::Corrected] {
        let mut a = [0.0; 3];
        let mut b = [0.0; 3];
        let k = [0.8, -1.3];
        let mk = [-0.8, 1.3];
        assert_eq!(
            unsafe { bg_model_curvature(m, k.as_ptr(), 2, 0, 8, method, a.as_mut_ptr()) },
            BgStatus::Ok
        );
        assert_eq!(
            unsafe { bg_model_curvature(m, mk.as_ptr(), 2, 0, 8, method, b.as_mut_ptr()) },
            BgStatus::Ok
        );
        assert!(a[2].abs() > 1e-8);
        assert!((a[2] + b[2]).abs() < 1e-6 * a[2].abs().max(1.0));
        assert_eq!(a[0], 0.0);
        assert_eq!(a[1], 0.0);
    }
    unsafe { bg_model_free(m) };
}

#[test]
fn errors_carry_status_and_message() {
    let mut m = ptr::null_mut();
    let bad = CString::new(r#"{"dimension": 1, "a": [1], "coeffs": [], "e_cut": 200}"#).unwrap();
    assert_eq!(
        unsafe { bg_model_from_config_json(bad.as_ptr(), &mut m) },
        BgStatus::Config
    );
    assert!(m.is_null());
    assert!(last_error().contains("n_bands"), "{}", last_error());

    let too_many = CString::new(r#"{"dimension": 1, "a": [1], "coeffs": [], "e_cut": 200, "n_bands": 8}"#).unwrap();
    assert_eq!(
        unsafe { bg_model_from_config_json(too_many.as_ptr(), &mut m) },
        BgStatus::Physics
    );
    assert!(last_error().contains("basis size 7"));

    assert_eq!(
        unsafe { bg_model_from_config_json(ptr::null(), &mut m) },
        BgStatus::NullPointer
    );

    let good = model(FREE_1D);
    let k = [0.1, 0.2];
    let mut e = [0.0; 4];
    assert_eq!(
        unsafe { bg_model_solve(good, k.as_ptr(), 2, 4, e.as_mut_ptr()) },
        BgStatus::Usage
    );
    assert_eq!(
        unsafe { bg_model_solve(good, k.as_ptr(), 1, 4, ptr::null_mut()) },
        BgStatus::NullPointer
    );
    assert_eq!(
        unsafe { bg_model_solve(ptr::null(), k.as_ptr(), 1, 4, e.as_mut_ptr()) },
        BgStatus::NullPointer
    );
    assert_eq!(
        unsafe { bg_model_solve(good, k.as_ptr(), 1, 9, e.as_mut_ptr()) },
        BgStatus::Computation
    );
    unsafe { bg_model_free(good) };
    unsafe { bg_model_free(ptr::null_mut()) };
}

#[test]
fn run_command_returns_artifacts() {
    let cfg = CString::new(
        r#"{"dimension": 1, "a": [1], "coeffs": [], "e_cut": 200, "n_bands": 4,
            "free_particle": {"box_length": 6.283185307179586, "pairs": [[1, 2], [3, 1]]}}"#,
    )
    .unwrap();
    let mut r = ptr::null_mut();
    assert_eq!(
        unsafe { bg_run_command(BgCommand::FreeParticle, cfg.as_ptr(), 0, &mut r) },
        BgStatus::Ok
    );
    assert_eq!(unsafe { bg_report_pass(r) }, 1);
    assert_eq!(unsafe { bg_report_artifact_count(r) }, 1);
    let name = unsafe { CStr::from_ptr(bg_report_artifact_name(r, 0)) };
    assert_eq!(name.to_str().unwrap(), "free_particle_report.json");
    let text = unsafe { CStr::from_ptr(bg_report_artifact_contents(r, 0)) }
        .to_str()
        .unwrap();
    let json: serde_json::Value = serde_json::from_str(text).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 2);
    assert!(unsafe { bg_report_artifact_name(r, 1) }.is_null());
    unsafe { bg_report_free(r) };

    assert_eq!(
        unsafe { bg_run_command(BgCommand::Bands, ptr::null(), 0, &mut r) },
        BgStatus::Usage
    );
    assert!(r.is_null());
    assert_eq!(
        unsafe { bg_run_command(BgCommand::Curvature, cfg.as_ptr(), 0, &mut r) },
        BgStatus::Usage
    );
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/blochgeom.h")).unwrap();
    for sym in [
        "bg_last_error_message",
        "bg_model_from_config_json",
        "bg_model_free",
        "bg_model_dimension",
        "bg_model_basis_size",
        "bg_model_solve",
        "bg_model_curvature",
        "bg_run_command",
        "bg_report_free",
        "bg_report_pass",
        "bg_report_artifact_count",
        "bg_report_artifact_name",
        "bg_report_artifact_contents",
    ] {
        assert!(header.contains(&format!("{sym}(")), "{sym} missing");
    }
    assert!(header.contains("typedef struct BgModel BgModel;"));
    assert!(header.contains("BG_STATUS_PANIC = 8"));
}

#[test]
fn header_compiles_as_c() {
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include/blochgeom.h"))
        .status()
    else {
        eprintln!("no C compiler on PATH; skipped");
        return;
    };
    assert!(status.success());
}
