use std::path::Path;

use assert_cmd::Command;
use tempfile::TempDir;

const MATHIEU: &str = r#"{
  "name": "mathieu_small",
  "dimension": 1,
  "a": [1.0],
  "coeffs": [{"g": [1], "v": [0.05, 0.0]}],
  "e_cut": 400.0,
  "n_bands": 4,
  "k_path": {"points": [-3.141592653589793, 3.141592653589793], "samples": 5},
  "delta": {"k_points": [0.9424777960769379], "bands": 3},
  "ramp": {"k0": 0.3, "rate": 0.1, "duration": 10.0, "samples": 6, "n_bands": 3}
}"#;

fn write(dir: &TempDir, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn bin() -> Command {
    Command::cargo_bin("blochgeom").unwrap()
}

fn error_json(stderr: &[u8]) -> serde_json::Value {
    let text = String::from_utf8_lossy(stderr);
    let line = text
        .lines()
        .find(|l| l.starts_with('{'))
        .unwrap_or_else(|| panic!("no JSON in {text}"));
    serde_json::from_str(line).unwrap()
}

#[test]
fn bands_writes_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "m.json", MATHIEU);
    let out = dir.path().join("out");
    bin()
        .args(["bands", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .assert()
        .success();
    let csv = std::fs::read_to_string(out.join("bands.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "point,kx,band,energy");
    // Five samples per segment plus the closing vertex.
    assert_eq!(lines.len(), 1 + 6 * 4);
    assert!(lines[1].starts_with("0,-3.141592653589793,0,"));
    let e: Vec<f64> = lines[1..5]
        .iter()
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(e.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn adiabatic_writes_trajectory_and_report() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "m.json", MATHIEU);
    bin()
        .args(["adiabatic", "--seed", "3", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .assert()
        .success();
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,band,re_c,im_c,abs2_c,margin_standard,margin_extended,margin_hk"
    );
    assert_eq!(lines.count(), 6 * 3);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("adiabatic_report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["run"]["samples"], 6);
}

#[test]
fn failed_check_exits_one() {
    let dir = TempDir::new().unwrap();
    let strict = MATHIEU.replace(
        "\"n_bands\": 4,",
        "\"n_bands\": 4, \"tolerances\": {\"identity\": 1e-300},",
    );
    let cfg = write(&dir, "m.json", &strict);
    bin()
        .args(["delta-verify", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .assert()
        .code(1);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("delta_report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], false);
}

#[test]
fn config_errors_exit_two_with_category() {
    let dir = TempDir::new().unwrap();
    let cases = [
        ("{\"dimension\": 1,", "json", None),
        (
            r#"{"dimension": 1, "a": [1], "coeffs": [], "e_cut": 200}"#,
            "missing-field",
            None,
        ),
        (
            r#"{"dimension": 1, "a": [1], "coeffs": [], "e_cut": 200, "n_bands": 4, "tolerances": {"boundry": 1}}"#,
            "unknown-key",
            Some("tolerances"),
        ),
        (
            r#"{"dimension": 2, "a": [[1, 0], [0, 1]], "coeffs": [], "e_cut": 200, "n_bands": 4, "k_path": {"points": [[0, 0], [1]]}}"#,
            "dimension",
            Some("k_path.points[1]"),
        ),
    ];
    for (i, (text, category, path)) in cases.iter().enumerate() {
        let cfg = write(&dir, &format!("c{i}.json"), text);
        let out = bin()
            .args(["bands", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path())
            .assert()
            .code(2);
        let err = error_json(&out.get_output().stderr);
        assert_eq!(err["error"]["category"], *category, "{text}");
        if let Some(p) = path {
            assert!(err["error"]["path"].as_str().unwrap().starts_with(p), "{err}");
        }
    }
}

#[test]
fn physics_error_exits_three() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "c.json",
        r#"{"dimension": 1, "a": [1], "coeffs": [], "e_cut": 200, "n_bands": 8}"#,
    );
    let out = bin().args(["bands", "--config"]).arg(&cfg).assert().code(3);
    let err = error_json(&out.get_output().stderr);
    assert_eq!(err["error"]["category"], "physics");
    assert_eq!(err["error"]["path"], "n_bands");
}

#[test]
fn usage_and_io_errors() {
    let out = bin().arg("bands").assert().code(64);
    assert_eq!(error_json(&out.get_output().stderr)["error"]["category"], "usage");

    let out = bin()
        .args(["bands", "--config", "/nonexistent/config.json"])
        .assert()
        .code(4);
    assert_eq!(error_json(&out.get_output().stderr)["error"]["category"], "io");

    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "m.json", MATHIEU);
    let blocker = write(&dir, "file", "");
    bin()
        .args(["bands", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&blocker)
        .assert()
        .code(4);

    let out = bin().args(["curvature", "--config"]).arg(&cfg).assert().code(64);
    assert!(error_json(&out.get_output().stderr)["error"]["message"]
        .as_str()
        .unwrap()
        .contains("2D or 3D"));
}

fn run_free(out: &Path) {
    bin()
        .args(["verify-all", "--threads", "1", "--config"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/free_1d.json"))
        .arg("--out")
        .arg(out)
        .assert()
        .success();
}

#[test]
fn verify_all_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_free(&a);
    run_free(&b);
    let x = std::fs::read(a.join("verification_report.json")).unwrap();
    let y = std::fs::read(b.join("verification_report.json")).unwrap();
    assert_eq!(x, y);
    let report: serde_json::Value = serde_json::from_slice(&x).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["suites"][0]["suite"], "free_1d");
}
