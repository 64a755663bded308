//! End-to-end runs of the command line, in process.

use std::f64::consts::{LN_2, TAU};
use std::fs;
use std::path::Path;

use serde_json::Value;

use super::run_with;

struct Output {
    code: i32,
    stdout: Vec<u8>,
    stderr: Vec<u8>,
}

fn mpbs(args: &[&str]) -> Output {
    let argv = std::iter::once("mpbs")
        .chain(args.iter().copied())
        .map(String::from)
        .collect();
    let (mut stdout, mut stderr) = (Vec::new(), Vec::new());
    let code = run_with(argv, &mut stdout, &mut stderr);
    Output {
        code,
        stdout,
        stderr,
    }
}

fn summary(args: &[&str]) -> Value {
    let out = mpbs(args);
    assert!(
        out.code == 0,
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1, "summary must be one line: {text}");
    serde_json::from_str(&text).unwrap()
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(String::from)
        .collect()
}

fn data_rows(path: &Path) -> Vec<Vec<f64>> {
    lines(path)
        .iter()
        .skip(2)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn assert_header(path: &Path, command: &str, columns: &str) {
    let l = lines(path);
    let prefix = format!(
        "# tool=mpbs version={} command={command} config={{",
        env!("CARGO_PKG_VERSION")
    );
    assert!(l[0].starts_with(&prefix), "{}", l[0]);
    let config: Value = serde_json::from_str(l[0].split_once("config=").unwrap().1).unwrap();
    assert!(config.get("kappa13_hz").is_some());
    assert_eq!(l[1], columns);
}

#[test]
fn golden_headers() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    summary(&["matrix", "--output", out]);
    assert_header(
        &dir.path().join("matrix.csv"),
        "matrix",
        "re_t,im_t,re_r,im_r,re_rp,im_rp,re_tp,im_tp",
    );
    summary(&["fringe", "--output", out]);
    assert_header(
        &dir.path().join("fringe.csv"),
        "fringe",
        "theta_rad,n_s,n_a",
    );
    summary(&["phase-diagram", "--output", out]);
    assert_header(
        &dir.path().join("phase_diagram.csv"),
        "phase-diagram",
        "index,n_s,n_a",
    );
    summary(&["sweep", "--output", out, "--points", "3"]);
    assert_header(
        &dir.path().join("sweep.csv"),
        "sweep",
        "axis_value,two_phi_rad,visibility_s,visibility_a,pearson,unitarity_deviation",
    );
    summary(&["evolve", "--output", out]);
    assert_header(
        &dir.path().join("propagator.csv"),
        "evolve",
        "re_t,im_t,re_r,im_r,re_rp,im_rp,re_tp,im_tp",
    );
}

#[test]
fn matrix_half_splitter() {
    let dir = tempfile::tempdir().unwrap();
    let z = format!("--zeta={LN_2}");
    let e = format!("--eta={LN_2}");
    let s = summary(&[
        "matrix",
        "--output",
        dir.path().to_str().unwrap(),
        &z,
        &e,
        "--delta_hz=0",
    ]);
    assert!((s["t"]["re"].as_f64().unwrap() - 0.5).abs() < 1e-15);
    assert_eq!(s["t"]["im"].as_f64().unwrap(), 0.0);
    assert_eq!(s["two_phi"].as_f64().unwrap(), 0.0);
    let rows = data_rows(&dir.path().join("matrix.csv"));
    assert_eq!(rows, vec![vec![0.5, 0.0, -0.5, 0.0, -0.5, 0.0, 0.5, 0.0]]);
}

#[test]
fn row_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    summary(&["fringe", "--output", out, "--theta_samples=8"]);
    assert_eq!(lines(&dir.path().join("fringe.csv")).len(), 10);
    let rows = data_rows(&dir.path().join("fringe.csv"));
    for (k, r) in rows.iter().enumerate() {
        assert!((r[0] - TAU * k as f64 / 8.0).abs() < 1e-11);
    }
    summary(&["phase-diagram", "--output", out, "--count=500"]);
    let rows = data_rows(&dir.path().join("phase_diagram.csv"));
    assert_eq!(rows.len(), 500);
    assert!(rows
        .iter()
        .enumerate()
        .all(|(i, r)| r[0] == i as f64 && r.len() == 3));
}

#[test]
fn delta_sweep_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let s = summary(&[
        "sweep",
        "--output",
        dir.path().to_str().unwrap(),
        "--axis",
        "delta",
        "--points",
        "31",
    ]);
    assert_eq!(s["strictly_increasing"], Value::Bool(true));
    let rows = data_rows(&dir.path().join("sweep.csv"));
    assert_eq!(rows.len(), 31);
    assert!(rows[0][1].abs() < 1e-9);
    assert!((rows[30][0] - 60e6).abs() < 1e-3);
    assert!(rows[30][1] > 3.0);
}

#[test]
fn cascade_od_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let s = summary(&[
        "sweep",
        "--output",
        dir.path().to_str().unwrap(),
        "--axis",
        "od",
        "--points",
        "4",
        "--model=cascade",
    ]);
    assert_eq!(s["strictly_decreasing"], Value::Bool(true));
}

#[test]
fn fit_external_scatter() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("points.csv");
    let mut text = String::from("# synthetic\nx,y\n");
    for k in 0..200 {
        let t = TAU * k as f64 / 200.0;
        text.push_str(&format!(
            "{:.17e},{:.17e}\n",
            2.0 + t.cos(),
            3.0 + 0.5 * (t + 1.0).cos()
        ));
    }
    fs::write(&path, text).unwrap();
    let s = summary(&["fit", "--input", path.to_str().unwrap()]);
    assert!((s["delta"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(s["degeneracy"], Value::String("none".into()));
}

#[test]
fn identical_runs_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = [
        "phase-diagram",
        "--output",
        out,
        "--seed",
        "5",
        "--noise_sigma=0.05",
        "--format",
        "csv,svg",
    ];
    summary(&args);
    let csv1 = fs::read(dir.path().join("phase_diagram.csv")).unwrap();
    let svg1 = fs::read(dir.path().join("phase_diagram.svg")).unwrap();
    summary(&args);
    assert_eq!(
        csv1,
        fs::read(dir.path().join("phase_diagram.csv")).unwrap()
    );
    assert_eq!(
        svg1,
        fs::read(dir.path().join("phase_diagram.svg")).unwrap()
    );
    let other = [
        "phase-diagram",
        "--output",
        out,
        "--seed",
        "6",
        "--noise_sigma=0.05",
    ];
    summary(&other);
    assert_ne!(
        csv1,
        fs::read(dir.path().join("phase_diagram.csv")).unwrap()
    );
}

#[test]
fn config_file_and_override_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"delta_hz": 0, "od": 10}"#).unwrap();
    let out = dir.path().to_str().unwrap();
    let s = summary(&["matrix", "--config", cfg.to_str().unwrap(), "--output", out]);
    assert_eq!(s["delta_ratio"].as_f64().unwrap(), 0.0);
    assert!((s["eta"].as_f64().unwrap() - 0.5).abs() < 1e-15);
    let s = summary(&[
        "matrix",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        out,
        "--od=20",
    ]);
    assert!((s["eta"].as_f64().unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let bad = mpbs(&["matrix", "--output", out, "--od=-1"]);
    assert_eq!(bad.code, 1);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("`od`"));
    let unknown = mpbs(&["matrix", "--output", out, "--bogus_key=1"]);
    assert_eq!(unknown.code, 1);
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("bogus_key"));
    let missing = mpbs(&["matrix", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(missing.code, 2);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let unwritable = mpbs(&["fringe", "--output", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(unwritable.code, 2);
    assert_eq!(mpbs(&["--help"]).code, 0);
}

#[test]
fn svg_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    summary(&["fringe", "--output", out, "--format", "svg"]);
    assert!(!dir.path().join("fringe.csv").exists());
    let svg = fs::read_to_string(dir.path().join("fringe.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
    summary(&["sweep", "--output", out, "--format", "svg", "--points", "5"]);
    assert!(dir.path().join("sweep.svg").exists());
}
