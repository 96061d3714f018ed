use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dulac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dulac"))
        .args(args)
        .output()
        .expect("run dulac")
}

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
        .display()
        .to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn error_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stderr).expect("error report is JSON")
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn model_prints_seventeen_digits() {
    let o = dulac(&["model", "--m", "0", "--rho", "0", "--eval", "psi_nf", "--zeta", "1"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.starts_with("1.7182818284590451e0"), "{out}");
    let re: f64 = out.split_whitespace().next().unwrap().parse().unwrap();
    assert_eq!(re, std::f64::consts::E - 1.0);
}

#[test]
fn model_inverse_undoes_forward() {
    let o = dulac(&["model", "--m", "1", "--rho", "0.5", "--eval", "psi_nf", "--zeta", "2,0.5"]);
    let w: Vec<String> = stdout(&o).split_whitespace().map(String::from).collect();
    let o = dulac(&["model", "--m", "1", "--rho", "0.5", "--eval", "psi_nf_inverse", "--zeta", &format!("{},{}", w[0], w[1])]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let z: Vec<f64> = stdout(&o).split_whitespace().map(|s| s.parse().unwrap()).collect();
    assert!((z[0] - 2.0).abs() < 1e-12 && (z[1] - 0.5).abs() < 1e-12, "{z:?}");
}

#[test]
fn model_grid_is_csv() {
    let o = dulac(&["model", "--eval", "f0", "--grid", "1:3:3,-0.5:0.5:2"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "re_zeta,im_zeta,re,im");
    assert_eq!(lines.len(), 7);
}

#[test]
fn verify_accepts_symmetric_moduli() {
    let o = dulac(&["verify-moduli", &data("symmetric.json")]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["symmetry"]["symmetric"], true);
    assert_eq!(v["pass"], true);

    let o = dulac(&["verify-moduli", &data("asymmetric.json")]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["symmetry"]["symmetric"], false);
}

#[test]
fn missing_file_is_a_validation_error() {
    let o = dulac(&["verify-moduli", "no-such-moduli.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_json(&o)["error"], "validation");
}

#[test]
fn zero_radius_moduli_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"J": 1, "degree": 2, "entries": [{"j": 0, "h0": [[0.1, 0.0]], "hinf": [[0.0, 0.0]], "sigma": 0.0}]}"#,
    )
    .unwrap();
    let o = dulac(&["verify-moduli", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bad_domain_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = dulac(&[
        "realize",
        "--moduli",
        &data("identity.json"),
        "--domain",
        "linear:-1,0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn require_symmetry_rejects_asymmetric_moduli() {
    let dir = tempfile::tempdir().unwrap();
    let o = dulac(&[
        "realize",
        "--moduli",
        &data("asymmetric.json"),
        "--require-symmetry",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(error_json(&o)["message"].as_str().unwrap().contains("not symmetric"));
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from-config");
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "moduli = {:?}\nm = 0\nrho = 0.0\ndomain = \"linear:2,0\"\nout = {:?}\n\n[iteration]\nmax_steps = 3\n",
            data("identity.json"),
            out.display().to_string()
        ),
    )
    .unwrap();
    let o = dulac(&["realize", "--config", cfg.to_str().unwrap(), "--no-gevrey"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["params"]["iteration"]["max_steps"], 3);

    let other = dir.path().join("from-flag");
    let o = dulac(&[
        "realize",
        "--config",
        cfg.to_str().unwrap(),
        "--no-gevrey",
        "--max-steps",
        "5",
        "--out",
        other.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let run: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(other.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["params"]["iteration"]["max_steps"], 5);

    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    let o = dulac(&["realize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

fn realize_single_mode(dir: &Path) -> PathBuf {
    let o = dulac(&[
        "realize",
        "--moduli",
        &data("single_mode.json"),
        "--no-gevrey",
        "--samples",
        "3",
        "--jitter",
        "0.5",
        "--seed",
        "7",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(summary["report"]["cocycle_residual_max"].as_f64().unwrap() < 1e-8);
    assert!(summary["report"]["abel_residual_max"].as_f64().unwrap() < 1e-6);
    dir.join("run.json")
}

#[test]
fn realize_writes_run_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let run = realize_single_mode(dir.path());
    assert!(run.exists());
    let (header, rows) = csv_rows(&dir.path().join("atlas.csv"));
    assert_eq!(header, ["petal", "re_zeta", "im_zeta", "re_r", "im_r"]);
    assert!(!rows.is_empty());
    let (header, rows) = csv_rows(&dir.path().join("germ.csv"));
    assert_eq!(header.len(), 8);
    for row in &rows {
        let abel: f64 = row[7].parse().unwrap();
        assert!(abel < 1e-6, "{row:?}");
    }

    // same seed, same jittered samples
    let again = tempfile::tempdir().unwrap();
    realize_single_mode(again.path());
    assert_eq!(
        std::fs::read_to_string(dir.path().join("germ.csv")).unwrap(),
        std::fs::read_to_string(again.path().join("germ.csv")).unwrap()
    );
}

#[test]
fn export_rebuilds_saved_run() {
    let dir = tempfile::tempdir().unwrap();
    let run = realize_single_mode(dir.path());
    let run = run.to_str().unwrap();

    let atlas = dir.path().join("minus1.csv");
    let o = dulac(&["export", "--run", run, "--what", "atlas", "--petal", "minus:1", "--out", atlas.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = csv_rows(&atlas);
    assert!(rows.iter().all(|r| r[0] == "V-[1]"));

    let germ = dir.path().join("germ.csv");
    let o = dulac(&[
        "export", "--run", run, "--what", "germ", "--grid", "2:3:2,0:0.5:2", "--out", germ.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(csv_rows(&germ).1.len(), 4);

    let orbit = dir.path().join("orbit.csv");
    let o = dulac(&["export", "--run", run, "--what", "orbit", "--zeta", "1.5,0.1", "--out", orbit.to_str().unwrap()]);
    assert!(o.status.success());
    let (header, rows) = csv_rows(&orbit);
    assert_eq!(header[0], "k");
    assert!(rows.len() > 10);

    let o = dulac(&["export", "--run", run, "--what", "orbit", "--out", orbit.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn extract_model_gives_identity() {
    let dir = tempfile::tempdir().unwrap();
    let o = dulac(&["extract", "--germ", "model", "--window", "1", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    for fit in v["fits"].as_array().unwrap() {
        let h = fit["h"]["coeffs"].as_array().unwrap();
        for (k, c) in h.iter().enumerate() {
            let target = if k == 0 { 1.0 } else { 0.0 };
            assert!((c[0].as_f64().unwrap() - target).abs() < 1e-8, "{fit}");
            assert!(c[1].as_f64().unwrap().abs() < 1e-8, "{fit}");
        }
    }
    assert!(dir.path().join("extracted.json").exists());
}

#[test]
fn extract_rejects_unknown_germ() {
    let o = dulac(&["extract", "--germ", "cubic", "--out", "unused"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn roundtrip_of_identity_moduli() {
    let dir = tempfile::tempdir().unwrap();
    let o = dulac(&["roundtrip", "--moduli", &data("identity.json"), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("equivalent: true"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("roundtrip.json")).unwrap()).unwrap();
    assert!(report["max_error"].as_f64().unwrap() < 1e-6);
}
