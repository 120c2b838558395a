use std::path::Path;
use std::process::{Command, Output};

fn flattop(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flattop"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn manifest(path: &Path) -> serde_json::Value {
    let mut name = path.as_os_str().to_os_string();
    name.push(".manifest.json");
    serde_json::from_str(&std::fs::read_to_string(name).unwrap()).unwrap()
}

#[test]
fn profile_is_normalized_at_the_centre() {
    let dir = tempfile::tempdir().unwrap();
    let out = flattop(dir.path(), &["profile", "--order", "8", "--out", "profile.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    let centre = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .find(|row| row[0] == 0.0)
        .expect("x = 0 is sampled");
    assert_eq!(centre[1], 1.0);
    let m = manifest(&dir.path().join("profile.csv"));
    assert_eq!(m["command"], "profile");
    assert_eq!(m["outputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn hologram_verification_reports_high_correlation() {
    let dir = tempfile::tempdir().unwrap();
    let out = flattop(dir.path(), &["hologram", "--order", "8", "8", "--grating", "8", "--verify"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["metrics"]["correlation"].as_f64().unwrap() >= 0.98);
    assert!(dir.path().join("mask.png").exists());
}

fn rabi_digest(dir: &Path, threads: &str) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_flattop"))
        .current_dir(dir)
        .env("RAYON_NUM_THREADS", threads)
        .args([
            "simulate", "rabi", "--seed", "7", "--n-traj", "3", "--t-max-ns", "200", "--t-step-ns", "50", "--out",
            "rabi.csv",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    manifest(&dir.join("rabi.csv"))["outputs"][0]["sha256"].as_str().unwrap().to_string()
}

#[test]
fn seeded_simulation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = rabi_digest(dir.path(), "1");
    let b = rabi_digest(dir.path(), "1");
    let c = rabi_digest(dir.path(), "3");
    assert_eq!(a, b);
    assert_eq!(a, c);
    let m = manifest(&dir.path().join("rabi.csv"));
    assert_eq!(m["seed"], 7);
    assert!(m["config"]["two_photon_rabi_rad_s"].as_f64().unwrap() > 0.0);
}

#[test]
fn every_subcommand_documents_its_flags() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in [
        vec!["--help"],
        vec!["profile", "--help"],
        vec!["propagate", "--help"],
        vec!["hologram", "--help"],
        vec!["simulate", "rabi", "--help"],
        vec!["simulate", "cz", "--help"],
        vec!["fit", "rabi", "--help"],
        vec!["fit", "temperature", "--help"],
        vec!["calibrate", "trap", "--help"],
        vec!["calibrate", "field", "--help"],
    ] {
        let out = flattop(dir.path(), &cmd);
        assert!(out.status.success(), "{cmd:?}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    }
}

#[test]
fn usage_and_numerical_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(flattop(dir.path(), &["profile", "--order", "8", "--bogus"]).status.code(), Some(2));
    assert_eq!(flattop(dir.path(), &["profile", "--order", "7"]).status.code(), Some(2));
    assert_eq!(flattop(dir.path(), &["fit", "rabi", "--data", "missing.csv"]).status.code(), Some(2));
    let flat: String = std::iter::once("t_us,p\n".to_string())
        .chain((0..10).map(|k| format!("{k},0.5\n")))
        .collect();
    std::fs::write(dir.path().join("flat.csv"), flat).unwrap();
    assert_eq!(flattop(dir.path(), &["fit", "rabi", "--data", "flat.csv"]).status.code(), Some(3));
}

#[test]
fn trap_calibration_and_rabi_fit() {
    let dir = tempfile::tempdir().unwrap();
    let out = flattop(dir.path(), &["calibrate", "trap", "--omega-r-khz", "62", "--omega-z-khz", "8"]);
    assert!(out.status.success());
    let trap: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((trap["depth_uk"].as_f64().unwrap() / 800.0 - 1.0).abs() < 0.1);
    assert!((trap["waist_um"].as_f64().unwrap() / 1.4 - 1.0).abs() < 0.1);

    let w = 2.0 * std::f64::consts::PI * 2.4;
    let data: String = std::iter::once("t_us,p\n".to_string())
        .chain((0..60).map(|k| {
            let t = k as f64 * 0.025;
            format!("{t},{}\n", (w * t / 2.0).cos().powi(2))
        }))
        .collect();
    std::fs::write(dir.path().join("rabi.csv"), data).unwrap();
    let out = flattop(dir.path(), &["fit", "rabi", "--data", "rabi.csv", "--omega-bar-mhz", "2.4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fit: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((fit["omega0_mhz"].as_f64().unwrap() - 2.4).abs() < 0.012);
    assert!((fit["eta"].as_f64().unwrap() - 1.0).abs() < 0.005);
    let m = manifest(&dir.path().join("fit.json"));
    assert_eq!(m["inputs"][0]["path"], "rabi.csv");
}

#[test]
fn field_calibration_from_a_map() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("x_um,y_um,p\n");
    for j in 0..41 {
        for i in 0..41 {
            let (x, y) = (-4.0 + 0.2 * i as f64, -4.0 + 0.2 * j as f64);
            let intensity = (-2.0 * (x * x + y * y) / 4.0).exp();
            csv.push_str(&format!("{x},{y},{}\n", 1.0 - intensity));
        }
    }
    std::fs::write(dir.path().join("map.csv"), csv).unwrap();
    let out = flattop(dir.path(), &["calibrate", "field", "--map", "map.csv", "--waist-um", "2", "--max-order", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let d: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("field.json")).unwrap()).unwrap();
    assert!((d["coeffs"][0][0][0].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert!(d["reconstruction_error"].as_f64().unwrap() < 1e-2);
}

#[test]
fn propagation_with_taylor_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let out = flattop(
        dir.path(),
        &["propagate", "--order", "4", "--z", "0,0.5", "--points", "11", "--taylor-out", "taylor.csv"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let field = std::fs::read_to_string(dir.path().join("field.csv")).unwrap();
    assert_eq!(field.lines().count(), 1 + 2 * 11);
    let taylor = std::fs::read_to_string(dir.path().join("taylor.csv")).unwrap();
    let first_error: f64 = taylor.lines().nth(1).unwrap().split(',').last().unwrap().parse().unwrap();
    assert!(first_error < 1e-6);
}
