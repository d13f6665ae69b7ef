use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn spacs(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spacs"))
        .args(args)
        .current_dir(dir)
        .env_remove("SPACS_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn simulate(dir: &Path, name: &str, seed: &str) {
    let out = spacs(
        dir,
        &["simulate", "--alpha", "0.81", "--phi", "3.14", "--eta", "0.58", "--n", "800", "--seed", seed, "--out", name],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_is_deterministic_and_sized() {
    let dir = TempDir::new().unwrap();
    simulate(dir.path(), "a.csv", "5");
    simulate(dir.path(), "b.csv", "5");
    simulate(dir.path(), "c.csv", "6");
    let a = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    let c = std::fs::read_to_string(dir.path().join("c.csv")).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    let rows = a.lines().filter(|l| !l.trim().is_empty()).count();
    assert_eq!(rows, 1 + 21 * 800);
    assert!(dir.path().join("a.meta.json").exists());
}

#[test]
fn estimate_writes_result_and_exit_codes() {
    let dir = TempDir::new().unwrap();
    simulate(dir.path(), "d.csv", "1");
    let out = spacs(dir.path(), &["estimate", "--data", "d.csv", "--out", "fit.json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let fit = read_json(&dir.path().join("fit.json"));
    assert_eq!(fit["command"], "estimate");
    assert_eq!(fit["seed"], 1);
    let alpha = fit["result"]["params"]["abs_alpha"].as_f64().unwrap();
    assert!((alpha - 0.81).abs() < 0.2, "{alpha}");

    let out = spacs(dir.path(), &["estimate", "--data", "d.csv", "--max-iterations", "2", "--out", "short.json"]);
    assert_eq!(code(&out), 2);

    let out = spacs(dir.path(), &["estimate", "--data", "missing.csv"]);
    assert_eq!(code(&out), 1);

    let out = spacs(dir.path(), &["no-such-command"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn fixed_parameter_is_held() {
    let dir = TempDir::new().unwrap();
    simulate(dir.path(), "d.csv", "2");
    let out = spacs(dir.path(), &["estimate", "--data", "d.csv", "--fix", "eta=0.5", "--out", "fit.json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let fit = read_json(&dir.path().join("fit.json"));
    assert_eq!(fit["result"]["params"]["eta"].as_f64().unwrap(), 0.5);
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("run.json"), r#"{"alpha": 0.3, "eta": 0.9, "n": 50, "seed": 3}"#).unwrap();
    let out = spacs(dir.path(), &["--config", "run.json", "simulate", "--alpha", "1.2", "--out", "d.csv"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let meta = read_json(&dir.path().join("d.meta.json"));
    assert_eq!(meta["seed"], 3);
    assert_eq!(meta["n_per_phase"], 50);
    assert_eq!(meta["true_params"]["abs_alpha"].as_f64().unwrap(), 1.2);
    assert_eq!(meta["true_params"]["eta"].as_f64().unwrap(), 0.9);
}

#[test]
fn output_dir_from_environment() {
    let dir = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_spacs"))
        .args(["simulate", "--alpha", "0.5", "--eta", "0.9", "--n", "20"])
        .current_dir(dir.path())
        .env("SPACS_OUTPUT_DIR", "results")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("results/dataset.csv").exists());
}

#[test]
fn scan_fidelity_and_plot_outputs() {
    let dir = TempDir::new().unwrap();
    simulate(dir.path(), "d.csv", "4");
    let out = spacs(dir.path(), &["estimate", "--data", "d.csv", "--out", "fit.json"]);
    assert_eq!(code(&out), 0);

    let out = spacs(dir.path(), &["scan", "--data", "d.csv", "--estimate", "fit.json", "--axis", "eta"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("scan_eta.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("eta,d2,d2_error"));
    assert_eq!(lines.filter(|l| !l.is_empty()).count(), 31);

    let out = spacs(
        dir.path(),
        &["fidelity", "--data", "d.csv", "--estimate", "fit.json", "--bootstrap", "4", "--out", "fid.json"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let fid = read_json(&dir.path().join("fid.json"));
    let e2 = fid["result"]["e_double_prime"]["value"].as_f64().unwrap();
    let g = fid["result"]["g"]["value"].as_f64().unwrap();
    assert!(e2 <= g);

    let out = spacs(
        dir.path(),
        &["plotdata", "--data", "d.csv", "--estimate", "fit.json", "--phase-index", "3", "--output-dir", "plots"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["histogram_phase3.csv", "model_phase3.csv"] {
        let text = std::fs::read_to_string(dir.path().join("plots").join(name)).unwrap();
        assert!(text.lines().count() > 5, "{name}");
    }
}

#[test]
fn estimate_of_another_dataset_is_rejected() {
    let dir = TempDir::new().unwrap();
    simulate(dir.path(), "a.csv", "7");
    simulate(dir.path(), "b.csv", "8");
    let out = spacs(dir.path(), &["estimate", "--data", "a.csv", "--out", "fit.json"]);
    assert_eq!(code(&out), 0);
    let out = spacs(dir.path(), &["scan", "--data", "b.csv", "--estimate", "fit.json", "--axis", "phi"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("different dataset"));
}

#[test]
fn validate_passes() {
    let dir = TempDir::new().unwrap();
    let out = spacs(dir.path(), &["validate"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 5);
    assert!(dir.path().join("validate.json").exists());
}
