//! Command-line workflows run through the `epirl` binary.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: [&str; 4] = ["--set", "population.pop_size=500", "--set", "population.pop_infected=169650"];

fn epirl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epirl"))
        .args(args)
        .env_remove("EPIRL_CONFIG")
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = epirl(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend(SMALL);
    v
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect()
}

#[test]
fn simulate_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        run_ok(&with_small(&["simulate", "--policy", "schedule:7w7l", "--seed", "4", "--out", dir.to_str().unwrap()]));
    }
    for file in ["counts.csv", "actions.csv", "rt.csv", "summary.json"] {
        assert_eq!(read(&a.join(file)), read(&b.join(file)), "{file}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&read(&a.join("manifest.json"))).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seeds"][0], 4);
    assert_eq!(csv_rows(&a.join("counts.csv")).len(), 133);
}

#[test]
fn usage_errors_exit_2_without_output() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let o = out.to_str().unwrap();
    let missing = tmp.path().join("nowhere.json");
    let checkpoint = format!("checkpoint:{}", missing.display());
    let cases: Vec<Vec<&str>> = vec![
        vec!["train", "--agent", "dqn", "--space", "continuous", "--episodes", "1", "--out", o],
        vec!["simulate", "--policy", &checkpoint, "--out", o],
        vec!["simulate", "--policy", "schedule", "--out", o],
        vec!["simulate", "--set", "population.pop_sise=10", "--out", o],
        vec!["evaluate", "--seeds", "3..1", "--out", o],
    ];
    for args in cases {
        let res = epirl(&args);
        assert_eq!(res.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&res.stderr));
        assert!(!out.exists(), "{args:?} left {}", out.display());
    }
    let res = epirl(&["simulate", "--policy", &checkpoint, "--out", o]);
    assert!(String::from_utf8_lossy(&res.stderr).contains("nowhere.json"));
}

#[test]
fn comparing_a_policy_with_itself_gives_identical_rows() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("cmp");
    run_ok(&with_small(&[
        "compare", "--policy", "none", "--policy", "none", "--seeds", "1..3", "--out", out.to_str().unwrap(),
    ]));
    let rows = csv_rows(&out.join("report.csv"));
    assert_eq!(rows.len(), 2);
    assert_ne!(rows[0][0], rows[1][0], "duplicate labels are disambiguated");
    assert_eq!(rows[0][1..], rows[1][1..]);
    assert!(out.join("report.txt").exists() && out.join("report.json").exists());
}

#[test]
fn one_trial_calibration_writes_a_reloadable_overlay() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("obs.csv");
    std::fs::write(
        &data,
        "date,cum_confirmed,cum_deaths\n2020-02-01,10,0\n2020-02-15,400,2\n2020-03-01,5000,60\n2020-03-15,40000,900\n",
    )
    .unwrap();
    let out = tmp.path().join("cal");
    run_ok(&with_small(&[
        "calibrate", "--data", data.to_str().unwrap(), "--trials", "1", "--out", out.to_str().unwrap(),
    ]));
    assert_eq!(csv_rows(&out.join("trials.csv")).len(), 1);
    assert!(!csv_rows(&out.join("fit.csv")).is_empty());

    let overlay = out.join("best_params.toml");
    let sim = tmp.path().join("sim");
    run_ok(&[
        "simulate", "--config", overlay.to_str().unwrap(), "--set", "population.pop_size=500", "--out",
        sim.to_str().unwrap(),
    ]);
    let manifest: serde_json::Value = serde_json::from_str(&read(&sim.join("manifest.json"))).unwrap();
    let table: toml::Table = read(&overlay).parse().unwrap();
    let beta = table["population"]["beta_initial"].as_float().unwrap();
    assert_eq!(manifest["config"]["population"]["beta_initial"].as_f64().unwrap(), beta);
    assert!(manifest["config_file"]["sha256"].is_string());
}

#[test]
fn training_resumes_without_a_gap() {
    let tmp = TempDir::new().unwrap();
    let path = |name: &str| tmp.path().join(name).to_str().unwrap().to_string();

    run_ok(&with_small(&["train", "--episodes", "0", "--out", &path("zero")]));
    assert!(csv_rows(&tmp.path().join("zero/curve.csv")).is_empty());

    let train = |episodes: &str, out: &str, resume: Option<&str>| {
        let mut args = with_small(&["train", "--episodes", episodes, "--seed", "3", "--out", out]);
        args.extend(["--set", "training.checkpoint_every=10"]);
        if let Some(r) = resume {
            args.extend(["--resume", r]);
        }
        run_ok(&args);
    };
    train("20", &path("full"), None);
    train("10", &path("half"), None);
    train("20", &path("resumed"), Some(&path("half/checkpoint.json")));

    let curve = csv_rows(&tmp.path().join("full/curve.csv"));
    assert_eq!(curve.len(), 20);
    assert_eq!(curve, csv_rows(&tmp.path().join("resumed/curve.csv")));
    assert_eq!(read(&tmp.path().join("full/checkpoint.json")), read(&tmp.path().join("resumed/checkpoint.json")));
    assert!(tmp.path().join("full/checkpoints/episode_000010.json").exists());
}
