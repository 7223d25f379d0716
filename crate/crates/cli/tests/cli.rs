use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn market_config() -> Value {
    json!({
        "schema": 1,
        "model": {
            "kind": "market",
            "fees": { "lambda": [[0.0, 0.1], [0.1, 0.0]] },
            "prices": { "kind": "martingale_gbm", "sigma": [0.0, 0.3] },
            "endowment": [1.0, 1.0],
            "horizon": 1.0,
            "n_steps": 8
        },
        "goal": { "kind": "expectation" },
        "policy": { "kind": "band", "bounds": [[0.2, 0.5], [0.5, 0.8], [0.3, 0.7]] },
        "search": { "n_paths": 100, "budget": 12, "master_seed": 3, "grids": [4, 8] }
    })
}

fn storage_config() -> Value {
    json!({
        "schema": 1,
        "model": {
            "kind": "storage",
            "demand": { "kind": "brownian_drift", "x0": [0.0], "drift": [0.0], "sigma": [1.0] },
            "costs": {
                "a_plus": [[1.0]],
                "a_minus": [[1.0]],
                "running": { "kind": "quadratic_capped", "weight": 1.0, "cap": 4.0 },
                "trade_plus": { "kind": "linear", "level": 0.5 },
                "trade_minus": { "kind": "linear", "level": 0.5 },
                "terminal": { "kind": "zero" }
            },
            "budget": 2.0,
            "horizon": 1.0,
            "n_steps": 8,
            "benchmark": { "kind": "constant", "value": 0.0 }
        },
        "goal": { "kind": "expectation" },
        "policy": { "kind": "band", "bounds": [[-2.0, 0.0], [0.0, 2.0], [-1.0, 1.0], [0.0, 1.0]] },
        "search": { "n_paths": 100, "budget": 12, "master_seed": 3 }
    })
}

fn write_config(dir: &Path, cfg: &Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn sclab(config: &Path, out: &Path, command: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sclab"))
        .args(["run", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg(command)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn simulate_writes_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &market_config());
    let out = dir.path().join("out");
    let o = sclab(&cfg, &out, "simulate");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["prices.csv", "controls.csv", "outcomes.csv", "simulate.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(out.join("simulate.json")).unwrap()).unwrap();
    assert_eq!(summary["n_paths"], 100);
}

#[test]
fn nonzero_diagonal_fee_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = market_config();
    c["model"]["fees"]["lambda"][0][0] = json!(0.2);
    let cfg = write_config(dir.path(), &c);
    let o = sclab(&cfg, &dir.path().join("out"), "simulate");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model.fees: lambda[0][0]"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = market_config();
    c["search"]["n_pahts"] = json!(10);
    let cfg = write_config(dir.path(), &c);
    let o = sclab(&cfg, &dir.path().join("out"), "simulate");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("search"), "{}", stderr(&o));
    assert!(stderr(&o).contains("n_pahts"), "{}", stderr(&o));
}

#[test]
fn missing_output_directory_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &market_config());
    let o = Command::new(env!("CARGO_BIN_EXE_sclab"))
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("simulate")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("output.directory"));
}

#[test]
fn non_nested_grids_are_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = market_config();
    c["search"]["grids"] = json!([4, 6]);
    let cfg = write_config(dir.path(), &c);
    let o = sclab(&cfg, &dir.path().join("out"), "optimize");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("search.grids"));
}

#[test]
fn verify_passes_on_proportional_fee_market() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &market_config());
    let out = dir.path().join("out");
    let o = sclab(&cfg, &out, "verify");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert_eq!(v["pass"], true);
    let names: Vec<&str> = v["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["metric_axioms", "duality", "variation_bound", "supermartingale"]);
}

#[test]
fn verify_skips_cps_checks_for_drifted_prices() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = market_config();
    c["model"]["prices"] = json!({ "kind": "drifted_gbm", "sigma": [0.0, 0.3], "mu": [0.0, 0.1] });
    let cfg = write_config(dir.path(), &c);
    let out = dir.path().join("out");
    let o = sclab(&cfg, &out, "verify");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert_eq!(v["checks"][2]["status"], "skipped");
}

#[test]
fn optimize_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &market_config());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = sclab(&cfg, out, "optimize");
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["report.json", "refinement.csv", "trace.csv", "variation_histogram.csv"] {
        let x = std::fs::read(a.join(f)).unwrap();
        let y = std::fs::read(b.join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs");
    }
    let report: Value = serde_json::from_str(&std::fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["refinement"]["rows"].as_array().unwrap().len(), 2);
    assert_eq!(report["search"]["evaluations"], report["search"]["trace"].as_array().unwrap().len());
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &market_config());
    let run = |seed: &str, out: &Path| {
        let o = Command::new(env!("CARGO_BIN_EXE_sclab"))
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .args(["--seed", seed, "simulate"])
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        std::fs::read(out.join("prices.csv")).unwrap()
    };
    let a = run("3", &dir.path().join("a"));
    let b = run("4", &dir.path().join("b"));
    let plain = sclab(&cfg, &dir.path().join("c"), "simulate");
    assert_eq!(plain.status.code(), Some(0));
    assert_eq!(a, std::fs::read(dir.path().join("c/prices.csv")).unwrap());
    assert_ne!(a, b);
}

#[test]
fn storage_commands_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &storage_config());
    let out = dir.path().join("out");
    for cmd in ["simulate", "optimize", "verify", "metric"] {
        let o = sclab(&cfg, &out, cmd);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", stderr(&o));
    }
    let header = std::fs::read_to_string(out.join("controls.csv")).unwrap();
    assert!(header.starts_with("path_id,t,L1,L2\n"));
    assert!(out.join("demand.csv").exists());
}

#[test]
fn metric_reads_the_control_dump() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = market_config();
    c["metric"] = json!({ "max_paths": 5 });
    let cfg = write_config(dir.path(), &c);
    let out = dir.path().join("out");
    assert_eq!(sclab(&cfg, &out, "simulate").status.code(), Some(0));
    let o = sclab(&cfg, &out, "metric");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("mz_distances.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "i,j,distance");
    assert_eq!(lines.len(), 1 + 10);
    for l in &lines[1..] {
        let d: f64 = l.rsplit(',').next().unwrap().parse().unwrap();
        assert!(d >= 0.0);
    }
}

#[test]
fn metric_without_dump_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &market_config());
    let o = sclab(&cfg, &dir.path().join("empty"), "metric");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("metric.input"));
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &market_config());
    let o = Command::new(env!("CARGO_BIN_EXE_sclab"))
        .env("SCL_THREADS", "many")
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .arg("simulate")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("SCL_THREADS"));
}

#[test]
fn errors_inside_the_model_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = storage_config();
    c["model"]["budget"] = json!("lots");
    let cfg = write_config(dir.path(), &c);
    let o = sclab(&cfg, &dir.path().join("out"), "simulate");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model.budget:"), "{}", stderr(&o));
}
