use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_comgrl"))
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny")
}

fn schema(name: &str) -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas").join(name);
    let schema: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display())))
        .unwrap()
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Small, fast settings shared by the tests.
fn tiny_args(cmd: &mut Command) -> &mut Command {
    cmd.args(["--pretrain-epochs", "3", "--total-epochs", "6"])
}

fn small_sbm_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.json");
    let config = serde_json::json!({
        "sbm": {
            "classes": 2, "nodes_per_class": 20, "p_in": 0.3, "p_out": 0.02,
            "feature_dim": 4, "train_per_class": 3, "val_per_class": 3, "seed": 4
        },
        "hidden": 8, "heads": 2, "layers": 1, "hop_radius": 1,
        "pretrain_epochs": 3, "total_epochs": 8, "lr": 0.01, "threshold": 0.0
    });
    fs::write(&path, config.to_string()).unwrap();
    path
}

fn epochs(report: &Value) -> &Value {
    &report["epochs"]
}

#[test]
fn single_seed_on_fixture_writes_valid_report() {
    let out = tempfile::tempdir().unwrap();
    run(tiny_args(bin().args(["train", "--dataset"]).arg(fixture()).args(["--seeds", "0", "--out"]).arg(out.path())));
    let report = read_json(&out.path().join("seed_0/report.json"));
    let validator = schema("report.schema.json");
    assert!(validator.is_valid(&report), "{:?}", validator.iter_errors(&report).map(|e| e.to_string()).collect::<Vec<_>>());
    let epochs = epochs(&report).as_array().unwrap();
    assert_eq!(epochs.len(), 6);
    assert!(epochs.iter().all(|e| e["loss"].as_f64().unwrap().is_finite()));
    assert!(schema("aggregate.schema.json").is_valid(&read_json(&out.path().join("aggregate.json"))));
}

#[test]
fn aggregate_over_five_seeds() {
    let out = tempfile::tempdir().unwrap();
    run(tiny_args(bin().args(["train", "--dataset"]).arg(fixture()).args(["--seeds", "0,1,2,3,4", "--out"]).arg(out.path())));
    let agg = read_json(&out.path().join("aggregate.json"));
    let values: Vec<f64> = agg["test_acc"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(values.len(), 5);
    let mean = values.iter().sum::<f64>() / 5.0;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
    assert!((agg["mean"].as_f64().unwrap() - mean).abs() < 1e-12);
    assert!((agg["std"].as_f64().unwrap() - std).abs() < 1e-12);
    for seed in 0..5 {
        let r = read_json(&out.path().join(format!("seed_{seed}/report.json")));
        assert_eq!(r["test_acc"].as_f64().unwrap(), values[seed]);
    }
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"alpah": 1.0}"#).unwrap();
    let out = bin()
        .args(["train", "--dataset"])
        .arg(fixture())
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpah"));
}

#[test]
fn invalid_config_value_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["train", "--dataset"])
        .arg(fixture())
        .args(["--pretrain-epochs", "10", "--total-epochs", "5", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("pretrain_epochs"));
}

#[test]
fn gen_is_reproducible_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_sbm_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for target in [&a, &b] {
        run(bin().arg("gen").arg("--config").arg(&cfg).arg("--out").arg(target));
    }
    for file in ["edges.txt", "features.txt", "labels.txt", "split.txt"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    let graph = comgrl::load_dataset(&a).unwrap();
    assert_eq!(graph.num_nodes(), 40);
    let c = dir.path().join("c");
    comgrl::write_dataset(&graph, &c).unwrap();
    assert_eq!(comgrl::load_dataset(&c).unwrap(), graph);
    for file in ["edges.txt", "features.txt", "labels.txt", "split.txt"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(c.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn zero_noise_matches_train() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_sbm_config(dir.path());
    let (t, n) = (dir.path().join("t"), dir.path().join("n"));
    run(bin().arg("train").arg("--config").arg(&cfg).args(["--seeds", "1,2", "--out"]).arg(&t));
    run(bin().arg("noise").arg("--config").arg(&cfg).args(["--seeds", "1,2", "--lnr", "0", "--gnr", "0", "--out"]).arg(&n));
    for seed in [1, 2] {
        let a = read_json(&t.join(format!("seed_{seed}/report.json")));
        let b = read_json(&n.join(format!("seed_{seed}/report.json")));
        assert_eq!(epochs(&a), epochs(&b));
        assert_eq!(a["test_acc"], b["test_acc"]);
    }
}

#[test]
fn noise_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_sbm_config(dir.path());
    let out = dir.path().join("n");
    run(bin().arg("noise").arg("--config").arg(&cfg).args(["--seeds", "0", "--lnr", "0.5", "--gnr", "0.3", "--out"]).arg(&out));
    let r = read_json(&out.join("seed_0/report.json"));
    assert_eq!(r["noise"]["lnr"], 0.5);
    assert_eq!(r["noise"]["flipped_labels"], 3);
    assert!(r["noise"]["graph"]["added"].as_u64().unwrap() > 0);
    assert!(schema("report.schema.json").is_valid(&r));
}

#[test]
fn ablation_no_mixup_equals_disabled_train() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_sbm_config(dir.path());
    let (a, t) = (dir.path().join("a"), dir.path().join("t"));
    run(bin().arg("ablate").arg("--config").arg(&cfg).args(["--seeds", "3", "--out"]).arg(&a));
    run(bin().arg("train").arg("--config").arg(&cfg).args(["--seeds", "3", "--disable-pma", "--out"]).arg(&t));
    for v in ["full", "no-lgcl", "no-gmsa", "no-pma"] {
        assert!(a.join(v).join("seed_3/report.json").exists(), "{v}");
        assert!(a.join(v).join("aggregate.json").exists(), "{v}");
    }
    let ablated = read_json(&a.join("no-pma/seed_3/report.json"));
    let trained = read_json(&t.join("seed_3/report.json"));
    assert_eq!(epochs(&ablated), epochs(&trained));
}

#[test]
fn checked_plans_are_dumped_and_pass() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_sbm_config(dir.path());
    let out = dir.path().join("o");
    run(bin().arg("train").arg("--config").arg(&cfg).args(["--seeds", "0", "--check-plans", "--out"]).arg(&out));
    let plans = read_json(&out.join("seed_0/mixup_plan.json"));
    let plans = plans.as_array().unwrap();
    assert_eq!(plans.len(), 5);
    assert!(plans.iter().any(|p| !p["pairs"].as_array().unwrap().is_empty()));
    for p in plans {
        assert_eq!(p["verdict"]["ok"], true, "{p}");
        for pair in p["pairs"].as_array().unwrap() {
            let l = pair["lambda"].as_f64().unwrap();
            assert!((0.0..=1.0).contains(&l));
        }
    }
    let r = read_json(&out.join("seed_0/report.json"));
    assert_eq!(r["mixup"]["checks_passed"], true);
}

#[test]
fn missing_input_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().arg("train").arg("--out").arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    let out = bin()
        .args(["train", "--dataset", "/nonexistent/dir", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
}
