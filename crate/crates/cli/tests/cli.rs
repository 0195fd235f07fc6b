use std::path::Path;
use std::process::Command;

fn njode() -> Command {
    Command::new(env!("CARGO_BIN_EXE_njode"))
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const TINY: &str = r#"{
    "generator": {"n_paths": 30},
    "model": {"latent_dim": 6, "hidden": [6], "sig_level": 2, "step": 0.05},
    "training": {"epochs": 2, "batch_size": 10},
    "eval_points": 10
}"#;

#[test]
fn train_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write(&cfg, TINY);
    let out = dir.path().join("run");
    let status = njode()
        .args(["train", "--config", cfg.to_str().unwrap(), "--seed", "5", "--loss", "standard", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,train_loss,test_loss,eval_metric\n"));
    assert_eq!(metrics.lines().count(), 4);
    let traj = std::fs::read_to_string(out.join("trajectories.csv")).unwrap();
    assert!(traj.starts_with("path_id,t,coord,X,O,oracle,model\n"));
    for name in ["model_paths.csv", "oracle_paths.csv"] {
        let text = std::fs::read_to_string(out.join(name)).unwrap();
        assert!(text.starts_with("path_id,t,coord,Y,is_observation,pre_or_post\n"), "{name}");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["loss"]["kind"], "standard");
    assert_eq!(report["config"]["seed"], 5);
    assert_eq!(report["epochs"].as_array().unwrap().len(), 2);

    // saved weights can be evaluated again
    let eval_out = dir.path().join("eval");
    let status = njode()
        .args(["evaluate", "--config", cfg.to_str().unwrap(), "--seed", "5", "--model"])
        .arg(out.join("model.json"))
        .arg("--out")
        .arg(&eval_out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(eval_out.join("report.json").exists());
}

#[test]
fn generate_then_train_on_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write(&cfg, TINY);
    let status = njode()
        .args(["generate", "--experiment", "gbm_dependent", "--config", cfg.to_str().unwrap(), "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let data = dir.path().join("dataset.jsonl");
    assert_eq!(std::fs::read_to_string(&data).unwrap().lines().count(), 31);
    let status = njode()
        .args(["train", "--experiment", "gbm_dependent", "--config", cfg.to_str().unwrap(), "--dataset"])
        .arg(&data)
        .arg("--out")
        .arg(dir.path().join("run"))
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn sweep_writes_one_row_per_level_and_variant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write(&cfg, TINY);
    let status = njode()
        .args(["sweep", "--experiment", "highdim_noisy", "--zetas", "0,0.5", "--config", cfg.to_str().unwrap(), "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "zeta,variant,min_eval");
    assert_eq!(lines.len(), 5);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    write(&cfg, r#"{"training": {"epochs": 0}}"#);
    let out = njode().args(["train", "--config", cfg.to_str().unwrap(), "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = njode().args(["train", "--loss", "bogus", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    write(&cfg, "{not json");
    let out = njode().args(["train", "--config", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = njode().args(["train", "--profile", "huge"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write(
        &cfg,
        r#"{
        "generator": {"n_paths": 20},
        "model": {"latent_dim": 4, "hidden": [4], "sig_level": 1, "step": 0.1},
        "training": {"epochs": 2, "batch_size": 10, "adam": {"lr": 1e300}},
        "eval_points": 10
    }"#,
    );
    let out = njode().args(["train", "--config", cfg.to_str().unwrap(), "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
