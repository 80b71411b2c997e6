use std::path::Path;
use std::process::{Command, Output};

fn fedopt(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedopt"))
        .args(args)
        .current_dir(dir)
        .env_remove("FEDOPT_WORKERS")
        .output()
        .expect("spawn fedopt")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_metrics_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = fedopt(
        &["run", "--task", "mlp2", "--optimizer", "fedyogi", "--rounds", "4", "--clients-per-round", "3", "--out", "out"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let metrics = std::fs::read_to_string(dir.path().join("out/metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("round,train_loss,grad_norm_sq,eval_metric,clients,floor_events,wall_ms"));
    assert_eq!(lines.count(), 4);

    // The saved config replays to identical metrics.
    let o = fedopt(&["run", "--config", "out/config.json", "--out", "replay"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(dir.path().join("replay/metrics.csv")).unwrap(), metrics);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.json"),
        r#"{"task": {"kind": "quadratic"}, "optimizer": {"name": "fedadam", "learnig_rate": 0.1}}"#,
    )
    .unwrap();
    let o = fedopt(&["run", "--config", "bad.json"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("learnig_rate"), "{}", stderr(&o));

    for args in [
        &["run", "--task", "quadratic"][..],
        &["run", "--task", "quadratic", "--optimizer", "fedadam", "--tau", "0"],
        &["run", "--task", "quadratic", "--optimizer", "fedavg", "--schedule", "cosine"],
        &["bounds", "--task", "quadratic", "--optimizer", "fedyogi"],
    ] {
        assert_eq!(code(&fedopt(args, dir.path())), 2, "{args:?}");
    }
}

#[test]
fn invalid_workers_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fedopt"))
        .args(["run", "--task", "quadratic", "--optimizer", "fedavg", "--rounds", "2"])
        .current_dir(dir.path())
        .env("FEDOPT_WORKERS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("FEDOPT_WORKERS"));
}

#[test]
fn divergence_exits_3_and_keeps_finished_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let o = fedopt(&["run", "--task", "quadratic", "--optimizer", "fedavg", "--client-lr", "1000", "--out", "out"], dir.path());
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let metrics = std::fs::read_to_string(dir.path().join("out/metrics.csv")).unwrap();
    assert!(metrics.lines().count() > 1);
    assert!(!metrics.contains("inf") && !metrics.contains("NaN"));
}

#[test]
fn sweep_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = fedopt(
        &[
            "sweep", "--task", "quadratic", "--optimizer", "fedadam", "--rounds", "20", "--window", "5",
            "--eta-l-grid", "0.01,0.1", "--eta-grid", "0.1,1", "--tau-grid", "0.001,0.01", "--out", "sw",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = std::fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap();
    assert!(table.starts_with("eta_l,eta,tau,score,status"));
    assert_eq!(table.lines().count(), 9);
    assert!(stderr(&o).contains("best eta_l"));
}

#[test]
fn bounds_and_partition_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = fedopt(
        &["bounds", "--task", "quadratic", "--optimizer", "fedadagrad", "--rounds", "20", "--corollary", "--seeds", "3", "--out", "b.json"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("b.json")).unwrap()).unwrap();
    assert!(report["rhs"].as_f64().unwrap() > 0.0);
    assert_eq!(report["f_star_proxy"], serde_json::Value::Bool(false));
    assert!(report["comparison"]["satisfied"].is_boolean());

    let o = fedopt(
        &["partition", "--task", "sparse_logreg", "--optimizer", "fedavg", "--partition", "lda:0.3", "--out", "split.json"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = fedopt(
        &["run", "--task", "sparse_logreg", "--optimizer", "fedadagrad", "--rounds", "2", "--manifest", "split.json", "--out", "r"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn resume_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["run", "--task", "quadratic", "--optimizer", "fedadam", "--rounds", "6", "--checkpoint-every", "2"];
    let full = fedopt(&[&base[..], &["--out", "a"]].concat(), dir.path());
    assert_eq!(code(&full), 0);
    // A second invocation with --resume finds the final checkpoint and adds nothing.
    let again = fedopt(&[&base[..], &["--out", "a", "--resume"]].concat(), dir.path());
    assert_eq!(code(&again), 0, "{}", stderr(&again));
    assert_eq!(std::fs::read_to_string(dir.path().join("a/metrics.csv")).unwrap().lines().count(), 7);
    // A checkpoint from a different configuration is refused.
    let other = fedopt(&[&base[..], &["--out", "a", "--resume", "--tau", "0.5"]].concat(), dir.path());
    assert_eq!(code(&other), 2, "{}", stderr(&other));
    assert!(!std::fs::read_to_string(dir.path().join("a/config.json")).unwrap().contains("0.5"));
}
