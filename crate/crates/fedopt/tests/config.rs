use fedopt::config::{parse_config, parse_partition, parse_schedule, parse_task, Overrides};
use fedopt::AppError;
use fedopt_core::client::LocalWork;
use fedopt_core::fedloop::{OptimizerName, PartitionSpec, TaskSpec};
use fedopt_core::schedule::Schedule;

fn config_err(text: &str) -> String {
    match parse_config(text) {
        Err(AppError::Config(msg)) => msg,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn unknown_key_is_named() {
    let msg = config_err(r#"{"task": {"kind": "quadratic"}, "optimizer": {"name": "fedadam", "learnig_rate": 0.1}}"#);
    assert!(msg.contains("optimizer.learnig_rate"), "{msg}");
    let msg = config_err(r#"{"task": {"kind": "quadratic"}, "optimizer": {"name": "fedadam"}, "learnig_rate": 0.1}"#);
    assert!(msg.contains("learnig_rate"), "{msg}");
}

#[test]
fn errors_inside_the_task_carry_their_path() {
    let msg = config_err(r#"{"task": {"kind": "quadratic", "dim": -3}, "optimizer": {"name": "fedavg"}}"#);
    assert!(msg.starts_with("task.dim"), "{msg}");
    let msg = config_err(r#"{"task": {"kind": "mlp2", "hiden": 3}, "optimizer": {"name": "fedavg"}}"#);
    assert!(msg.starts_with("task.hiden"), "{msg}");
}

#[test]
fn constraint_violations_name_the_field() {
    let msg = config_err(r#"{"task": {"kind": "quadratic"}, "optimizer": {"name": "fedadam", "tau": -1.0}}"#);
    assert!(msg.contains("tau"), "{msg}");
    let msg = config_err(r#"{"task": {"kind": "quadratic"}, "optimizer": {"name": "fedavg"}, "clients_per_round": 50}"#);
    assert!(msg.contains("clients_per_round"), "{msg}");
}

#[test]
fn minimal_config_gets_defaults() {
    let cfg = parse_config(r#"{"task": {"kind": "sparse_logreg"}, "optimizer": {"name": "fedadam"}}"#).unwrap();
    let r = cfg.resolve().unwrap();
    assert_eq!(r.work, LocalWork::Epochs(1));
    assert_eq!(r.s, 10);
    assert_eq!(r.server.tau, 1e-3);
    assert_eq!((r.server.beta1, r.server.beta2), (0.9, 0.99));
    assert_eq!(r.optimizer, OptimizerName::Fedadam);
}

#[test]
fn flags_override_the_file() {
    let base = parse_config(
        r#"{"task": {"kind": "quadratic", "dim": 7}, "optimizer": {"name": "fedadam", "tau": 0.01}, "rounds": 40, "seed": 3}"#,
    )
    .unwrap();
    let o = Overrides { tau: Some(0.1), rounds: Some(5), task: Some("quadratic".into()), ..Default::default() };
    let cfg = o.apply(Some(base.clone())).unwrap();
    assert_eq!(cfg.optimizer.tau, Some(0.1));
    assert_eq!(cfg.rounds, 5);
    assert_eq!(cfg.seed, 3);
    // Same task kind keeps the file's task body.
    assert!(matches!(&cfg.task, TaskSpec::Quadratic(q) if q.dim == 7));

    let o = Overrides { task: Some("mlp2".into()), optimizer: Some("fedyogi".into()), ..Default::default() };
    let cfg = o.apply(Some(base)).unwrap();
    assert!(matches!(cfg.task, TaskSpec::Mlp2(_)));
    assert_eq!(cfg.optimizer.name, OptimizerName::Fedyogi);
}

#[test]
fn flags_alone_need_task_and_optimizer() {
    let err = Overrides { task: Some("quadratic".into()), ..Default::default() }.apply(None).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let err = Overrides { optimizer: Some("sgd".into()), task: Some("quadratic".into()), ..Default::default() }
        .apply(None)
        .unwrap_err();
    assert!(err.to_string().contains("optimizer"), "{err}");
}

#[test]
fn schedules() {
    assert_eq!(parse_schedule("constant").unwrap(), Schedule::Constant);
    assert_eq!(parse_schedule("expdecay:0.5:10").unwrap(), Schedule::ExpDecay { factor: 0.5, period: 10 });
    assert_eq!(parse_schedule("inv_sqrt").unwrap(), Schedule::InvSqrt { scale: 1.0 });
    assert_eq!(parse_schedule("inv_sqrt:4").unwrap(), Schedule::InvSqrt { scale: 4.0 });
    for bad in ["", "linear", "expdecay:0.5", "expdecay:x:3", "inv_sqrt:1:2"] {
        assert!(parse_schedule(bad).is_err(), "{bad}");
    }
}

#[test]
fn partitions_and_tasks() {
    assert_eq!(parse_partition("lda:0.3").unwrap(), PartitionSpec::Lda { alpha: 0.3 });
    assert_eq!(
        parse_partition("pachinko:0.1:10:5").unwrap(),
        PartitionSpec::Pachinko { alpha: 0.1, beta: 10.0, fine_per_coarse: 5 }
    );
    assert!(parse_partition("lda").is_err());
    assert!(matches!(parse_task("csv:data.csv").unwrap(), TaskSpec::Csv(c) if c.path == "data.csv"));
    assert!(parse_task("resnet").is_err());
}
