use fedopt::checkpoint::{load_checkpoint, save_checkpoint};
use fedopt::dataset::{read_dataset, write_dataset};
use fedopt::manifest::PartitionManifest;
use fedopt::metrics::{read_metrics, write_metrics, HEADER};
use fedopt::run::{run, RunOptions, CHECKPOINT_FILE, METRICS_FILE};
use fedopt::task::build_task;
use fedopt_core::fedloop::{
    ExperimentConfig, OptimizerName, OptimizerSpec, PartitionSpec, RoundRecord, Sequential, Simulation, TaskSpec,
};
use fedopt_core::tasks::{QuadraticSpec, SparseLogregSpec};
use proptest::prelude::*;

fn quadratic(name: OptimizerName, rounds: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(TaskSpec::Quadratic(QuadraticSpec { batch_size: 5, ..Default::default() }), OptimizerSpec::named(name));
    cfg.rounds = rounds;
    cfg.clients_per_round = Some(4);
    cfg.noise_std = 0.1;
    cfg.optimizer.client_lr = Some(0.05);
    cfg.optimizer.server_lr = Some(0.1);
    cfg
}

fn metrics_text(records: &[RoundRecord]) -> String {
    let mut buf = Vec::new();
    write_metrics(records, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn empty_trace_is_header_only() {
    assert_eq!(metrics_text(&[]), format!("{}\n", HEADER.join(",")));
}

#[test]
fn one_line_per_round() {
    let cfg = quadratic(OptimizerName::Fedadam, 3);
    let mut sim = Simulation::new(&cfg, build_task(&cfg, None).unwrap()).unwrap();
    sim.run(&Sequential).unwrap();
    let text = metrics_text(&sim.trace().records);
    assert_eq!(text.lines().count(), 4);
    assert_eq!(read_metrics(text.as_bytes()).unwrap(), sim.trace().records);
}

#[test]
fn bad_header_is_rejected() {
    assert!(read_metrics("round,loss\n0,1\n".as_bytes()).is_err());
}

fn record() -> impl Strategy<Value = RoundRecord> {
    (
        0u64..1000,
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        proptest::option::of(0.0f64..1e300),
        proptest::option::of(any::<f64>().prop_filter("finite", |v| v.is_finite())),
        proptest::collection::vec(0usize..500, 0..6),
        0u64..50,
        0u64..10_000,
    )
        .prop_map(|(round, train_loss, grad_norm_sq, eval_metric, clients, floor_events, wall_ms)| RoundRecord {
            round,
            train_loss,
            grad_norm_sq,
            eval_metric,
            clients,
            floor_events,
            wall_ms,
        })
}

proptest! {
    #[test]
    fn metrics_round_trip_bit_exact(records in proptest::collection::vec(record(), 0..8)) {
        let text = metrics_text(&records);
        let back = read_metrics(text.as_bytes()).unwrap();
        prop_assert_eq!(back.len(), records.len());
        for (a, b) in back.iter().zip(&records) {
            prop_assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
            prop_assert_eq!(a.grad_norm_sq.map(f64::to_bits), b.grad_norm_sq.map(f64::to_bits));
            prop_assert_eq!(a.eval_metric.map(f64::to_bits), b.eval_metric.map(f64::to_bits));
            prop_assert_eq!(&a.clients, &b.clients);
            prop_assert_eq!((a.round, a.floor_events, a.wall_ms), (b.round, b.floor_events, b.wall_ms));
        }
    }
}

#[test]
fn manifest_round_trip_and_reuse() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(
        TaskSpec::SparseLogreg(SparseLogregSpec { clients: 8, vocab: 100, ..Default::default() }),
        OptimizerSpec::named(OptimizerName::Fedadagrad),
    );
    cfg.partition = PartitionSpec::Lda { alpha: 0.5 };
    let task = build_task(&cfg, None).unwrap();
    let m = PartitionManifest::from_task(cfg.seed, cfg.partition, &task);
    let path = dir.path().join("split.json");
    m.save(&path).unwrap();
    let back = PartitionManifest::load(&path).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.assignment().unwrap().len(), 8);

    // Importing the manifest under another seed reproduces the same split.
    let mut other = cfg.clone();
    other.partition = PartitionSpec::Iid;
    let task2 = build_task(&other, Some(&back)).unwrap();
    let m2 = PartitionManifest::from_task(cfg.seed, cfg.partition, &task2);
    assert_eq!(m2.clients, m.clients);
}

#[test]
fn manifest_validation() {
    let dup = PartitionManifest::from_assignment(0, PartitionSpec::Iid, &[vec![0, 1], vec![1, 2]]);
    assert!(dup.assignment().unwrap_err().to_string().contains("assigned twice"));
    let empty = PartitionManifest::from_assignment(0, PartitionSpec::Iid, &[vec![0], vec![]]);
    assert!(empty.assignment().is_err());
    let mut gap = PartitionManifest::from_assignment(0, PartitionSpec::Iid, &[vec![0], vec![1]]);
    let v = gap.clients.remove(&0).unwrap();
    gap.clients.insert(5, v);
    assert!(gap.assignment().is_err());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    std::fs::write(&path, r#"{"seed": 0, "partition": {"kind": "iid"}, "clients": {}, "extra": 1}"#).unwrap();
    assert!(PartitionManifest::load(&path).is_err());
}

#[test]
fn resume_matches_uninterrupted_run() {
    for name in [OptimizerName::Fedyogi, OptimizerName::Scaffold, OptimizerName::Fedavgm] {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quadratic(name, 8);
        cfg.out = Some(dir.path().join("full").display().to_string());
        run(&cfg, &RunOptions::default(), &Sequential).unwrap();
        let full = std::fs::read(dir.path().join("full").join(METRICS_FILE)).unwrap();

        // Stop after 3 rounds, checkpoint, then resume through the files.
        let part = dir.path().join("part");
        std::fs::create_dir_all(&part).unwrap();
        let mut sim = Simulation::new(&cfg, build_task(&cfg, None).unwrap()).unwrap();
        for _ in 0..3 {
            sim.step(&Sequential).unwrap();
        }
        save_checkpoint(&part.join(CHECKPOINT_FILE), &sim.checkpoint()).unwrap();
        assert_eq!(load_checkpoint(&part.join(CHECKPOINT_FILE)).unwrap(), sim.checkpoint());
        cfg.out = Some(part.display().to_string());
        run(&cfg, &RunOptions { resume: true, ..Default::default() }, &Sequential).unwrap();
        assert_eq!(std::fs::read(part.join(METRICS_FILE)).unwrap(), full, "{name:?}");
    }
}

#[test]
fn resume_rejects_a_different_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quadratic(OptimizerName::Fedadam, 4);
    cfg.out = Some(dir.path().display().to_string());
    cfg.checkpoint_every = Some(2);
    run(&cfg, &RunOptions::default(), &Sequential).unwrap();
    cfg.optimizer.tau = Some(0.5);
    assert!(run(&cfg, &RunOptions { resume: true, ..Default::default() }, &Sequential).is_err());
}

#[test]
fn dataset_csv() {
    let text = "label,f0,f1,f2\n0,1.5,0,0\n2,0,0,-1\n1,0.25,2,0\n";
    let pool = read_dataset(text.as_bytes(), "inline").unwrap();
    assert_eq!((pool.vocab, pool.classes), (3, 3));
    assert_eq!(pool.examples[0].features, vec![(0, 1.5)]);
    assert_eq!(pool.labels(), vec![0, 2, 1]);
    let mut buf = Vec::new();
    write_dataset(&pool, &mut buf).unwrap();
    assert_eq!(read_dataset(buf.as_slice(), "again").unwrap(), pool);

    for bad in ["lbl,f0\n0,1\n", "label,f1\n0,1\n", "label,f0\n0,x\n", "label,f0\n0,1\n0,2\n", "label,f0\n"] {
        assert!(read_dataset(bad.as_bytes(), "bad").is_err(), "{bad:?}");
    }
}

#[test]
fn csv_task_trains() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pool.csv");
    let mut rows = String::from("label,f0,f1\n");
    for k in 0..40 {
        let label = k % 2;
        let x = if label == 1 { 1.0 } else { -1.0 };
        rows.push_str(&format!("{label},{x},{}\n", 0.1 * (k % 5) as f64));
    }
    std::fs::write(&path, rows).unwrap();
    let mut cfg = fedopt::config::Overrides {
        task: Some(format!("csv:{}", path.display())),
        optimizer: Some("fedadam".into()),
        rounds: Some(20),
        clients_per_round: Some(4),
        server_lr: Some(0.1),
        ..Default::default()
    }
    .apply(None)
    .unwrap();
    cfg.eval_every = 20;
    let trace = fedopt::run::simulate(&cfg, build_task(&cfg, None).unwrap(), &Sequential, false).unwrap();
    assert_eq!(trace.records.len(), 20);
    assert!(trace.records[0].eval_metric.is_some());
}
