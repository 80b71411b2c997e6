use super::*;
use crate::client::LocalWork;
use crate::tasks::{linalg::SquareMatrix, Batch, QuadraticSpec, SparseLogregSpec};
use alloc::string::ToString;
use alloc::vec;

fn quad_config(hetero: f64, name: OptimizerName) -> ExperimentConfig {
    let task = TaskSpec::Quadratic(QuadraticSpec { hetero, ..Default::default() });
    ExperimentConfig::new(task, OptimizerSpec::named(name))
}

fn update(delta: Vec<f64>, examples: usize) -> ClientUpdate {
    ClientUpdate {
        client: 0,
        delta: ParamVector::from(delta),
        examples,
        train_loss: 0.0,
        delta_c: None,
        c_i_new: None,
    }
}

#[test]
fn cohort_sampling_edges() {
    let mut r = stream(0, Purpose::Sampling, 0, 0);
    assert_eq!(sample_clients(5, 5, &mut r).unwrap(), vec![0, 1, 2, 3, 4]);
    assert_eq!(sample_clients(1, 1, &mut r).unwrap(), vec![0]);
    assert!(sample_clients(3, 4, &mut r).is_err());
    assert!(sample_clients(3, 0, &mut r).is_err());
}

#[test]
fn cohort_inclusion_frequency_is_s_over_m() {
    let rounds = 100_000u64;
    let mut hits = [0u64; 10];
    for t in 0..rounds {
        let ids = sample_clients(10, 3, &mut stream(42, Purpose::Sampling, t, 0)).unwrap();
        for w in ids.windows(2) {
            assert!(w[0] < w[1]);
        }
        for i in ids {
            hits[i] += 1;
        }
    }
    let p = 0.3;
    let se = (p * (1.0 - p) / rounds as f64).sqrt();
    for h in hits {
        let freq = h as f64 / rounds as f64;
        assert!((freq - p).abs() < 3.0 * se, "frequency {freq}");
    }
}

#[test]
fn aggregation_examples() {
    let u = [update(vec![4.0], 1), update(vec![0.0], 3)];
    assert_eq!(aggregate(&u, Aggregation::ExampleWeighted).unwrap()[0], 1.0);
    assert_eq!(aggregate(&u, Aggregation::Uniform).unwrap()[0], 2.0);
    let eq = [update(vec![0.3, -1.7], 7), update(vec![2.2, 0.1], 7), update(vec![-0.9, 5.0], 7)];
    assert_eq!(aggregate(&eq, Aggregation::ExampleWeighted).unwrap(), aggregate(&eq, Aggregation::Uniform).unwrap());
    let single = [update(vec![1.5, 2.5], 4)];
    assert_eq!(aggregate(&single, Aggregation::Uniform).unwrap().as_slice(), &[1.5, 2.5]);
    assert!(aggregate(&[], Aggregation::Uniform).is_err());
}

#[test]
fn zero_rounds_is_empty_trace() {
    let mut cfg = quad_config(1.0, OptimizerName::Fedadam);
    cfg.rounds = 0;
    let sim = Simulation::from_config(&cfg).unwrap();
    let x0 = sim.task().initial_point().clone();
    assert_eq!(sim.server().x, x0);
    assert!(run_experiment(&cfg).unwrap().records.is_empty());
}

#[test]
fn identical_configs_give_identical_traces() {
    for name in OptimizerName::ALL {
        let mut cfg = quad_config(1.0, name);
        cfg.rounds = 15;
        cfg.noise_std = 0.3;
        cfg.batch_size = Some(6);
        cfg.optimizer.client_lr = Some(0.05);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b, "{name:?}");
        assert_eq!(a.records.len(), 15);
    }
}

/// Independent linear-iteration oracle for identical quadratic clients:
/// one full-batch step per round, server lr 1.
#[test]
fn homogeneous_fedavg_converges_like_the_linear_iteration() {
    let mut cfg = quad_config(0.0, OptimizerName::Fedavg);
    cfg.rounds = 200;
    cfg.optimizer.client_lr = Some(1.0);
    let sim = Simulation::from_config(&cfg).unwrap();
    let model = sim.task().model_quadratic().unwrap();
    let a: &SquareMatrix = model.curvature(0);
    let b = model.center(0).clone();
    let mut x = [0.0; 20];
    let mut ax = vec![0.0; 20];
    for _ in 0..200 {
        let r: Vec<f64> = x.iter().zip(b.iter()).map(|(p, q)| p - q).collect();
        a.mul_vec(&r, &mut ax);
        for j in 0..20 {
            x[j] -= ax[j];
        }
    }
    let r: Vec<f64> = x.iter().zip(b.iter()).map(|(p, q)| p - q).collect();
    a.mul_vec(&r, &mut ax);
    let oracle: f64 = ax.iter().map(|v| v * v).sum();

    let mut sim = sim;
    sim.run(&Sequential).unwrap();
    let final_grad = sim.task().global_gradient(&sim.server().x).unwrap().norm_sq();
    assert!(final_grad < 1e-8, "{final_grad}");
    assert!((final_grad - oracle).abs() <= 1e-6 * oracle.max(1e-30) + 1e-24, "{final_grad} vs {oracle}");
}

#[test]
fn checkpoint_resume_matches_uninterrupted_run() {
    for name in [OptimizerName::Fedyogi, OptimizerName::Scaffold, OptimizerName::Fedavgm] {
        let mut cfg = quad_config(1.0, name);
        cfg.rounds = 12;
        cfg.noise_std = 0.2;
        cfg.batch_size = Some(5);
        cfg.optimizer.client_lr = Some(0.05);
        let full = run_experiment(&cfg).unwrap();

        let mut sim = Simulation::from_config(&cfg).unwrap();
        for _ in 0..5 {
            sim.step(&Sequential).unwrap();
        }
        let ck = sim.checkpoint();
        let task = sim.task().clone();
        let mut resumed = Simulation::resume(&cfg, task.clone(), ck.clone()).unwrap();
        resumed.run(&Sequential).unwrap();
        assert_eq!(resumed.trace(), &full, "{name:?}");

        let mut other = cfg.clone();
        other.seed = 99;
        assert!(Simulation::resume(&other, build_task(&other.resolve().unwrap()).unwrap(), ck).is_err());
    }
}

#[test]
fn scaffold_equals_fedavg_without_repeats() {
    // One full-cohort round: every client is sampled exactly once.
    let mut spec = QuadraticSpec { clients: 8, batch_size: 5, ..Default::default() };
    spec.hetero = 2.0;
    let task = TaskSpec::Quadratic(spec);
    let mut avg = ExperimentConfig::new(task.clone(), OptimizerSpec::named(OptimizerName::Fedavg));
    avg.rounds = 1;
    avg.clients_per_round = Some(8);
    avg.noise_std = 0.1;
    avg.optimizer.client_lr = Some(0.05);
    avg.optimizer.server_lr = Some(0.7);
    let mut sc = avg.clone();
    sc.optimizer.name = OptimizerName::Scaffold;
    let a = Simulation::from_config(&avg).map(|mut s| {
        s.run(&Sequential).unwrap();
        s
    }).unwrap();
    let b = Simulation::from_config(&sc).map(|mut s| {
        s.run(&Sequential).unwrap();
        s
    }).unwrap();
    assert_eq!(a.server().x, b.server().x);
    assert_eq!(a.trace().records, b.trace().records);
    assert!(b.variates().unwrap().c.norm() > 0.0);
}

#[test]
fn cohort_variance_shrinks_with_participation() {
    let spec = QuadraticSpec { clients: 10, hetero: 1.0, ..Default::default() };
    let base = ExperimentConfig::new(TaskSpec::Quadratic(spec), OptimizerSpec::named(OptimizerName::Fedavg));
    let task = build_task(&base.resolve().unwrap()).unwrap().with_uniform_noise(0.5);
    let variance = |s: usize| {
        let mut deltas = Vec::new();
        for seed in 0..500 {
            let mut cfg = base.clone();
            cfg.seed = seed;
            cfg.clients_per_round = Some(s);
            cfg.rounds = 1;
            cfg.optimizer.client_lr = Some(0.05);
            let mut sim = Simulation::new(&cfg, task.clone()).unwrap();
            sim.step(&Sequential).unwrap();
            let mut d = sim.server().x.clone();
            d.axpy(-1.0, task.initial_point()).unwrap();
            deltas.push(d);
        }
        let n = deltas.len() as f64;
        let mut mean = ParamVector::zeros(task.dim());
        for d in &deltas {
            mean.axpy(1.0 / n, d).unwrap();
        }
        deltas.iter().map(|d| d.dist_sq(&mean).unwrap()).sum::<f64>() / (n - 1.0)
    };
    let full = variance(10);
    let half = variance(5);
    assert!(full <= half, "{full} vs {half}");
}

#[test]
fn step_mode_uses_uniform_weights_and_k_steps() {
    let mut cfg = quad_config(1.0, OptimizerName::Fedavg);
    cfg.local_steps = Some(3);
    let r = cfg.resolve().unwrap();
    assert_eq!(r.work, LocalWork::Steps(3));
    assert_eq!(r.aggregation, Aggregation::Uniform);
    cfg.local_steps = None;
    assert_eq!(cfg.resolve().unwrap().aggregation, Aggregation::ExampleWeighted);
}

#[test]
fn defaults_follow_the_experimental_setup() {
    let cfg = ExperimentConfig::new(
        TaskSpec::SparseLogreg(SparseLogregSpec::default()),
        OptimizerSpec::named(OptimizerName::Fedadam),
    );
    let r = cfg.resolve().unwrap();
    assert_eq!(r.work, LocalWork::Epochs(1));
    assert_eq!(r.s, 10);
    assert_eq!(r.server.tau, 1e-3);
    assert_eq!((r.server.beta1, r.server.beta2), (0.9, 0.99));
    let ada = ExperimentConfig::new(cfg.task.clone(), OptimizerSpec::named(OptimizerName::Fedadagrad));
    let r = ada.resolve().unwrap();
    assert_eq!((r.server.beta1, r.server.beta2), (0.0, 0.0));
}

#[test]
fn validation_reports_every_field_path() {
    let mut cfg = quad_config(1.0, OptimizerName::Fedyogi);
    cfg.clients_per_round = Some(50);
    cfg.epochs = Some(0);
    cfg.optimizer.tau = Some(0.0);
    cfg.optimizer.beta2 = Some(1.5);
    let Err(Error::Config(issues)) = cfg.resolve() else { panic!("expected config error") };
    let paths: Vec<&str> = issues.iter().map(|i| i.path.as_str()).collect();
    assert_eq!(paths, vec!["clients_per_round", "epochs", "optimizer.tau", "optimizer.beta2"]);
    assert!(Error::Config(issues).to_string().contains("optimizer.tau"));
}

#[test]
fn repartitioned_logreg_keeps_sizes() {
    let spec = SparseLogregSpec { clients: 6, vocab: 30, classes: 3, examples_per_client: 8, ..Default::default() };
    let mut cfg = ExperimentConfig::new(TaskSpec::SparseLogreg(spec), OptimizerSpec::named(OptimizerName::Fedavg));
    cfg.partition = PartitionSpec::Lda { alpha: 0.1 };
    let task = build_task(&cfg.resolve().unwrap()).unwrap();
    assert_eq!(task.num_clients(), 6);
    assert!(task.clients().iter().all(|c| c.len() == 8));
    let x = ParamVector::zeros(task.dim());
    assert!(task.loss(5, &x, Batch::Full).unwrap() > 0.0);
}
