//! Properties of the public API that cut across modules.

use std::collections::HashSet;

use fedopt_core::fedloop::{
    build_task, sample_clients, ClientExecutor, ClientUpdate, ExperimentConfig, OptimizerName, OptimizerSpec, Sequential,
    Simulation, TaskSpec,
};
use fedopt_core::partition::{partition_iid, partition_lda};
use fedopt_core::rng::{stream, Purpose};
use fedopt_core::tasks::{Mlp2Spec, QuadraticSpec};
use fedopt_core::Result;
use proptest::prelude::*;

/// Runs the cohort back to front, then restores the requested order.
struct Reversed;

impl ClientExecutor for Reversed {
    fn map(&self, ids: &[usize], job: &(dyn Fn(usize) -> Result<ClientUpdate> + Sync)) -> Vec<Result<ClientUpdate>> {
        let mut out: Vec<_> = ids.iter().rev().map(|&i| job(i)).collect();
        out.reverse();
        out
    }
}

fn config(name: OptimizerName, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(TaskSpec::Mlp2(Mlp2Spec::default()), OptimizerSpec::named(name));
    cfg.rounds = 5;
    cfg.clients_per_round = Some(4);
    cfg.noise_std = 0.1;
    cfg.seed = seed;
    cfg.optimizer.server_lr = Some(0.05);
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cohorts_are_sorted_distinct_and_in_range(m in 1usize..200, frac in 0.0f64..1.0, seed in any::<u64>(), t in 0u64..1000) {
        let s = 1 + ((m - 1) as f64 * frac) as usize;
        let ids = sample_clients(m, s, &mut stream(seed, Purpose::Sampling, t, 0)).unwrap();
        prop_assert_eq!(ids.len(), s);
        prop_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(ids.iter().all(|&i| i < m));
    }

    #[test]
    fn splits_are_disjoint_with_exact_counts(
        m in 1usize..20,
        per in 1usize..15,
        classes in 2usize..8,
        alpha in 0.05f64..10.0,
        seed in any::<u64>(),
    ) {
        let labels: Vec<usize> = (0..m * per * 2).map(|i| i % classes).collect();
        let mut rng = stream(seed, Purpose::Partition, 0, 0);
        for parts in [
            partition_iid(labels.len(), m, per, &mut rng).unwrap(),
            partition_lda(&labels, m, per, alpha, &mut rng).unwrap(),
        ] {
            prop_assert_eq!(parts.len(), m);
            prop_assert!(parts.iter().all(|p| p.len() == per));
            let mut seen = HashSet::new();
            prop_assert!(parts.iter().flatten().all(|&e| e < labels.len() && seen.insert(e)));
        }
    }
}

#[test]
fn execution_order_does_not_change_the_trace() {
    for name in [OptimizerName::Fedadam, OptimizerName::Scaffold, OptimizerName::Fedavgm] {
        let cfg = config(name, 9);
        let task = build_task(&cfg.resolve().unwrap()).unwrap();
        let mut a = Simulation::new(&cfg, task.clone()).unwrap();
        let mut b = Simulation::new(&cfg, task).unwrap();
        a.run(&Sequential).unwrap();
        b.run(&Reversed).unwrap();
        assert_eq!(a.trace(), b.trace(), "{name:?}");
        assert_eq!(a.server().x, b.server().x);
    }
}

#[test]
fn seeds_change_the_run_and_replays_do_not() {
    let cfg = config(OptimizerName::Fedyogi, 1);
    let run = |cfg: &ExperimentConfig| {
        let mut sim = Simulation::from_config(cfg).unwrap();
        sim.run(&Sequential).unwrap();
        sim.into_trace()
    };
    assert_eq!(run(&cfg), run(&cfg));
    assert_ne!(run(&cfg).records, run(&config(OptimizerName::Fedyogi, 2)).records);
}

#[test]
fn quadratic_optimum_is_stationary() {
    let spec = QuadraticSpec { hetero: 2.0, ..Default::default() };
    let cfg = ExperimentConfig::new(TaskSpec::Quadratic(spec), OptimizerSpec::named(OptimizerName::Fedavg));
    let task = build_task(&cfg.resolve().unwrap()).unwrap();
    let x_star = task.minimizer().unwrap();
    assert!(task.global_gradient(&x_star).unwrap().norm_sq() < 1e-20);
    let f_star = task.optimal_value().unwrap();
    assert!((task.global_loss(&x_star).unwrap() - f_star).abs() < 1e-12);
    assert!(task.global_loss(task.initial_point()).unwrap() > f_star);
}
