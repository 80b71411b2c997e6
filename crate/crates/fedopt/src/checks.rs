//! Invariant and trend checks. `fedopt check` runs them at reduced size;
//! the acceptance target runs them at full size.

use std::collections::HashSet;
use std::path::Path;

use fedopt_core::fedloop::{
    sample_clients, ExperimentConfig, OptimizerName, OptimizerSpec, RoundRecord, Sequential, Simulation, TaskSpec,
    Trace,
};
use fedopt_core::partition::{partition_pachinko, unique_labels_per_client, LabelDag};
use fedopt_core::rng::{standard_normal, stream, Purpose};
use fedopt_core::server::{Flavor, ServerParams, ServerState};
use fedopt_core::tasks::{
    probe_box, Batch, LinearAeSpec, Mlp2Spec, QuadraticSpec, SparseLogregSpec, Task,
};
use fedopt_core::theory::BoundInputs;
use fedopt_core::ParamVector;

use crate::bounds::{bound_report, drift_report, estimate, BoundsOptions};
use crate::error::AppResult;
use crate::exec::Parallel;
use crate::oracle::{centralized_adaptive, max_abs_diff, max_ulp_diff, simplified_fedavg, Centralized};
use crate::run::{run, simulate, RunOptions, METRICS_FILE};
use crate::sweep::{grid_sweep, log_grid, Grid, SweepOptions};
use crate::task::build_task;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Outcome {
    fn new(name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name, passed, detail: detail.into() }
    }
}

fn config(task: TaskSpec, name: OptimizerName) -> ExperimentConfig {
    ExperimentConfig::new(task, OptimizerSpec::named(name))
}

/// One small instance of every task kind, with a client lr that trains it.
pub fn task_kinds() -> Vec<(&'static str, TaskSpec, f64)> {
    vec![
        ("quadratic", TaskSpec::Quadratic(QuadraticSpec { batch_size: 5, ..Default::default() }), 0.05),
        ("sparse_logreg", TaskSpec::SparseLogreg(SparseLogregSpec::default()), 0.5),
        ("mlp2", TaskSpec::Mlp2(Mlp2Spec::default()), 0.1),
        ("linear_ae", TaskSpec::LinearAe(LinearAeSpec::default()), 0.05),
    ]
}

/// `x_0, …, x_T` of a FedOpt run.
pub fn server_trajectory(cfg: &ExperimentConfig, task: Task) -> AppResult<Vec<Vec<f64>>> {
    let mut sim = Simulation::new(cfg, task)?;
    let mut traj = vec![sim.server().x.to_vec()];
    while !sim.is_done() {
        sim.step(&Sequential)?;
        traj.push(sim.server().x.to_vec());
    }
    Ok(traj)
}

/// FedOpt with SGD on both sides and `η = 1` against the reference
/// simplified FedAvg, compared bit for bit.
pub fn fedavg_equivalence(rounds: u64) -> AppResult<Outcome> {
    let mut passed = true;
    let mut notes = Vec::new();
    for (kind, spec, lr) in task_kinds() {
        let mut cfg = config(spec, OptimizerName::Fedavg);
        cfg.rounds = rounds;
        cfg.local_steps = Some(3);
        cfg.clients_per_round = Some(4);
        cfg.noise_std = 0.05;
        cfg.seed = 11;
        cfg.eval_every = 0;
        cfg.optimizer.client_lr = Some(lr);
        cfg.optimizer.server_lr = Some(1.0);
        let task = build_task(&cfg, None)?;
        let ours = server_trajectory(&cfg, task.clone())?;
        let reference = simplified_fedavg(&cfg, &task)?;
        let ulps = max_ulp_diff(&ours, &reference);
        passed &= ulps == 0;
        notes.push(format!("{kind}: max|diff| {:.3e}, {ulps} ulp", max_abs_diff(&ours, &reference)));
    }
    Ok(Outcome::new("fedavg equivalence (bit-exact)", passed, notes.join("; ")))
}

/// One client, one full-batch step per round: the adaptive server flavors
/// against centralized Adagrad, Adam and Yogi on `η_l`-scaled gradients.
pub fn centralized_reduction(steps: u64) -> AppResult<Outcome> {
    let spec = QuadraticSpec { clients: 1, examples_per_client: 8, batch_size: 8, ..Default::default() };
    let mut worst = 0.0f64;
    let mut notes = Vec::new();
    for name in [OptimizerName::Fedadagrad, OptimizerName::Fedadam, OptimizerName::Fedyogi] {
        let mut cfg = config(TaskSpec::Quadratic(spec.clone()), name);
        cfg.rounds = steps;
        cfg.local_steps = Some(1);
        cfg.eval_every = 0;
        cfg.optimizer.client_lr = Some(0.1);
        cfg.optimizer.server_lr = Some(0.05);
        cfg.optimizer.tau = Some(1e-2);
        let task = build_task(&cfg, None)?;
        let r = cfg.resolve()?;
        let ours = server_trajectory(&cfg, task.clone())?;
        let opt = Centralized {
            flavor: r.server.flavor,
            lr: r.server.eta,
            tau: r.server.tau,
            beta1: r.server.beta1,
            beta2: r.server.beta2,
        };
        let (reference, floors) = centralized_adaptive(opt, task.initial_point(), r.client_lr, steps as usize, |x| {
            task.batch_gradient(0, &ParamVector::from(x), Batch::Full).expect("gradient").into_inner()
        });
        let diff = max_abs_diff(&ours, &reference);
        worst = worst.max(diff);
        notes.push(format!("{}: {diff:.3e} ({floors} floors)", name.as_str()));
    }
    Ok(Outcome::new("centralized reduction (< 1e-12)", worst < 1e-12, notes.join("; ")))
}

/// `(cΔ, c²v₋₁, cτ)` against `(Δ, v₋₁, τ)` for c ∈ {0.1, 3, 10}.
pub fn scale_invariance(steps: usize) -> AppResult<Outcome> {
    let d = 16;
    let mut rng = stream(5, Purpose::Probe, 0, 0);
    let deltas: Vec<ParamVector> = (0..steps)
        .map(|t| {
            let scale = 0.5f64.powi((t % 7) as i32);
            ParamVector::new((0..d).map(|_| scale * standard_normal(&mut rng)).collect())
        })
        .collect();
    let x0 = ParamVector::new((0..d).map(|_| standard_normal(&mut rng)).collect());
    let mut worst = 0.0f64;
    let mut notes = Vec::new();
    for (flavor, b1, b2) in [(Flavor::Adagrad, 0.0, 0.0), (Flavor::Adam, 0.9, 0.99), (Flavor::Yogi, 0.9, 0.99)] {
        let tau = 1e-3;
        let run = |c: f64| -> AppResult<Vec<Vec<f64>>> {
            let params = ServerParams { flavor, eta: 0.1, tau: c * tau, beta1: b1, beta2: b2 };
            let mut s = ServerState::with_initial_accumulator(x0.clone(), params, c * c * tau * tau)?;
            let mut traj = vec![s.x.to_vec()];
            for dlt in &deltas {
                s.update(&dlt.scaled(c))?;
                traj.push(s.x.to_vec());
            }
            Ok(traj)
        };
        let base = run(1.0)?;
        for c in [0.1, 3.0, 10.0] {
            let diff = max_abs_diff(&base, &run(c)?);
            worst = worst.max(diff);
            notes.push(format!("{flavor:?} c={c}: {diff:.2e}"));
        }
    }
    Ok(Outcome::new("scale invariance (< 1e-12)", worst < 1e-12, notes.join("; ")))
}

/// Drift check on a 20-dimensional, 10-client quadratic ensemble with
/// `K = 10` and `η_l = 1/(16LK)`.
pub fn drift_check(seeds: u64) -> AppResult<Outcome> {
    let spec = QuadraticSpec { clients: 10, dim: 20, hetero: 1.0, batch_size: 5, ..Default::default() };
    let mut cfg = config(TaskSpec::Quadratic(spec), OptimizerName::Fedavg);
    cfg.noise_std = 0.5;
    let task = build_task(&cfg, None)?;
    let est = estimate(&task, &BoundsOptions::default(), cfg.seed)?;
    let k = 10usize;
    let eta_l = 1.0 / (16.0 * est.smoothness * k as f64);
    let inputs = BoundInputs {
        smoothness: est.smoothness,
        grad_bound: est.grad_bound,
        sigma_l_sq: task.injected_noise_variance(),
        sigma_g_sq: est.sigma_g_sq,
        eta_l,
        eta: 1.0,
        tau: 1.0,
        beta2: 0.0,
        k: k as f64,
        t: 1.0,
        m: 10.0,
        d: 20.0,
        f0_minus_fstar: 0.0,
    };
    let g2 = task.global_gradient(task.initial_point())?.norm_sq();
    let rep = drift_report(&task, &inputs, g2, k, seeds, 0)?;
    let worst = rep.empirical.iter().cloned().fold(0.0, f64::max);
    Ok(Outcome::new(
        "drift bound (proof constants)",
        rep.satisfied,
        format!(
            "max_k drift {worst:.4e} <= bound {:.4e}, margin {:.4e}; stated-constant bound {:.4e} {}",
            rep.bound,
            rep.margin,
            rep.bound_as_stated,
            if rep.satisfied_as_stated { "also holds" } else { "is violated" }
        ),
    ))
}

/// Corollary hyperparameters on a quadratic ensemble, FedAdagrad and FedAdam
/// (β₁ = 0 as in the analysis), compared against `slack ×` the bound.
pub fn convergence_bounds(seeds: u64, rounds: u64, slack: f64, pool: &Parallel) -> AppResult<Outcome> {
    let spec = QuadraticSpec { clients: 10, dim: 20, hetero: 1.0, batch_size: 5, ..Default::default() };
    let mut passed = true;
    let mut notes = Vec::new();
    for name in [OptimizerName::Fedadagrad, OptimizerName::Fedadam] {
        let mut cfg = config(TaskSpec::Quadratic(spec.clone()), name);
        cfg.rounds = rounds;
        cfg.local_steps = Some(5);
        cfg.clients_per_round = Some(10);
        cfg.noise_std = 0.5;
        cfg.optimizer.beta1 = Some(0.0);
        let task = build_task(&cfg, None)?;
        let x_star = task.minimizer().expect("quadratic minimizer");
        let radius = x_star.dist_sq(task.initial_point())?.sqrt().max(1.0);
        let opts = BoundsOptions { corollary: true, seeds, slack, probe_radius: radius, probes: 16, ..Default::default() };
        let rep = pool.install(|| bound_report(&cfg, &opts, pool))?;
        let cmp = rep.comparison.expect("seeded comparison");
        passed &= cmp.satisfied;
        notes.push(format!(
            "{}: min|grad|^2 {:.4e} (se {:.1e}) vs {slack}x rhs {:.4e}, C* = {:.3e}",
            name.as_str(),
            cmp.min_grad_sq,
            cmp.std_err,
            cmp.bound,
            cmp.empirical_constant
        ));
    }
    Ok(Outcome::new("convergence bounds (corollary hyperparameters)", passed, notes.join("; ")))
}

/// Sampled cohorts over `rounds` rounds, flattened.
fn sampled_ids(m: usize, s: usize, rounds: u64, seed: u64) -> AppResult<Vec<usize>> {
    let mut all = Vec::new();
    for t in 0..rounds {
        all.extend(sample_clients(m, s, &mut stream(seed, Purpose::Sampling, t, 0))?);
    }
    Ok(all)
}

/// SCAFFOLD with no client sampled twice reproduces FedAvg exactly.
pub fn scaffold_recovery(rounds: u64) -> AppResult<Outcome> {
    let (s, seed) = (5usize, 3u64);
    let mut m = 8 * s * rounds as usize;
    loop {
        let ids = sampled_ids(m, s, rounds, seed)?;
        if ids.iter().collect::<HashSet<_>>().len() == ids.len() {
            break;
        }
        m *= 2;
    }
    let spec = QuadraticSpec { clients: m, batch_size: 5, hetero: 1.0, ..Default::default() };
    let mut avg = config(TaskSpec::Quadratic(spec), OptimizerName::Fedavg);
    avg.rounds = rounds;
    avg.clients_per_round = Some(s);
    avg.noise_std = 0.2;
    avg.seed = seed;
    avg.optimizer.client_lr = Some(0.05);
    let mut sc = avg.clone();
    sc.optimizer.name = OptimizerName::Scaffold;
    let task = build_task(&avg, None)?;
    let run_one = |cfg: &ExperimentConfig| -> AppResult<(Trace, ParamVector)> {
        let mut sim = Simulation::new(cfg, task.clone())?;
        sim.run(&Sequential)?;
        let x = sim.server().x.clone();
        Ok((sim.into_trace(), x))
    };
    let (ta, xa) = run_one(&avg)?;
    let (tb, xb) = run_one(&sc)?;
    let same = ta.records == tb.records && xa == xb;
    Ok(Outcome::new(
        "scaffold recovers fedavg",
        same,
        format!("m = {m}, s = {s}, T = {rounds}, traces {}", if same { "identical" } else { "differ" }),
    ))
}

/// Pachinko split of a 20 × 5 × `per_fine` pool.
pub fn pachinko_partition(per_fine: usize, m: usize, n: usize) -> AppResult<Outcome> {
    let mut labels = Vec::new();
    for c in 0..20 {
        for f in 0..5 {
            labels.extend(std::iter::repeat_n((c, c * 5 + f), per_fine));
        }
    }
    let dag = LabelDag::from_labels(&labels)?;
    let parts = partition_pachinko(&dag, m, n, 0.1, 10.0, &mut stream(0, Purpose::Partition, 0, 0))?;
    let exact = parts.len() == m && parts.iter().all(|p| p.len() == n);
    let mut seen = HashSet::new();
    let disjoint = parts.iter().flatten().all(|&e| e < labels.len() && seen.insert(e));
    let mut u = unique_labels_per_client(&parts, |e| labels[e].1);
    u.sort_unstable();
    let q = |f: f64| u[((u.len() - 1) as f64 * f).round() as usize];
    let median = q(0.5);
    let in_band = u.iter().filter(|&&k| (20..=30).contains(&k)).count() as f64 / u.len() as f64;
    Ok(Outcome::new(
        "pachinko partition",
        exact && disjoint && (15..=35).contains(&median),
        format!(
            "disjoint {disjoint}, exact counts {exact}; unique fine labels min {} q1 {} median {median} q3 {} max {}; {:.0}% of clients in [20, 30]",
            u[0],
            q(0.25),
            q(0.75),
            u[u.len() - 1],
            100.0 * in_band
        ),
    ))
}

/// The same runs at several worker counts must write identical metric files.
pub fn determinism(workers: &[usize], rounds: u64, scratch: &Path) -> AppResult<Outcome> {
    let mut yogi = config(TaskSpec::Mlp2(Mlp2Spec::default()), OptimizerName::Fedyogi);
    yogi.clients_per_round = Some(5);
    yogi.noise_std = 0.1;
    yogi.optimizer.client_lr = Some(0.05);
    yogi.optimizer.server_lr = Some(0.03);
    let mut sc = config(TaskSpec::SparseLogreg(SparseLogregSpec { clients: 20, vocab: 300, ..Default::default() }), OptimizerName::Scaffold);
    sc.partition = fedopt_core::fedloop::PartitionSpec::Lda { alpha: 0.3 };
    sc.optimizer.client_lr = Some(0.3);
    let mut passed = true;
    let mut notes = Vec::new();
    for (label, mut cfg) in [("mlp2/fedyogi", yogi), ("sparse_logreg/scaffold", sc)] {
        cfg.rounds = rounds;
        let mut files: Vec<Vec<u8>> = Vec::new();
        for &w in workers {
            let dir = scratch.join(format!("{}-w{w}", label.replace('/', "-")));
            cfg.out = Some(dir.display().to_string());
            let pool = Parallel::new(w)?;
            run(&cfg, &RunOptions::default(), &pool)?;
            let path = dir.join(METRICS_FILE);
            files.push(std::fs::read(&path).map_err(|e| crate::error::AppError::io(&path, e))?);
        }
        let same = files.windows(2).all(|p| p[0] == p[1]);
        passed &= same;
        notes.push(format!("{label}: {} bytes, {}", files[0].len(), if same { "identical" } else { "DIFFERENT" }));
    }
    Ok(Outcome::new("determinism across worker counts", passed, format!("workers {workers:?}; {}", notes.join("; "))))
}

fn central_difference(task: &Task, client: usize, x: &ParamVector, dir: &ParamVector, h: f64) -> AppResult<f64> {
    let mut xp = x.clone();
    xp.axpy(h, dir)?;
    let mut xm = x.clone();
    xm.axpy(-h, dir)?;
    Ok((task.loss(client, &xp, Batch::Full)? - task.loss(client, &xm, Batch::Full)?) / (2.0 * h))
}

/// `‖g_fd − g‖ / ‖g‖` with the full finite-difference gradient for small
/// `d`, and the same ratio over three random unit directions otherwise.
fn fd_rel_err<R: rand::Rng>(task: &Task, client: usize, x: &ParamVector, h: f64, rng: &mut R) -> AppResult<f64> {
    let g = task.batch_gradient(client, x, Batch::Full)?;
    let d = g.len();
    let (fd, an): (Vec<f64>, Vec<f64>) = if d <= 200 {
        let mut fd = Vec::with_capacity(d);
        for j in 0..d {
            let mut e = ParamVector::zeros(d);
            e[j] = 1.0;
            fd.push(central_difference(task, client, x, &e, h)?);
        }
        (fd, g.into_inner())
    } else {
        let mut pairs = (Vec::new(), Vec::new());
        for _ in 0..3 {
            let mut u = ParamVector::new((0..d).map(|_| standard_normal(rng)).collect());
            u.scale(1.0 / u.norm());
            pairs.0.push(central_difference(task, client, x, &u, h)?);
            pairs.1.push(g.dot(&u)?);
        }
        pairs
    };
    let err = fd.iter().zip(&an).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let scale = an.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(err / scale.max(1e-12))
}

/// Central differences (`h = 1e-6`) at `points` probe points per task kind.
pub fn gradient_check(points: usize) -> AppResult<Outcome> {
    let h = 1e-6;
    let mut worst_all = 0.0f64;
    let mut notes = Vec::new();
    for (kind, spec, _) in task_kinds() {
        let task = build_task(&config(spec, OptimizerName::Fedavg), None)?;
        let mut rng = stream(17, Purpose::Probe, 0, 0);
        let probes = probe_box(task.initial_point(), 1.0, points, &mut rng);
        let mut worst = 0.0f64;
        for (p, x) in probes.iter().enumerate() {
            worst = worst.max(fd_rel_err(&task, p % task.num_clients(), x, h, &mut rng)?);
        }
        worst_all = worst_all.max(worst);
        notes.push(format!("{kind}: {worst:.2e}"));
    }
    Ok(Outcome::new("gradient finite differences (< 1e-5)", worst_all < 1e-5, notes.join("; ")))
}

/// First round after which the global loss is at most `target`, or `None`
/// within `max_rounds`.
pub fn rounds_to_threshold(cfg: &ExperimentConfig, task: &Task, target: f64, max_rounds: u64) -> AppResult<Option<u64>> {
    let mut cfg = cfg.clone();
    cfg.rounds = max_rounds;
    cfg.eval_every = 0;
    let mut sim = Simulation::new(&cfg, task.clone())?;
    while !sim.is_done() {
        sim.step(&Sequential)?;
        if sim.task().global_loss(&sim.server().x)? <= target {
            return Ok(Some(sim.round()));
        }
    }
    Ok(None)
}

/// Median with unreached runs counted as infinitely slow.
pub fn median_rounds(runs: &[Option<u64>]) -> f64 {
    let mut v: Vec<f64> = runs.iter().map(|r| r.map_or(f64::INFINITY, |r| r as f64)).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn fmt_rounds(r: f64) -> String {
    if r.is_finite() {
        format!("{r}")
    } else {
        "never".into()
    }
}

/// Tune `(η_l, η, τ)` on `task` by the sweep rule and return the winning config.
fn tuned(base: &ExperimentConfig, task: &Task, grid: &Grid, pool: &Parallel) -> AppResult<(ExperimentConfig, String)> {
    let runner = |c: &ExperimentConfig| {
        let mut c = c.clone();
        c.eval_every = 0;
        simulate(&c, task.clone(), &Sequential, false)
    };
    let r = grid_sweep(base, grid, SweepOptions::default(), pool, &runner)?;
    let best = r
        .best_cell()
        .ok_or_else(|| crate::error::AppError::config(format!("sweep of {} found no usable cell", base.optimizer.name.as_str())))?;
    let mut cfg = base.clone();
    cfg.optimizer.client_lr = Some(best.eta_l);
    cfg.optimizer.server_lr = Some(best.eta);
    cfg.optimizer.tau = Some(best.tau);
    let note = format!("{} eta_l {:.3e} eta {:.3e} tau {:.0e}", base.optimizer.name.as_str(), best.eta_l, best.eta, best.tau);
    Ok((cfg, note))
}

/// Grids for the trend checks. `small` trims them for `fedopt check`.
pub fn trend_grid(small: bool) -> Grid {
    if small {
        Grid { eta_l: log_grid(-1.5, 0.5, 0.5), eta: log_grid(-1.0, 1.0, 0.5), tau: vec![1e-3, 1e-2] }
    } else {
        Grid { eta_l: log_grid(-2.0, 0.5, 0.5), eta: log_grid(-2.0, 1.0, 0.5), tau: log_grid(-4.0, -1.0, 1.0) }
    }
}

/// Sparse logistic regression: FedAvg and FedAdagrad are tuned over 500
/// rounds; the threshold is tuned FedAvg's global loss after round 500 and
/// FedAdagrad must reach it in at most `0.6×` FedAvg's median rounds.
pub fn sparse_trend(seeds: u64, grid: &Grid, pool: &Parallel) -> AppResult<Outcome> {
    let rounds = 500;
    let spec = SparseLogregSpec { vocab: 2000, zipf_exponent: 1.2, clients: 100, ..Default::default() };
    let mut base = config(TaskSpec::SparseLogreg(spec), OptimizerName::Fedavg);
    base.rounds = rounds;
    base.clients_per_round = Some(10);
    base.epochs = Some(1);
    let task = build_task(&base, None)?;
    let (avg, avg_note) = tuned(&base, &task, grid, pool)?;
    base.optimizer.name = OptimizerName::Fedadagrad;
    let (ada, ada_note) = tuned(&base, &task, grid, pool)?;

    let mut sim = Simulation::new(&avg, task.clone())?;
    sim.run(&Sequential)?;
    let threshold = task.global_loss(&sim.server().x)?;

    let cap = 2 * rounds;
    let measure = |cfg: &ExperimentConfig| -> AppResult<f64> {
        let runs: Vec<Option<u64>> = pool.install(|| {
            use rayon::prelude::*;
            (0..seeds)
                .into_par_iter()
                .map(|k| {
                    let mut c = cfg.clone();
                    c.seed = cfg.seed.wrapping_add(k);
                    rounds_to_threshold(&c, &task, threshold, cap)
                })
                .collect::<AppResult<Vec<_>>>()
        })?;
        Ok(median_rounds(&runs))
    };
    let r_avg = measure(&avg)?;
    let r_ada = measure(&ada)?;
    let ratio = r_ada / r_avg;
    Ok(Outcome::new(
        "sparse-gradient trend (fedadagrad <= 0.6x fedavg rounds)",
        ratio <= 0.6,
        format!(
            "threshold {threshold:.6e}; median rounds fedavg {} fedadagrad {} (ratio {ratio:.3}); tuned {avg_note}; {ada_note}",
            fmt_rounds(r_avg),
            fmt_rounds(r_ada)
        ),
    ))
}

/// Quadratics at `hetero ∈ {0, 0.5, 1, 2}` with hyperparameters tuned at
/// `hetero = 1`. Rounds to a fixed suboptimality gap must not decrease.
pub fn heterogeneity_trend(seeds: u64, grid: &Grid, pool: &Parallel) -> AppResult<Outcome> {
    let rounds = 300;
    let spec = |hetero: f64| QuadraticSpec { clients: 20, dim: 20, hetero, batch_size: 5, ..Default::default() };
    let mut passed = true;
    let mut notes = Vec::new();
    for name in [OptimizerName::Fedadagrad, OptimizerName::Fedavg] {
        let mut base = config(TaskSpec::Quadratic(spec(1.0)), name);
        base.rounds = rounds;
        base.clients_per_round = Some(5);
        base.local_steps = Some(10);
        base.noise_std = 0.3;
        let reference = build_task(&base, None)?;
        let (cfg, note) = tuned(&base, &reference, grid, pool)?;
        // A fixed gap: 1% of the initial gap at hetero = 1.
        let f_star = reference.optimal_value().expect("quadratic optimum");
        let gap = 1e-2 * (reference.global_loss(reference.initial_point())? - f_star);
        let mut medians = Vec::new();
        for hetero in [0.0, 0.5, 1.0, 2.0] {
            let mut c = cfg.clone();
            c.task = TaskSpec::Quadratic(spec(hetero));
            let task = build_task(&c, None)?;
            let target = task.optimal_value().expect("quadratic optimum") + gap;
            let runs: Vec<Option<u64>> = pool.install(|| {
                use rayon::prelude::*;
                (0..seeds)
                    .into_par_iter()
                    .map(|k| {
                        let mut ck = c.clone();
                        ck.seed = c.seed.wrapping_add(k);
                        rounds_to_threshold(&ck, &task, target, 4 * rounds)
                    })
                    .collect::<AppResult<Vec<_>>>()
            })?;
            medians.push(median_rounds(&runs));
        }
        let monotone = medians.windows(2).all(|w| w[0] <= w[1]);
        passed &= monotone;
        notes.push(format!(
            "{}: median rounds {} ({note})",
            name.as_str(),
            medians.iter().map(|&r| fmt_rounds(r)).collect::<Vec<_>>().join(" <= ")
        ));
    }
    Ok(Outcome::new("heterogeneity monotonicity", passed, notes.join("; ")))
}

fn planted_trace(loss: f64, rounds: u64) -> Trace {
    let records = (0..rounds)
        .map(|t| RoundRecord {
            round: t,
            clients: vec![0],
            train_loss: if t < rounds / 2 { 100.0 } else { loss },
            grad_norm_sq: None,
            eval_metric: None,
            floor_events: 0,
            wall_ms: 0,
        })
        .collect();
    Trace { fingerprint: 0, seed: 0, records }
}

/// Selection rule on a 3 × 3 grid with planted window means.
pub fn tuning_protocol() -> AppResult<Outcome> {
    let rounds = 200;
    let mut base = config(TaskSpec::Quadratic(QuadraticSpec::default()), OptimizerName::Fedadam);
    base.rounds = rounds;
    let grid = Grid { eta_l: vec![0.01, 0.1, 1.0], eta: vec![0.1, 1.0, 10.0], tau: vec![1e-3] };
    let pool = Parallel::new(2)?;
    let opts = SweepOptions::default();
    let lr = |c: &ExperimentConfig| (c.optimizer.client_lr.unwrap(), c.optimizer.server_lr.unwrap());
    let mut checks = Vec::new();

    // Unique minimum at (0.1, 10).
    let planted = |c: &ExperimentConfig| {
        let (a, b) = lr(c);
        let mean = match (a, b) {
            (x, y) if x == 0.1 && y == 10.0 => 0.3,
            (x, y) if x == 1.0 && y == 0.1 => 0.5,
            _ => 0.9 + a + b,
        };
        Ok(planted_trace(mean, rounds))
    };
    let r = grid_sweep(&base, &grid, opts, &pool, &planted)?;
    let best = r.best_cell().map(|c| (c.eta_l, c.eta));
    checks.push(("argmin", best == Some((0.1, 10.0))));
    let mut reversed = grid.clone();
    reversed.eta_l.reverse();
    reversed.eta.reverse();
    let r2 = grid_sweep(&base, &reversed, opts, &pool, &planted)?;
    checks.push(("order invariance", r2.best_cell().map(|c| (c.eta_l, c.eta)) == best));

    // Ties at 0.2 on three cells: smaller η_l wins, then smaller η.
    let tied = |c: &ExperimentConfig| {
        let (a, b) = lr(c);
        let tie = (a == 1.0 && b == 0.1) || (a == 0.1 && b == 10.0) || (a == 0.1 && b == 1.0);
        Ok(planted_trace(if tie { 0.2 } else { 0.7 }, rounds))
    };
    for g in [&grid, &reversed] {
        let r = grid_sweep(&base, g, opts, &pool, &tied)?;
        checks.push(("tie-break", r.best_cell().map(|c| (c.eta_l, c.eta)) == Some((0.1, 1.0))));
    }

    // A failing cell is excluded.
    let failing = |c: &ExperimentConfig| {
        let (a, b) = lr(c);
        if a == 0.01 && b == 0.1 {
            Err(crate::error::AppError::config("planted failure"))
        } else {
            Ok(planted_trace(a * b, rounds))
        }
    };
    let r = grid_sweep(&base, &grid, opts, &pool, &failing)?;
    checks.push((
        "failed cell excluded",
        r.warnings.len() == 1 && r.best_cell().map(|c| (c.eta_l, c.eta)) == Some((0.01, 1.0)),
    ));

    let single = Grid { eta_l: vec![0.1], eta: vec![1.0], tau: vec![1e-3] };
    let r = grid_sweep(&base, &single, opts, &pool, &planted)?;
    checks.push(("single cell", r.best == Some(0)));

    let passed = checks.iter().all(|c| c.1);
    let detail = checks.iter().map(|(n, ok)| format!("{n} {}", if *ok { "ok" } else { "FAILED" })).collect::<Vec<_>>();
    Ok(Outcome::new("tuning protocol", passed, detail.join("; ")))
}
