//! Bound reports: estimate the assumption constants for a configured task,
//! evaluate the drift and convergence bounds, and optionally compare them
//! with seeded runs.

use fedopt_core::client::LocalWork;
use fedopt_core::fedloop::{ClientExecutor, ExperimentConfig, OptimizerName, Trace};
use fedopt_core::rng::{stream, Purpose};
use fedopt_core::tasks::{estimate_constants, probe_box, AssumptionEstimates, Task};
use fedopt_core::theory::{
    adagrad_bound, adam_bound, check_conditions, compare_traces_to_bound, corollary_hyperparameters, corollary_rate,
    drift_bound, drift_bound_as_stated, empirical_drift, mean_and_std_err, AdagradBound, AdamBound, BoundComparison,
    BoundInputs, BoundKind, Conditions,
};
use serde::Serialize;

use crate::error::{AppError, AppResult};
use crate::run::simulate;
use crate::task::build_task;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsOptions {
    /// Replace `η_l, η, τ` by the corollary choices.
    pub corollary: bool,
    /// Seeded runs to compare against the bound (0 skips the comparison).
    pub seeds: u64,
    /// Seeds for the drift measurement at `x_0` (0 skips it).
    pub drift_seeds: u64,
    pub slack: f64,
    /// Half-width of the probe box around `x_0` used for the estimates.
    pub probe_radius: f64,
    pub probes: usize,
}

impl Default for BoundsOptions {
    fn default() -> Self {
        Self { corollary: false, seeds: 0, drift_seeds: 0, slack: 10.0, probe_radius: 1.0, probes: 8 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftReport {
    pub seeds: u64,
    /// Seed-mean of `(1/m) Σ_i ‖x_{i,k} − x_0‖²` per local step `k`.
    pub empirical: Vec<f64>,
    pub bound: f64,
    pub bound_as_stated: f64,
    pub condition_i: bool,
    pub satisfied: bool,
    pub satisfied_as_stated: bool,
    /// `bound − max_k empirical`.
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub optimizer: OptimizerName,
    pub kind: BoundKind,
    pub estimates: AssumptionEstimates,
    pub inputs: BoundInputs,
    /// The same inputs with `G` taken as a Euclidean-norm bound.
    pub inputs_norm_g: BoundInputs,
    pub grad_norm_sq_x0: f64,
    pub f_star: f64,
    /// `f_star` is the best loss of a long centralized run, not the optimum.
    pub f_star_proxy: bool,
    pub conditions: Conditions,
    pub adagrad: Option<AdagradBound>,
    pub adagrad_norm_g: Option<AdagradBound>,
    pub adam: Option<AdamBound>,
    pub adam_norm_g: Option<AdamBound>,
    /// The bound that the comparison uses.
    pub rhs: f64,
    pub corollary_rate: f64,
    /// Extra variance term for `s < m`.
    pub partial_participation: f64,
    pub cohort: usize,
    pub drift: Option<DriftReport>,
    pub comparison: Option<BoundComparison>,
}

/// Local steps per round implied by the config.
pub fn steps_per_round(work: LocalWork, task: &Task) -> usize {
    match work {
        LocalWork::Steps(k) => k,
        LocalWork::Epochs(e) => e * task.clients().iter().map(|c| c.num_batches()).max().unwrap_or(1),
    }
}

/// Apply the corollary hyperparameters to `cfg` given estimates.
pub fn with_corollary(cfg: &ExperimentConfig, est: &AssumptionEstimates, k: usize, m: usize) -> ExperimentConfig {
    let (eta_l, eta, tau) = corollary_hyperparameters(est.smoothness, est.grad_bound, k as f64, cfg.rounds as f64, m as f64);
    let mut out = cfg.clone();
    out.optimizer.client_lr = Some(eta_l);
    out.optimizer.server_lr = Some(eta);
    out.optimizer.tau = Some(tau);
    out
}

pub fn estimate(task: &Task, opts: &BoundsOptions, seed: u64) -> AppResult<AssumptionEstimates> {
    let mut rng = stream(seed, Purpose::Probe, 0, 0);
    let probes = probe_box(task.initial_point(), opts.probe_radius, opts.probes.max(2), &mut rng);
    Ok(estimate_constants(task, &probes, 4, &mut rng)?)
}

/// Build the report. `exec` runs the comparison seeds.
pub fn bound_report(cfg: &ExperimentConfig, opts: &BoundsOptions, exec: &dyn ClientExecutor) -> AppResult<BoundReport> {
    let base = cfg.resolve()?;
    let kind = match base.optimizer {
        OptimizerName::Fedadagrad => BoundKind::Adagrad,
        OptimizerName::Fedadam => BoundKind::Adam,
        other => {
            return Err(AppError::config(format!(
                "optimizer.name: bounds cover fedadagrad and fedadam, got {}",
                other.as_str()
            )))
        }
    };
    let task = build_task(cfg, None)?;
    let est = estimate(&task, opts, base.seed)?;
    let k = steps_per_round(base.work, &task);
    let cfg = if opts.corollary { with_corollary(cfg, &est, k, base.m) } else { cfg.clone() };
    let r = cfg.resolve()?;
    let x0 = task.initial_point().clone();
    let f0 = task.global_loss(&x0)?;
    let (f_star, f_star_proxy) = match task.optimal_value() {
        Some(v) => (v, false),
        None => (centralized_best_loss(&task, est.smoothness, PROXY_STEPS)?, true),
    };
    let inputs = BoundInputs {
        smoothness: est.smoothness,
        grad_bound: est.grad_bound,
        sigma_l_sq: est.sigma_l_sq,
        sigma_g_sq: est.sigma_g_sq,
        eta_l: r.client_lr,
        eta: r.server.eta,
        tau: r.server.tau,
        beta2: r.server.beta2,
        k: k as f64,
        t: r.rounds as f64,
        m: r.m as f64,
        d: task.dim() as f64,
        f0_minus_fstar: f0 - f_star,
    };
    let inputs_norm_g = BoundInputs { grad_bound: est.grad_norm_bound, ..inputs };
    let conditions = check_conditions(kind, &inputs);
    let (adagrad, adagrad_norm_g, adam, adam_norm_g, rhs) = match kind {
        BoundKind::Adagrad => {
            let b = adagrad_bound(&inputs);
            let rhs = if conditions.condition_ii { b.rhs_min } else { b.rhs_i };
            (Some(b), Some(adagrad_bound(&inputs_norm_g)), None, None, rhs)
        }
        BoundKind::Adam => {
            let b = adam_bound(&inputs);
            (None, None, Some(b), Some(adam_bound(&inputs_norm_g)), b.rhs)
        }
    };
    let grad_norm_sq_x0 = task.global_gradient(&x0)?.norm_sq();
    let drift = (opts.drift_seeds > 0)
        .then(|| drift_report(&task, &inputs, grad_norm_sq_x0, k, opts.drift_seeds, r.seed))
        .transpose()?;
    let comparison = if opts.seeds > 0 {
        let traces = seeded_traces(&cfg, &task, opts.seeds, exec)?;
        Some(compare_traces_to_bound(&traces, rhs, opts.slack)?)
    } else {
        None
    };
    Ok(BoundReport {
        optimizer: r.optimizer,
        kind,
        estimates: est,
        inputs,
        inputs_norm_g,
        grad_norm_sq_x0,
        f_star,
        f_star_proxy,
        conditions,
        adagrad,
        adagrad_norm_g,
        adam,
        adam_norm_g,
        rhs,
        corollary_rate: corollary_rate(kind, &inputs),
        partial_participation: fedopt_core::theory::partial_participation_term(&inputs, r.s as f64)?,
        cohort: r.s,
        drift,
        comparison,
    })
}

const PROXY_STEPS: usize = 2000;

/// Lowest global loss seen by full-gradient descent with step `1/L`.
pub fn centralized_best_loss(task: &Task, smoothness: f64, steps: usize) -> AppResult<f64> {
    let lr = 1.0 / smoothness.max(f64::MIN_POSITIVE);
    let mut x = task.initial_point().clone();
    let mut best = task.global_loss(&x)?;
    for _ in 0..steps {
        let g = task.global_gradient(&x)?;
        x.axpy(-lr, &g)?;
        let f = task.global_loss(&x)?;
        if !f.is_finite() {
            break;
        }
        best = best.min(f);
    }
    Ok(best)
}

/// Runs with seeds `seed, seed + 1, …` on a fixed task, gradient norms every round.
pub fn seeded_traces(cfg: &ExperimentConfig, task: &Task, seeds: u64, exec: &dyn ClientExecutor) -> AppResult<Vec<Trace>> {
    (0..seeds)
        .map(|k| {
            let mut c = cfg.clone();
            c.seed = cfg.seed.wrapping_add(k);
            c.eval_every = 1;
            simulate(&c, task.clone(), exec, false)
        })
        .collect()
}

pub fn drift_report(
    task: &Task,
    inputs: &BoundInputs,
    grad_norm_sq: f64,
    k: usize,
    seeds: u64,
    seed: u64,
) -> AppResult<DriftReport> {
    let x0 = task.initial_point();
    let mut per_k = vec![Vec::with_capacity(seeds as usize); k];
    for s in 0..seeds {
        let d = empirical_drift(task, x0, k, inputs.eta_l, seed.wrapping_add(s), 0)?;
        for (acc, v) in per_k.iter_mut().zip(d) {
            acc.push(v);
        }
    }
    let empirical: Vec<f64> = per_k.iter().map(|v| mean_and_std_err(v).0).collect();
    let bound = drift_bound(inputs, grad_norm_sq);
    let stated = drift_bound_as_stated(inputs, grad_norm_sq);
    let worst = empirical.iter().cloned().fold(0.0, f64::max);
    Ok(DriftReport {
        seeds,
        empirical,
        bound: bound.value,
        bound_as_stated: stated,
        condition_i: bound.condition_i,
        satisfied: worst <= bound.value,
        satisfied_as_stated: worst <= stated,
        margin: bound.value - worst,
    })
}
