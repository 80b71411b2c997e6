//! Round orchestration: sample a cohort, broadcast `x_t`, run local work,
//! aggregate the deltas and hand the average to the server optimizer.
//!
//! Every random draw is keyed by `(seed, round, client)`, so a round's
//! outcome depends neither on how many workers execute the cohort nor on
//! their completion order.

mod config;

use alloc::format;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

pub use config::{
    Aggregation, CsvTaskSpec, ExperimentConfig, OptimizerName, OptimizerSpec, PartitionSpec, Resolved, TaskSpec,
    DEFAULT_CLIENT_LR, DEFAULT_COHORT, DEFAULT_EPOCHS, DEFAULT_ROUNDS, DEFAULT_SERVER_LR, DEFAULT_TAU,
};

use crate::client::{local_train, scaffold_local, ControlVariates};
use crate::error::{contract, Error, Result};
use crate::numkit::{weighted_sum, ParamVector};
use crate::partition::{partition_iid, partition_lda, partition_pachinko, LabelDag};
use crate::rng::{client_stream, stream, Purpose};
use crate::server::ServerState;
use crate::tasks::{
    make_linear_ae, make_mlp2, make_quadratic_ensemble, make_sparse_logreg, sparse_logreg_from_pool,
    sparse_logreg_pool, Task,
};

/// `s` distinct ids drawn uniformly from `0..m`, returned ascending.
pub fn sample_clients<R: Rng + ?Sized>(m: usize, s: usize, rng: &mut R) -> Result<Vec<usize>> {
    if s == 0 || s > m {
        return Err(contract(alloc::format!("cohort size {s} outside [1, {m}]")));
    }
    let mut ids = index::sample(rng, m, s).into_vec();
    ids.sort_unstable();
    Ok(ids)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client: usize,
    pub delta: ParamVector,
    pub examples: usize,
    pub train_loss: f64,
    /// SCAFFOLD only: `Δc_i` and the new `c_i`.
    pub delta_c: Option<ParamVector>,
    pub c_i_new: Option<ParamVector>,
}

fn aggregation_weights(updates: &[ClientUpdate], mode: Aggregation) -> Vec<f64> {
    match mode {
        Aggregation::Uniform => alloc::vec![1.0 / updates.len() as f64; updates.len()],
        Aggregation::ExampleWeighted => {
            let n: usize = updates.iter().map(|u| u.examples).sum();
            updates.iter().map(|u| u.examples as f64 / n as f64).collect()
        }
    }
}

/// Mean delta (uniform) or `Σ (n_i / n) Δ_i` (example-weighted).
pub fn aggregate(updates: &[ClientUpdate], mode: Aggregation) -> Result<ParamVector> {
    if updates.is_empty() {
        return Err(contract("cannot aggregate an empty cohort"));
    }
    let w = aggregation_weights(updates, mode);
    let deltas: Vec<&ParamVector> = updates.iter().map(|u| &u.delta).collect();
    weighted_sum(&deltas, &w)
}

/// Fan-out of one round's client jobs. Results must come back in `ids` order.
pub trait ClientExecutor {
    fn map(&self, ids: &[usize], job: &(dyn Fn(usize) -> Result<ClientUpdate> + Sync)) -> Vec<Result<ClientUpdate>>;
}

/// Runs the cohort one client at a time on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl ClientExecutor for Sequential {
    fn map(&self, ids: &[usize], job: &(dyn Fn(usize) -> Result<ClientUpdate> + Sync)) -> Vec<Result<ClientUpdate>> {
        ids.iter().map(|&i| job(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RoundRecord {
    pub round: u64,
    pub clients: Vec<usize>,
    /// Mean over the cohort of each client's mean visited-batch loss.
    pub train_loss: f64,
    /// `‖∇f(x_t)‖²` at the round's starting point, when evaluated.
    pub grad_norm_sq: Option<f64>,
    pub eval_metric: Option<f64>,
    pub floor_events: u64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Trace {
    pub fingerprint: u64,
    pub seed: u64,
    pub records: Vec<RoundRecord>,
}

/// Everything needed to continue a run: server state, variates and the
/// records so far. Rng streams are keyed by round, so the round counter in
/// `server.t` is the whole rng cursor.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Checkpoint {
    pub fingerprint: u64,
    pub server: ServerState,
    pub variates: Option<ControlVariates>,
    pub records: Vec<RoundRecord>,
}

/// Split `labels` among `m` clients with `per_client` examples each.
/// `Natural` is treated as IID for pools without a native split.
pub fn partition_pool(
    labels: &[usize],
    partition: PartitionSpec,
    m: usize,
    per_client: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let mut rng = stream(seed, Purpose::Partition, 0, 0);
    match partition {
        PartitionSpec::Natural | PartitionSpec::Iid => partition_iid(labels.len(), m, per_client, &mut rng),
        PartitionSpec::Lda { alpha } => partition_lda(labels, m, per_client, alpha, &mut rng),
        PartitionSpec::Pachinko { alpha, beta, fine_per_coarse } => {
            let pairs: Vec<(usize, usize)> = labels.iter().map(|&y| (y / fine_per_coarse.max(1), y)).collect();
            let dag = LabelDag::from_labels(&pairs)?;
            partition_pachinko(&dag, m, per_client, alpha, beta, &mut rng)
        }
    }
}

/// Generate the configured task (everything except CSV sources) and attach
/// the configured local noise.
pub fn build_task(cfg: &Resolved) -> Result<Task> {
    let mut rng = stream(cfg.seed, Purpose::TaskBuild, 0, 0);
    let task = match &cfg.task {
        TaskSpec::Quadratic(s) => make_quadratic_ensemble(s, &mut rng)?,
        TaskSpec::Mlp2(s) => make_mlp2(s, &mut rng)?,
        TaskSpec::LinearAe(s) => make_linear_ae(s, &mut rng)?,
        TaskSpec::SparseLogreg(s) => match cfg.partition {
            PartitionSpec::Natural => make_sparse_logreg(s, &mut rng)?,
            p => {
                let pool = sparse_logreg_pool(s, s.clients * s.examples_per_client, &mut rng)?;
                let labels: Vec<usize> = pool.iter().map(|e| e.label).collect();
                let parts = partition_pool(&labels, p, s.clients, s.examples_per_client, cfg.seed)?;
                sparse_logreg_from_pool(pool, &parts, s.vocab, s.classes, s.batch_size)?
            }
        },
        TaskSpec::Csv(_) => return Err(contract("csv tasks must be loaded from disk by the caller")),
    };
    Ok(task.with_uniform_noise(cfg.noise_std))
}

/// A run in progress.
#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: Resolved,
    task: Task,
    server: ServerState,
    base_eta: f64,
    variates: Option<ControlVariates>,
    trace: Trace,
}

impl Simulation {
    /// Start from an explicit task (its client count must match the config).
    pub fn new(config: &ExperimentConfig, task: Task) -> Result<Self> {
        let cfg = config.resolve()?;
        if task.num_clients() != cfg.m {
            return Err(Error::Shape {
                left: task.num_clients(),
                right: cfg.m,
            });
        }
        let mut server = ServerState::new(task.initial_point().clone(), cfg.server)?;
        server.check_finite = cfg.check_finite;
        let variates = (cfg.optimizer == OptimizerName::Scaffold).then(|| ControlVariates::new(task.dim(), cfg.m));
        Ok(Self {
            base_eta: cfg.server.eta,
            trace: Trace {
                fingerprint: config.fingerprint(),
                seed: cfg.seed,
                records: Vec::new(),
            },
            cfg,
            task,
            server,
            variates,
        })
    }

    /// Build the task from the config and start.
    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        let cfg = config.resolve()?;
        let task = build_task(&cfg)?;
        Self::new(config, task)
    }

    /// Continue from a checkpoint taken under the same configuration.
    pub fn resume(config: &ExperimentConfig, task: Task, checkpoint: Checkpoint) -> Result<Self> {
        let mut sim = Self::new(config, task)?;
        if checkpoint.fingerprint != sim.trace.fingerprint {
            return Err(contract("checkpoint was written under a different configuration"));
        }
        sim.server.x.check_len(&checkpoint.server.x)?;
        if checkpoint.records.len() as u64 != checkpoint.server.t {
            return Err(contract("checkpoint records do not match its round counter"));
        }
        sim.server = checkpoint.server;
        sim.server.check_finite = sim.cfg.check_finite;
        sim.variates = checkpoint.variates;
        sim.trace.records = checkpoint.records;
        Ok(sim)
    }

    pub fn config(&self) -> &Resolved {
        &self.cfg
    }

    pub fn task(&self) -> &Task {
        &self.task
    }

    pub fn server(&self) -> &ServerState {
        &self.server
    }

    pub fn variates(&self) -> Option<&ControlVariates> {
        self.variates.as_ref()
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    pub fn round(&self) -> u64 {
        self.server.t
    }

    pub fn is_done(&self) -> bool {
        self.server.t >= self.cfg.rounds
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            fingerprint: self.trace.fingerprint,
            server: self.server.clone(),
            variates: self.variates.clone(),
            records: self.trace.records.clone(),
        }
    }

    /// Execute one round and append its record.
    pub fn step(&mut self, exec: &dyn ClientExecutor) -> Result<&RoundRecord> {
        let cfg = &self.cfg;
        let t = self.server.t;
        let ids = sample_clients(cfg.m, cfg.s, &mut stream(cfg.seed, Purpose::Sampling, t, 0))?;
        let x_t = self.server.x.clone();
        let evaluate = cfg.eval_every > 0 && t.is_multiple_of(cfg.eval_every);
        let (grad_norm_sq, eval_metric) = if evaluate {
            (Some(self.task.global_gradient(&x_t)?.norm_sq()), Some(self.task.eval_metric(&x_t)?))
        } else {
            (None, None)
        };
        let eta_l = cfg.client_schedule.eval(cfg.client_lr, t);
        let (task, work, seed, variates) = (&self.task, cfg.work, cfg.seed, self.variates.as_ref());
        let job = |i: usize| -> Result<ClientUpdate> {
            let mut rng = client_stream(seed, t, i);
            match variates {
                Some(cv) => {
                    let c_i = cv.client_variate(i);
                    let r = scaffold_local(&x_t, task, i, work, eta_l, &cv.c, &c_i, &mut rng)?;
                    Ok(ClientUpdate {
                        client: i,
                        delta: r.local.delta,
                        examples: r.local.examples,
                        train_loss: r.local.train_loss,
                        delta_c: Some(r.delta_c),
                        c_i_new: Some(r.c_i_new),
                    })
                }
                None => {
                    let r = local_train(&x_t, task, i, work, eta_l, &mut rng)?;
                    Ok(ClientUpdate {
                        client: i,
                        delta: r.delta,
                        examples: r.examples,
                        train_loss: r.train_loss,
                        delta_c: None,
                        c_i_new: None,
                    })
                }
            }
        };
        let updates = exec.map(&ids, &job).into_iter().collect::<Result<Vec<_>>>()?;
        let avg = aggregate(&updates, cfg.aggregation)?;
        let train_loss = updates.iter().map(|u| u.train_loss).sum::<f64>() / updates.len() as f64;
        if cfg.check_finite {
            let metrics = [Some(train_loss), grad_norm_sq, eval_metric];
            if let Some(index) = metrics.iter().position(|v| v.is_some_and(|v| !v.is_finite())) {
                return Err(Error::NonFinite { index, context: format!("round {t} metrics (train_loss, grad_norm_sq, eval)") });
            }
        }

        self.server.params.eta = cfg.server_schedule.eval(self.base_eta, t);
        let floor_events = self.server.update(&avg)?;

        if let Some(cv) = self.variates.as_mut() {
            let w = aggregation_weights(&updates, cfg.aggregation);
            let dcs: Vec<&ParamVector> = updates.iter().filter_map(|u| u.delta_c.as_ref()).collect();
            let dc = weighted_sum(&dcs, &w)?;
            for u in &updates {
                if let Some(ci) = &u.c_i_new {
                    cv.set_client(u.client, ci.clone());
                }
            }
            cv.absorb(&dc, cfg.s, cfg.m)?;
        }

        self.trace.records.push(RoundRecord {
            round: t,
            clients: ids,
            train_loss,
            grad_norm_sq,
            eval_metric,
            floor_events,
            wall_ms: 0,
        });
        Ok(self.trace.records.last().expect("just pushed"))
    }

    /// Stamp the latest record with a measured duration. Records carry 0
    /// unless the caller opts in, so traces stay reproducible by default.
    pub fn set_last_wall_ms(&mut self, ms: u64) {
        if let Some(r) = self.trace.records.last_mut() {
            r.wall_ms = ms;
        }
    }

    /// Run the remaining rounds.
    pub fn run(&mut self, exec: &dyn ClientExecutor) -> Result<()> {
        while !self.is_done() {
            self.step(exec)?;
        }
        Ok(())
    }
}

/// Build, run to completion on the calling thread, and return the trace.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Trace> {
    let mut sim = Simulation::from_config(config)?;
    sim.run(&Sequential)?;
    Ok(sim.into_trace())
}

#[cfg(test)]
mod tests;
