//! Experiment configuration, defaults and validation.
//!
//! Only `task` and `optimizer.name` are required. Validation collects every
//! problem, each tagged with the dotted path of the offending field.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::client::LocalWork;
use crate::error::{ConfigIssue, Error, Result};
use crate::schedule::Schedule;
use crate::server::{Flavor, ServerParams};
use crate::tasks::{LinearAeSpec, Mlp2Spec, QuadraticSpec, SparseLogregSpec};

pub const DEFAULT_ROUNDS: u64 = 100;
pub const DEFAULT_COHORT: usize = 10;
pub const DEFAULT_EPOCHS: usize = 1;
pub const DEFAULT_TAU: f64 = 1e-3;
pub const DEFAULT_CLIENT_LR: f64 = 0.1;
pub const DEFAULT_SERVER_LR: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum TaskSpec {
    Quadratic(QuadraticSpec),
    SparseLogreg(SparseLogregSpec),
    Mlp2(Mlp2Spec),
    LinearAe(LinearAeSpec),
    /// Labeled bag-of-features CSV, loaded by the caller.
    #[cfg_attr(feature = "serde", serde(rename = "csv"))]
    Csv(CsvTaskSpec),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct CsvTaskSpec {
    pub path: String,
    #[cfg_attr(feature = "serde", serde(default = "default_csv_clients"))]
    pub clients: usize,
    #[cfg_attr(feature = "serde", serde(default = "default_csv_batch"))]
    pub batch_size: usize,
}

#[cfg(feature = "serde")]
fn default_csv_clients() -> usize {
    10
}

#[cfg(feature = "serde")]
fn default_csv_batch() -> usize {
    10
}

impl TaskSpec {
    pub fn clients(&self) -> usize {
        match self {
            TaskSpec::Quadratic(s) => s.clients,
            TaskSpec::SparseLogreg(s) => s.clients,
            TaskSpec::Mlp2(s) => s.clients,
            TaskSpec::LinearAe(s) => s.clients,
            TaskSpec::Csv(s) => s.clients,
        }
    }

    pub fn set_clients(&mut self, m: usize) {
        match self {
            TaskSpec::Quadratic(s) => s.clients = m,
            TaskSpec::SparseLogreg(s) => s.clients = m,
            TaskSpec::Mlp2(s) => s.clients = m,
            TaskSpec::LinearAe(s) => s.clients = m,
            TaskSpec::Csv(s) => s.clients = m,
        }
    }

    pub fn set_batch_size(&mut self, b: usize) {
        match self {
            TaskSpec::Quadratic(s) => s.batch_size = b,
            TaskSpec::SparseLogreg(s) => s.batch_size = b,
            TaskSpec::Mlp2(s) => s.batch_size = b,
            TaskSpec::LinearAe(s) => s.batch_size = b,
            TaskSpec::Csv(s) => s.batch_size = b,
        }
    }

    /// Parse a bare kind name into its default spec.
    pub fn from_kind(kind: &str) -> Option<Self> {
        Some(match kind {
            "quadratic" => TaskSpec::Quadratic(QuadraticSpec::default()),
            "sparse_logreg" => TaskSpec::SparseLogreg(SparseLogregSpec::default()),
            "mlp2" => TaskSpec::Mlp2(Mlp2Spec::default()),
            "linear_ae" => TaskSpec::LinearAe(LinearAeSpec::default()),
            _ => return None,
        })
    }
}

/// How examples are assigned to clients. `Natural` keeps the generator's
/// own per-client datasets; the others re-split a shared pool.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum PartitionSpec {
    #[default]
    Natural,
    Iid,
    Lda {
        alpha: f64,
    },
    /// Coarse label of fine label `y` is `y / fine_per_coarse`.
    Pachinko {
        alpha: f64,
        beta: f64,
        fine_per_coarse: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum OptimizerName {
    Fedavg,
    Fedavgm,
    Fedadagrad,
    Fedadam,
    Fedyogi,
    Scaffold,
}

impl OptimizerName {
    pub const ALL: [OptimizerName; 6] = [
        OptimizerName::Fedavg,
        OptimizerName::Fedavgm,
        OptimizerName::Fedadagrad,
        OptimizerName::Fedadam,
        OptimizerName::Fedyogi,
        OptimizerName::Scaffold,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerName::Fedavg => "fedavg",
            OptimizerName::Fedavgm => "fedavgm",
            OptimizerName::Fedadagrad => "fedadagrad",
            OptimizerName::Fedadam => "fedadam",
            OptimizerName::Fedyogi => "fedyogi",
            OptimizerName::Scaffold => "scaffold",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.as_str() == s)
    }

    pub fn flavor(self) -> Flavor {
        match self {
            OptimizerName::Fedavg | OptimizerName::Scaffold => Flavor::Sgd,
            OptimizerName::Fedavgm => Flavor::Sgdm,
            OptimizerName::Fedadagrad => Flavor::Adagrad,
            OptimizerName::Fedadam => Flavor::Adam,
            OptimizerName::Fedyogi => Flavor::Yogi,
        }
    }

    /// `(β₁, β₂)`: zero for Adagrad, `(0.9, 0.99)` for Adam and Yogi.
    pub fn default_betas(self) -> (f64, f64) {
        match self {
            OptimizerName::Fedadam | OptimizerName::Fedyogi => (0.9, 0.99),
            _ => (0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct OptimizerSpec {
    pub name: OptimizerName,
    #[cfg_attr(feature = "serde", serde(default))]
    pub client_lr: Option<f64>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub server_lr: Option<f64>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub tau: Option<f64>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub beta1: Option<f64>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub beta2: Option<f64>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub client_schedule: Schedule,
    #[cfg_attr(feature = "serde", serde(default))]
    pub server_schedule: Schedule,
}

impl OptimizerSpec {
    pub fn named(name: OptimizerName) -> Self {
        Self {
            name,
            client_lr: None,
            server_lr: None,
            tau: None,
            beta1: None,
            beta2: None,
            client_schedule: Schedule::Constant,
            server_schedule: Schedule::Constant,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Aggregation {
    Uniform,
    ExampleWeighted,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ExperimentConfig {
    pub task: TaskSpec,
    pub optimizer: OptimizerSpec,
    #[cfg_attr(feature = "serde", serde(default))]
    pub partition: PartitionSpec,
    /// Overrides the task's client count `m`.
    #[cfg_attr(feature = "serde", serde(default))]
    pub total_clients: Option<usize>,
    /// Cohort size `s`; defaults to `min(10, m)`.
    #[cfg_attr(feature = "serde", serde(default))]
    pub clients_per_round: Option<usize>,
    #[cfg_attr(feature = "serde", serde(default = "default_rounds"))]
    pub rounds: u64,
    /// Local epochs `E`; ignored when `local_steps` is set.
    #[cfg_attr(feature = "serde", serde(default))]
    pub epochs: Option<usize>,
    /// Local steps `K`, switching clients to step mode.
    #[cfg_attr(feature = "serde", serde(default))]
    pub local_steps: Option<usize>,
    /// Overrides the task's batch size `B`.
    #[cfg_attr(feature = "serde", serde(default))]
    pub batch_size: Option<usize>,
    /// Total local noise `σ_l`, spread uniformly over coordinates.
    #[cfg_attr(feature = "serde", serde(default))]
    pub noise_std: f64,
    /// Defaults to uniform in step mode and example-weighted in epoch mode.
    #[cfg_attr(feature = "serde", serde(default))]
    pub aggregation: Option<Aggregation>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub seed: u64,
    /// Full-batch gradient norm and eval metric every this many rounds (0 = never).
    #[cfg_attr(feature = "serde", serde(default = "default_eval_every"))]
    pub eval_every: u64,
    #[cfg_attr(feature = "serde", serde(default = "default_true"))]
    pub check_finite: bool,
    #[cfg_attr(feature = "serde", serde(default))]
    pub checkpoint_every: Option<u64>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub out: Option<String>,
}

#[cfg(feature = "serde")]
fn default_rounds() -> u64 {
    DEFAULT_ROUNDS
}

#[cfg(feature = "serde")]
fn default_eval_every() -> u64 {
    1
}

#[cfg(feature = "serde")]
fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn new(task: TaskSpec, optimizer: OptimizerSpec) -> Self {
        Self {
            task,
            optimizer,
            partition: PartitionSpec::Natural,
            total_clients: None,
            clients_per_round: None,
            rounds: DEFAULT_ROUNDS,
            epochs: None,
            local_steps: None,
            batch_size: None,
            noise_std: 0.0,
            aggregation: None,
            seed: 0,
            eval_every: 1,
            check_finite: true,
            checkpoint_every: None,
            out: None,
        }
    }

    /// Validate and fill every default.
    pub fn resolve(&self) -> Result<Resolved> {
        let mut issues = Vec::new();
        let mut bad = |path: &str, message: String| issues.push(ConfigIssue { path: path.into(), message });

        let mut task = self.task.clone();
        if let Some(m) = self.total_clients {
            task.set_clients(m);
        }
        if let Some(b) = self.batch_size {
            if b == 0 {
                bad("batch_size", "must be at least 1".into());
            }
            task.set_batch_size(b);
        }
        let m = task.clients();
        if m == 0 {
            bad(if self.total_clients.is_some() { "total_clients" } else { "task.clients" }, "must be at least 1".into());
        }
        let s = self.clients_per_round.unwrap_or(DEFAULT_COHORT.min(m.max(1)));
        if s == 0 || s > m {
            bad("clients_per_round", format!("must lie in [1, {m}], got {s}"));
        }
        let work = match (self.local_steps, self.epochs) {
            (Some(k), _) => {
                if k == 0 {
                    bad("local_steps", "must be at least 1".into());
                }
                LocalWork::Steps(k)
            }
            (None, e) => {
                let e = e.unwrap_or(DEFAULT_EPOCHS);
                if e == 0 {
                    bad("epochs", "must be at least 1".into());
                }
                LocalWork::Epochs(e)
            }
        };
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            bad("noise_std", "must be finite and nonnegative".into());
        }

        let opt = &self.optimizer;
        let name = opt.name;
        let flavor = name.flavor();
        let (b1, b2) = name.default_betas();
        let client_lr = opt.client_lr.unwrap_or(DEFAULT_CLIENT_LR);
        let server = ServerParams {
            flavor,
            eta: opt.server_lr.unwrap_or(DEFAULT_SERVER_LR),
            tau: opt.tau.unwrap_or(DEFAULT_TAU),
            beta1: opt.beta1.unwrap_or(b1),
            beta2: opt.beta2.unwrap_or(b2),
        };
        if !(client_lr >= 0.0) || !client_lr.is_finite() {
            bad("optimizer.client_lr", "must be finite and nonnegative".into());
        }
        if name == OptimizerName::Scaffold && client_lr == 0.0 {
            bad("optimizer.client_lr", "scaffold divides by the client lr; must be positive".into());
        }
        if !(server.eta >= 0.0) || !server.eta.is_finite() {
            bad("optimizer.server_lr", "must be finite and nonnegative".into());
        }
        if flavor.is_adaptive() && !(server.tau > 0.0 && server.tau.is_finite()) {
            bad("optimizer.tau", "must be positive for adaptive optimizers".into());
        }
        if !(0.0..=1.0).contains(&server.beta1) {
            bad("optimizer.beta1", "must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&server.beta2) {
            bad("optimizer.beta2", "must lie in [0, 1]".into());
        }
        if let Err(e) = opt.client_schedule.validate() {
            bad("optimizer.client_schedule", format!("{e}"));
        }
        if let Err(e) = opt.server_schedule.validate() {
            bad("optimizer.server_schedule", format!("{e}"));
        }
        match self.partition {
            PartitionSpec::Natural => {}
            PartitionSpec::Iid => {}
            PartitionSpec::Lda { alpha } => {
                if !(alpha > 0.0) {
                    bad("partition.alpha", "must be positive".into());
                }
            }
            PartitionSpec::Pachinko { alpha, beta, fine_per_coarse } => {
                if !(alpha > 0.0) {
                    bad("partition.alpha", "must be positive".into());
                }
                if !(beta > 0.0) {
                    bad("partition.beta", "must be positive".into());
                }
                if fine_per_coarse == 0 {
                    bad("partition.fine_per_coarse", "must be at least 1".into());
                }
            }
        }
        if !matches!(self.partition, PartitionSpec::Natural)
            && !matches!(task, TaskSpec::SparseLogreg(_) | TaskSpec::Csv(_))
        {
            bad("partition", "re-partitioning applies to sparse_logreg and csv tasks only".into());
        }
        if self.checkpoint_every == Some(0) {
            bad("checkpoint_every", "must be at least 1".into());
        }
        let aggregation = self.aggregation.unwrap_or(match work {
            LocalWork::Steps(_) => Aggregation::Uniform,
            LocalWork::Epochs(_) => Aggregation::ExampleWeighted,
        });

        if !issues.is_empty() {
            return Err(Error::Config(issues));
        }
        Ok(Resolved {
            task,
            partition: self.partition,
            m,
            s,
            rounds: self.rounds,
            work,
            noise_std: self.noise_std,
            aggregation,
            optimizer: name,
            client_lr,
            server,
            client_schedule: opt.client_schedule,
            server_schedule: opt.server_schedule,
            seed: self.seed,
            eval_every: self.eval_every,
            check_finite: self.check_finite,
        })
    }

    /// FNV-1a over the debug rendering of the resolved configuration.
    pub fn fingerprint(&self) -> u64 {
        let text = format!("{:?}", self.resolve().ok());
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

/// A validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub task: TaskSpec,
    pub partition: PartitionSpec,
    pub m: usize,
    pub s: usize,
    pub rounds: u64,
    pub work: LocalWork,
    pub noise_std: f64,
    pub aggregation: Aggregation,
    pub optimizer: OptimizerName,
    pub client_lr: f64,
    pub server: ServerParams,
    pub client_schedule: Schedule,
    pub server_schedule: Schedule,
    pub seed: u64,
    pub eval_every: u64,
    pub check_finite: bool,
}
