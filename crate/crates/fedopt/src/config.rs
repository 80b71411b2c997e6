//! JSON experiment configs and command-line overrides.
//!
//! Configs fail closed: unknown keys, type mismatches and constraint
//! violations are all rejected with the dotted path of the field involved.

use std::path::Path;

use fedopt_core::fedloop::{CsvTaskSpec, ExperimentConfig, OptimizerName, OptimizerSpec, PartitionSpec, TaskSpec};
use fedopt_core::schedule::Schedule;
use fedopt_core::tasks::{LinearAeSpec, Mlp2Spec, QuadraticSpec, SparseLogregSpec};

use crate::error::{AppError, AppResult};

/// Parse and validate a JSON config.
pub fn parse_config(text: &str) -> AppResult<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "task" {
            if let Some(precise) = task_error(text) {
                return precise;
            }
        }
        if path == "." {
            AppError::config(inner.to_string())
        } else {
            AppError::config(format!("{path}: {inner}"))
        }
    })?;
    cfg.resolve()?;
    Ok(cfg)
}

fn path_error<T: serde::de::DeserializeOwned>(prefix: &str, value: serde_json::Value) -> Option<AppError> {
    let e = serde_path_to_error::deserialize::<_, T>(value).err()?;
    let path = e.path().to_string();
    let path = if path == "." { prefix.to_string() } else { format!("{prefix}.{path}") };
    Some(AppError::config(format!("{path}: {}", e.into_inner())))
}

/// The tagged task enum buffers its body, which hides the field path.
/// Re-deserialize the body on its own to recover it.
fn task_error(text: &str) -> Option<AppError> {
    let root: serde_json::Value = serde_json::from_str(text).ok()?;
    let mut body = root.get("task")?.as_object()?.clone();
    let kind = body.remove("kind")?;
    let body = serde_json::Value::Object(body);
    match kind.as_str()? {
        "quadratic" => path_error::<QuadraticSpec>("task", body),
        "sparse_logreg" => path_error::<SparseLogregSpec>("task", body),
        "mlp2" => path_error::<Mlp2Spec>("task", body),
        "linear_ae" => path_error::<LinearAeSpec>("task", body),
        "csv" => path_error::<CsvTaskSpec>("task", body),
        _ => None,
    }
}

pub fn load_config(path: &Path) -> AppResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    parse_config(&text)
}

/// `constant`, `expdecay:FACTOR:PERIOD` or `inv_sqrt:SCALE`.
pub fn parse_schedule(spec: &str) -> AppResult<Schedule> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| s.parse::<f64>().map_err(|_| AppError::config(format!("schedule: bad number `{s}`")));
    let sched = match parts.as_slice() {
        ["constant"] => Schedule::Constant,
        ["expdecay", f, p] => Schedule::ExpDecay {
            factor: num(f)?,
            period: p.parse().map_err(|_| AppError::config(format!("schedule: bad period `{p}`")))?,
        },
        ["inv_sqrt"] => Schedule::InvSqrt { scale: 1.0 },
        ["inv_sqrt", s] => Schedule::InvSqrt { scale: num(s)? },
        _ => {
            return Err(AppError::config(format!(
                "schedule: expected constant, expdecay:FACTOR:PERIOD or inv_sqrt:SCALE, got `{spec}`"
            )))
        }
    };
    sched.validate().map_err(|e| AppError::config(format!("schedule: {e}")))?;
    Ok(sched)
}

/// `natural`, `iid`, `lda:ALPHA` or `pachinko:ALPHA:BETA:FINE_PER_COARSE`.
pub fn parse_partition(spec: &str) -> AppResult<PartitionSpec> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || AppError::config(format!("partition: cannot parse `{spec}`"));
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
    Ok(match parts.as_slice() {
        ["natural"] => PartitionSpec::Natural,
        ["iid"] => PartitionSpec::Iid,
        ["lda", a] => PartitionSpec::Lda { alpha: num(a)? },
        ["pachinko", a, b, f] => PartitionSpec::Pachinko {
            alpha: num(a)?,
            beta: num(b)?,
            fine_per_coarse: f.parse().map_err(|_| bad())?,
        },
        _ => return Err(bad()),
    })
}

/// A bare task kind, or `csv:PATH` for a dataset file.
pub fn parse_task(spec: &str) -> AppResult<TaskSpec> {
    if let Some(path) = spec.strip_prefix("csv:") {
        return Ok(TaskSpec::Csv(CsvTaskSpec { path: path.to_string(), clients: 10, batch_size: 10 }));
    }
    TaskSpec::from_kind(spec).ok_or_else(|| {
        AppError::config(format!("task: unknown kind `{spec}` (quadratic, sparse_logreg, mlp2, linear_ae, csv:PATH)"))
    })
}

fn same_kind(a: &TaskSpec, b: &TaskSpec) -> bool {
    std::mem::discriminant(a) == std::mem::discriminant(b)
}

/// Flag values layered over a config file. Flags win.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub task: Option<String>,
    pub optimizer: Option<String>,
    pub partition: Option<String>,
    pub rounds: Option<u64>,
    pub clients_per_round: Option<usize>,
    pub total_clients: Option<usize>,
    pub epochs: Option<usize>,
    pub local_steps: Option<usize>,
    pub batch_size: Option<usize>,
    pub client_lr: Option<f64>,
    pub server_lr: Option<f64>,
    pub tau: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    /// Client learning-rate schedule.
    pub schedule: Option<String>,
    pub noise_std: Option<f64>,
    pub seed: Option<u64>,
    pub eval_every: Option<u64>,
    pub checkpoint_every: Option<u64>,
    pub out: Option<String>,
}

impl Overrides {
    /// Layer the flags over `base` (or build from flags alone) and validate.
    pub fn apply(&self, base: Option<ExperimentConfig>) -> AppResult<ExperimentConfig> {
        let task = self.task.as_deref().map(parse_task).transpose()?;
        let optimizer = self
            .optimizer
            .as_deref()
            .map(|s| OptimizerName::parse(s).ok_or_else(|| AppError::config(format!("optimizer: unknown name `{s}`"))))
            .transpose()?;
        let mut cfg = match base {
            Some(mut cfg) => {
                if let Some(t) = task {
                    if !same_kind(&t, &cfg.task) || matches!(t, TaskSpec::Csv(_)) {
                        cfg.task = t;
                    }
                }
                if let Some(name) = optimizer {
                    cfg.optimizer.name = name;
                }
                cfg
            }
            None => {
                let task = task.ok_or_else(|| AppError::config("task: required (use --task or --config)"))?;
                let name = optimizer.ok_or_else(|| AppError::config("optimizer: required (use --optimizer or --config)"))?;
                ExperimentConfig::new(task, OptimizerSpec::named(name))
            }
        };
        if let Some(p) = &self.partition {
            cfg.partition = parse_partition(p)?;
        }
        if let Some(s) = &self.schedule {
            cfg.optimizer.client_schedule = parse_schedule(s)?;
        }
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { $target = v.into(); })*
            };
        }
        set!(
            rounds => cfg.rounds,
            clients_per_round => cfg.clients_per_round,
            total_clients => cfg.total_clients,
            epochs => cfg.epochs,
            local_steps => cfg.local_steps,
            batch_size => cfg.batch_size,
            client_lr => cfg.optimizer.client_lr,
            server_lr => cfg.optimizer.server_lr,
            tau => cfg.optimizer.tau,
            beta1 => cfg.optimizer.beta1,
            beta2 => cfg.optimizer.beta2,
            noise_std => cfg.noise_std,
            seed => cfg.seed,
            eval_every => cfg.eval_every,
            checkpoint_every => cfg.checkpoint_every,
            out => cfg.out,
        );
        cfg.resolve()?;
        Ok(cfg)
    }
}
