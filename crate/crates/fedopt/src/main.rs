use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fedopt::bounds::{bound_report, BoundsOptions};
use fedopt::checks;
use fedopt::config::{load_config, Overrides};
use fedopt::error::{AppError, AppResult};
use fedopt::exec::{workers_from_env, Parallel};
use fedopt::io::write_json;
use fedopt::manifest::PartitionManifest;
use fedopt::run::{run, simulate, RunOptions};
use fedopt::sweep::{grid_sweep, write_sweep_table, Grid, SelectOn, SweepOptions, DEFAULT_WINDOW};
use fedopt::task::build_task;
use fedopt_core::fedloop::{ExperimentConfig, Sequential};

/// Federated optimization simulator.
///
/// Parallelism is capped by FEDOPT_WORKERS. Exit status: 0 success,
/// 2 configuration error, 3 numerical abort, 1 anything else.
#[derive(Parser)]
#[command(name = "fedopt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment; writes config.json, metrics.csv and checkpoints under --out.
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Continue from <out>/checkpoint.json when present.
        #[arg(long)]
        resume: bool,
        /// Record per-round wall-clock time (makes metrics non-reproducible).
        #[arg(long)]
        timing: bool,
        /// Use the client split recorded in a partition manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Grid-search (client lr, server lr, tau); writes <out>/sweep.csv.
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Comma-separated client learning rates [default: 10^-3 .. 10^0.5, half decades].
        #[arg(long, value_delimiter = ',')]
        eta_l_grid: Vec<f64>,
        /// Comma-separated server learning rates [default: 10^-3 .. 10^1, half decades].
        #[arg(long, value_delimiter = ',')]
        eta_grid: Vec<f64>,
        /// Comma-separated tau values [default: 10^-5 .. 10^-1].
        #[arg(long, value_delimiter = ',')]
        tau_grid: Vec<f64>,
        /// Rounds at the end of training that are averaged for selection.
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: u64,
        /// Seeds averaged per cell.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, value_enum, default_value_t = Select::Train)]
        select_on: Select,
    },
    /// Evaluate the drift and convergence bounds; JSON report to --out or stdout.
    Bounds {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Use the corollary choices of client lr, server lr and tau.
        #[arg(long)]
        corollary: bool,
        /// Seeded runs compared against the bound.
        #[arg(long, default_value_t = 0)]
        seeds: u64,
        /// Seeds for the local-drift measurement at x_0.
        #[arg(long, default_value_t = 0)]
        drift_seeds: u64,
        #[arg(long, default_value_t = 10.0)]
        slack: f64,
        /// Half-width of the probe box used to estimate L, G and the variances.
        #[arg(long, default_value_t = 1.0)]
        probe_radius: f64,
    },
    /// Build the task and write its client split as a JSON manifest to --out.
    Partition {
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Run the invariant suite.
    Check {
        /// Also run the slow bound and trend checks.
        #[arg(long)]
        full: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Select {
    Train,
    Eval,
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    /// JSON config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// quadratic, sparse_logreg, mlp2, linear_ae or csv:PATH.
    #[arg(long)]
    task: Option<String>,
    /// fedavg, fedavgm, fedadagrad, fedadam, fedyogi or scaffold.
    #[arg(long)]
    optimizer: Option<String>,
    /// natural, iid, lda:ALPHA or pachinko:ALPHA:BETA:FINE_PER_COARSE.
    #[arg(long)]
    partition: Option<String>,
    #[arg(long)]
    rounds: Option<u64>,
    #[arg(long)]
    clients_per_round: Option<usize>,
    #[arg(long)]
    total_clients: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Fixed local steps instead of epochs.
    #[arg(long)]
    local_steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    client_lr: Option<f64>,
    #[arg(long)]
    server_lr: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    /// Client lr schedule: constant, expdecay:FACTOR:PERIOD or inv_sqrt:SCALE.
    #[arg(long)]
    schedule: Option<String>,
    /// Standard deviation of the injected gradient noise.
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eval_every: Option<u64>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    /// Output directory (run, sweep) or file (bounds, partition).
    #[arg(long)]
    out: Option<String>,
}

impl ExperimentArgs {
    fn resolve(&self) -> AppResult<ExperimentConfig> {
        let base = self.config.as_deref().map(load_config).transpose()?;
        let o = Overrides {
            task: self.task.clone(),
            optimizer: self.optimizer.clone(),
            partition: self.partition.clone(),
            rounds: self.rounds,
            clients_per_round: self.clients_per_round,
            total_clients: self.total_clients,
            epochs: self.epochs,
            local_steps: self.local_steps,
            batch_size: self.batch_size,
            client_lr: self.client_lr,
            server_lr: self.server_lr,
            tau: self.tau,
            beta1: self.beta1,
            beta2: self.beta2,
            schedule: self.schedule.clone(),
            noise_std: self.noise_std,
            seed: self.seed,
            eval_every: self.eval_every,
            checkpoint_every: self.checkpoint_every,
            out: self.out.clone(),
        };
        o.apply(base)
    }
}

fn or_default(v: Vec<f64>, d: Vec<f64>) -> Vec<f64> {
    if v.is_empty() {
        d
    } else {
        v
    }
}

fn execute(cmd: Command) -> AppResult<bool> {
    let pool = Parallel::new(workers_from_env()?)?;
    match cmd {
        Command::Run { exp, resume, timing, manifest } => {
            let cfg = exp.resolve()?;
            let trace = run(&cfg, &RunOptions { timing, resume, manifest }, &pool)?;
            if let Some(last) = trace.records.last() {
                println!("rounds {} train_loss {:.6e}", trace.records.len(), last.train_loss);
            }
        }
        Command::Sweep { exp, eta_l_grid, eta_grid, tau_grid, window, seeds, select_on } => {
            let cfg = exp.resolve()?;
            let d = Grid::default();
            let grid =
                Grid { eta_l: or_default(eta_l_grid, d.eta_l), eta: or_default(eta_grid, d.eta), tau: or_default(tau_grid, d.tau) };
            let select_on = match select_on {
                Select::Train => SelectOn::TrainLoss,
                Select::Eval => SelectOn::Eval,
            };
            let runner = |c: &ExperimentConfig| simulate(c, build_task(c, None)?, &Sequential, false);
            let result = grid_sweep(&cfg, &grid, SweepOptions { window, seeds, select_on }, &pool, &runner)?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            match &cfg.out {
                Some(dir) => {
                    let dir = PathBuf::from(dir);
                    std::fs::create_dir_all(&dir).map_err(|e| AppError::io(&dir, e))?;
                    let path = dir.join("sweep.csv");
                    let f = std::fs::File::create(&path).map_err(|e| AppError::io(&path, e))?;
                    write_sweep_table(&result, f)?;
                }
                None => write_sweep_table(&result, std::io::stdout().lock())?,
            }
            match result.best_cell() {
                Some(c) => eprintln!("best eta_l {} eta {} tau {} score {:.6e}", c.eta_l, c.eta, c.tau, c.score.unwrap_or(f64::NAN)),
                None => return Err(AppError::Numerical(fedopt_core::Error::Contract("every sweep cell failed".into()))),
            }
        }
        Command::Bounds { exp, corollary, seeds, drift_seeds, slack, probe_radius } => {
            let cfg = exp.resolve()?;
            let opts = BoundsOptions { corollary, seeds, drift_seeds, slack, probe_radius, ..Default::default() };
            let report = pool.install(|| bound_report(&cfg, &opts, &pool))?;
            match &cfg.out {
                Some(p) => write_json(&PathBuf::from(p), &report)?,
                None => {
                    let text = serde_json::to_string_pretty(&report).map_err(|e| AppError::format("report", e))?;
                    writeln!(std::io::stdout(), "{text}").map_err(|e| AppError::io("stdout", e))?;
                }
            }
        }
        Command::Partition { exp } => {
            let cfg = exp.resolve()?;
            let out = cfg.out.clone().ok_or_else(|| AppError::config("out: partition needs --out FILE"))?;
            let task = build_task(&cfg, None)?;
            PartitionManifest::from_task(cfg.seed, cfg.partition, &task).save(&PathBuf::from(out))?;
        }
        Command::Check { full } => return run_checks(full, &pool),
    }
    Ok(true)
}

fn run_checks(full: bool, pool: &Parallel) -> AppResult<bool> {
    let scratch = std::env::temp_dir().join(format!("fedopt-check-{}", std::process::id()));
    let mut outcomes = vec![
        checks::fedavg_equivalence(10)?,
        checks::centralized_reduction(100)?,
        checks::scale_invariance(100)?,
        checks::drift_check(if full { 200 } else { 20 })?,
        checks::scaffold_recovery(10)?,
        checks::pachinko_partition(100, 100, 50)?,
        checks::determinism(&[1, 4], 5, &scratch)?,
        checks::gradient_check(5)?,
        checks::tuning_protocol()?,
    ];
    if full {
        outcomes.push(checks::convergence_bounds(50, 100, 10.0, pool)?);
        let grid = checks::trend_grid(true);
        outcomes.push(checks::sparse_trend(10, &grid, pool)?);
        outcomes.push(checks::heterogeneity_trend(20, &grid, pool)?);
    }
    let _ = std::fs::remove_dir_all(&scratch);
    let mut ok = true;
    for o in &outcomes {
        println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
        ok &= o.passed;
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
