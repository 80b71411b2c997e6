//! Single-experiment driver: task construction, execution, checkpoints and
//! metric files.
//!
//! With an output directory the run writes `config.json` (the effective
//! config), `metrics.csv` and, when `checkpoint_every` is set,
//! `checkpoint.json`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use fedopt_core::fedloop::{ClientExecutor, ExperimentConfig, Simulation, Trace};
use fedopt_core::tasks::Task;

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::error::{AppError, AppResult};
use crate::io::write_json;
use crate::manifest::PartitionManifest;
use crate::metrics::write_metrics_file;
use crate::task::build_task;

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Fill `wall_ms`. Off by default so metric files are reproducible.
    pub timing: bool,
    /// Continue from `checkpoint.json` in the output directory if present.
    pub resume: bool,
    pub manifest: Option<PathBuf>,
}

/// Run `task` under `cfg` to completion without touching the filesystem.
pub fn simulate(cfg: &ExperimentConfig, task: Task, exec: &dyn ClientExecutor, timing: bool) -> AppResult<Trace> {
    let mut sim = Simulation::new(cfg, task)?;
    drive(&mut sim, exec, timing, |_| Ok(()))?;
    Ok(sim.into_trace())
}

fn drive(
    sim: &mut Simulation,
    exec: &dyn ClientExecutor,
    timing: bool,
    mut after_round: impl FnMut(&Simulation) -> AppResult<()>,
) -> AppResult<()> {
    while !sim.is_done() {
        let start = Instant::now();
        sim.step(exec)?;
        if timing {
            sim.set_last_wall_ms(start.elapsed().as_millis() as u64);
        }
        after_round(sim)?;
    }
    Ok(())
}

/// Build, run and persist one experiment.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions, exec: &dyn ClientExecutor) -> AppResult<Trace> {
    let manifest = opts.manifest.as_deref().map(PartitionManifest::load).transpose()?;
    let task = build_task(cfg, manifest.as_ref())?;
    let out = cfg.out.as_deref().map(Path::new);
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    let ck_path = out.map(|d| d.join(CHECKPOINT_FILE));
    let mut sim = match &ck_path {
        Some(p) if opts.resume && p.exists() => Simulation::resume(cfg, task, load_checkpoint(p)?)
            .map_err(|e| AppError::config(format!("resume: {}: {e}", p.display())))?,
        _ => Simulation::new(cfg, task)?,
    };
    // Written only once a resume has been accepted, so a refused one leaves the old config.
    if let Some(dir) = out {
        write_json(&dir.join(CONFIG_FILE), cfg)?;
    }
    let every = cfg.checkpoint_every;
    let result = drive(&mut sim, exec, opts.timing, |sim| {
        if let (Some(n), Some(p)) = (every, &ck_path) {
            if sim.round() % n == 0 {
                save_checkpoint(p, &sim.checkpoint())?;
            }
        }
        Ok(())
    });
    // Metrics are written even when the run aborts, covering the finished rounds.
    if let Some(dir) = out {
        write_metrics_file(&sim.trace().records, &dir.join(METRICS_FILE))?;
        if let (Some(_), Some(p)) = (every, &ck_path) {
            if result.is_ok() {
                save_checkpoint(p, &sim.checkpoint())?;
            }
        }
    }
    result?;
    Ok(sim.into_trace())
}
