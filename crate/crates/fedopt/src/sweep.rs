//! Hyperparameter grid sweeps with last-`W`-rounds selection.
//!
//! Each cell is scored by its mean training loss over rounds `[T − W, T)`,
//! averaged over seeds. The winner is the smallest score; exact ties go to
//! the smaller `η_l`, then `η`, then `τ`, which makes the choice independent
//! of enumeration order. Failed cells are reported and skipped.

use std::cmp::Ordering;
use std::io::Write;

use fedopt_core::fedloop::{ExperimentConfig, TaskSpec, Trace};
use rayon::prelude::*;

use crate::error::{AppError, AppResult};
use crate::exec::Parallel;
use crate::metrics::format_real;

pub const DEFAULT_WINDOW: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectOn {
    #[default]
    TrainLoss,
    /// Task eval metric over the same window. Accuracy-type metrics are
    /// negated so that lower is always better.
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub eta_l: Vec<f64>,
    pub eta: Vec<f64>,
    pub tau: Vec<f64>,
}

/// `10^lo, 10^(lo+step), …, 10^hi`.
pub fn log_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as i64;
    (0..=n).map(|k| 10f64.powf(lo + k as f64 * step)).collect()
}

impl Default for Grid {
    /// Half-decade `η_l ∈ [1e-3, 10^0.5]`, `η ∈ [1e-3, 10]`, and
    /// `τ ∈ {1e-5, …, 1e-1}`.
    fn default() -> Self {
        Self { eta_l: log_grid(-3.0, 0.5, 0.5), eta: log_grid(-3.0, 1.0, 0.5), tau: log_grid(-5.0, -1.0, 1.0) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub eta_l: f64,
    pub eta: f64,
    pub tau: f64,
    /// Seed-averaged window metric, `None` if the cell failed.
    pub score: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub cells: Vec<Cell>,
    pub best: Option<usize>,
    pub warnings: Vec<String>,
}

impl SweepResult {
    pub fn best_cell(&self) -> Option<&Cell> {
        self.best.map(|i| &self.cells[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub window: u64,
    pub seeds: u64,
    pub select_on: SelectOn,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { window: DEFAULT_WINDOW, seeds: 1, select_on: SelectOn::TrainLoss }
    }
}

fn cell_order(a: &Cell, b: &Cell) -> Ordering {
    let sa = a.score.expect("scored");
    let sb = b.score.expect("scored");
    sa.total_cmp(&sb)
        .then(a.eta_l.total_cmp(&b.eta_l))
        .then(a.eta.total_cmp(&b.eta))
        .then(a.tau.total_cmp(&b.tau))
}

/// Index of the winning cell among those with a score.
pub fn select_best(cells: &[Cell]) -> Option<usize> {
    cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.score.is_some())
        .min_by(|(_, a), (_, b)| cell_order(a, b))
        .map(|(i, _)| i)
}

/// Mean of the chosen metric over the last `window` records.
pub fn window_mean(trace: &Trace, window: u64, select_on: SelectOn, higher_is_better: bool) -> AppResult<f64> {
    let n = trace.records.len();
    let w = window as usize;
    if w == 0 || w > n {
        return Err(AppError::config(format!("window {window} must lie in [1, {n}]")));
    }
    let tail = &trace.records[n - w..];
    let value = match select_on {
        SelectOn::TrainLoss => tail.iter().map(|r| r.train_loss).sum::<f64>() / w as f64,
        SelectOn::Eval => {
            let vals: Vec<f64> = tail.iter().filter_map(|r| r.eval_metric).collect();
            if vals.is_empty() {
                return Err(AppError::config("no eval metric inside the window; lower eval_every"));
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            if higher_is_better {
                -mean
            } else {
                mean
            }
        }
    };
    if !value.is_finite() {
        return Err(AppError::Numerical(fedopt_core::Error::NonFinite { index: 0, context: "window metric".into() }));
    }
    Ok(value)
}

/// The grid actually swept: non-adaptive optimizers ignore `τ`, so their
/// `τ` axis collapses to the configured value.
pub fn effective_grid(base: &ExperimentConfig, grid: &Grid) -> AppResult<Grid> {
    if grid.eta_l.is_empty() || grid.eta.is_empty() || grid.tau.is_empty() {
        return Err(AppError::config("sweep grids must be nonempty"));
    }
    let r = base.resolve()?;
    let mut g = grid.clone();
    if !r.server.flavor.is_adaptive() {
        g.tau = vec![r.server.tau];
    }
    Ok(g)
}

/// Run every cell with `runner` (one call per cell and seed) in parallel on
/// `pool`, then select.
pub fn grid_sweep(
    base: &ExperimentConfig,
    grid: &Grid,
    opts: SweepOptions,
    pool: &Parallel,
    runner: &(dyn Fn(&ExperimentConfig) -> AppResult<Trace> + Sync),
) -> AppResult<SweepResult> {
    if opts.window == 0 || opts.window > base.rounds {
        return Err(AppError::config(format!("window: must lie in [1, rounds = {}], got {}", base.rounds, opts.window)));
    }
    if opts.seeds == 0 {
        return Err(AppError::config("seeds: must be at least 1"));
    }
    let g = effective_grid(base, grid)?;
    let higher_is_better = matches!(base.task, TaskSpec::SparseLogreg(_) | TaskSpec::Csv(_));
    let mut points = Vec::new();
    for &eta_l in &g.eta_l {
        for &eta in &g.eta {
            for &tau in &g.tau {
                points.push((eta_l, eta, tau));
            }
        }
    }
    let score_cell = |&(eta_l, eta, tau): &(f64, f64, f64)| -> Cell {
        let mut total = 0.0;
        for k in 0..opts.seeds {
            let mut cfg = base.clone();
            cfg.optimizer.client_lr = Some(eta_l);
            cfg.optimizer.server_lr = Some(eta);
            cfg.optimizer.tau = Some(tau);
            cfg.seed = base.seed.wrapping_add(k);
            cfg.out = None;
            match runner(&cfg).and_then(|t| window_mean(&t, opts.window, opts.select_on, higher_is_better)) {
                Ok(v) => total += v,
                Err(e) => return Cell { eta_l, eta, tau, score: None, error: Some(e.to_string()) },
            }
        }
        Cell { eta_l, eta, tau, score: Some(total / opts.seeds as f64), error: None }
    };
    let cells: Vec<Cell> = pool.install(|| points.par_iter().map(score_cell).collect());
    let warnings = cells
        .iter()
        .filter_map(|c| {
            c.error.as_ref().map(|e| format!("cell eta_l={} eta={} tau={} failed: {e}", c.eta_l, c.eta, c.tau))
        })
        .collect();
    let best = select_best(&cells);
    Ok(SweepResult { cells, best, warnings })
}

/// `eta_l,eta,tau,score,status` per cell, in grid order.
pub fn write_sweep_table<W: Write>(result: &SweepResult, out: W) -> AppResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| AppError::format("sweep", e);
    w.write_record(["eta_l", "eta", "tau", "score", "status"]).map_err(err)?;
    for (i, c) in result.cells.iter().enumerate() {
        let status = match (&c.error, result.best == Some(i)) {
            (Some(_), _) => "failed",
            (None, true) => "best",
            (None, false) => "ok",
        };
        w.write_record([
            format_real(c.eta_l),
            format_real(c.eta),
            format_real(c.tau),
            c.score.map(format_real).unwrap_or_default(),
            status.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| AppError::format("sweep", e))
}
