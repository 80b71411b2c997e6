//! Thread-pool execution of a round's cohort.

use fedopt_core::fedloop::{ClientExecutor, ClientUpdate};
use fedopt_core::Result;
use rayon::prelude::*;

use crate::error::{AppError, AppResult};

pub const WORKERS_ENV: &str = "FEDOPT_WORKERS";

/// Worker budget from `FEDOPT_WORKERS`, else the machine's parallelism.
pub fn workers_from_env() -> AppResult<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(AppError::config(format!("{WORKERS_ENV}: expected a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs clients on a dedicated rayon pool. Results come back in cohort
/// order, and each client's randomness is keyed by its id, so the output
/// does not depend on the worker count.
pub struct Parallel {
    pool: rayon::ThreadPool,
}

impl Parallel {
    pub fn new(workers: usize) -> AppResult<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| AppError::config(format!("{WORKERS_ENV}: {e}")))?;
        Ok(Self { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Run `f` inside the pool, so nested rayon calls share its budget.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }
}

impl ClientExecutor for Parallel {
    fn map(&self, ids: &[usize], job: &(dyn Fn(usize) -> Result<ClientUpdate> + Sync)) -> Vec<Result<ClientUpdate>> {
        self.pool.install(|| ids.par_iter().map(|&i| job(i)).collect())
    }
}
