//! Task construction on top of the core generators: CSV sources and
//! manifest-driven re-splits.

use std::path::Path;

use fedopt_core::fedloop::{self, partition_pool, ExperimentConfig, TaskSpec};
use fedopt_core::tasks::{sparse_logreg_from_pool, Task};

use crate::dataset::load_dataset;
use crate::error::{AppError, AppResult};
use crate::manifest::PartitionManifest;

/// Build the configured task. With a manifest, the pool is re-split exactly
/// as recorded instead of by the configured partitioner.
pub fn build_task(cfg: &ExperimentConfig, manifest: Option<&PartitionManifest>) -> AppResult<Task> {
    let r = cfg.resolve()?;
    match &r.task {
        TaskSpec::Csv(spec) => {
            let pool = load_dataset(Path::new(&spec.path))?;
            let parts = match manifest {
                Some(m) => m.assignment()?,
                None => {
                    let per_client = pool.examples.len() / r.m;
                    if per_client == 0 {
                        return Err(AppError::config(format!(
                            "task.clients: {} clients but only {} examples",
                            r.m,
                            pool.examples.len()
                        )));
                    }
                    partition_pool(&pool.labels(), r.partition, r.m, per_client, r.seed)?
                }
            };
            check_client_count(&parts, r.m)?;
            let task = sparse_logreg_from_pool(pool.examples, &parts, pool.vocab, pool.classes, spec.batch_size)?;
            Ok(task.with_uniform_noise(r.noise_std))
        }
        TaskSpec::SparseLogreg(spec) => {
            let task = fedloop::build_task(&r)?;
            let Some(m) = manifest else { return Ok(task) };
            let parts = m.assignment()?;
            check_client_count(&parts, r.m)?;
            let pool = task.model_logreg().expect("sparse_logreg task").examples().to_vec();
            let task = sparse_logreg_from_pool(pool, &parts, spec.vocab, spec.classes, spec.batch_size)?;
            Ok(task.with_uniform_noise(r.noise_std))
        }
        _ if manifest.is_some() => Err(AppError::config("partition manifests apply to sparse_logreg and csv tasks only")),
        _ => Ok(fedloop::build_task(&r)?),
    }
}

fn check_client_count(parts: &[Vec<usize>], m: usize) -> AppResult<()> {
    if parts.len() != m {
        return Err(AppError::config(format!("manifest holds {} clients, config expects {m}", parts.len())));
    }
    Ok(())
}
