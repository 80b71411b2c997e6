//! Partition manifests: which pool examples each client holds.

use std::collections::BTreeMap;
use std::path::Path;

use fedopt_core::fedloop::PartitionSpec;
use fedopt_core::tasks::Task;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::io::{read_json, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionManifest {
    pub seed: u64,
    pub partition: PartitionSpec,
    /// Client id → example indices into the task's pool.
    pub clients: BTreeMap<usize, Vec<usize>>,
}

impl PartitionManifest {
    pub fn from_assignment(seed: u64, partition: PartitionSpec, parts: &[Vec<usize>]) -> Self {
        Self { seed, partition, clients: parts.iter().cloned().enumerate().collect() }
    }

    /// Record the split a built task already carries.
    pub fn from_task(seed: u64, partition: PartitionSpec, task: &Task) -> Self {
        let parts: Vec<Vec<usize>> = task.clients().iter().map(|c| c.examples().to_vec()).collect();
        Self::from_assignment(seed, partition, &parts)
    }

    /// Per-client index lists ordered by id. Ids must be exactly `0..m` and
    /// no example may appear twice.
    pub fn assignment(&self) -> AppResult<Vec<Vec<usize>>> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::with_capacity(self.clients.len());
        for (expected, (&id, examples)) in self.clients.iter().enumerate() {
            if id != expected {
                return Err(AppError::format("manifest.clients", format!("client ids must be 0..m, missing {expected}")));
            }
            if examples.is_empty() {
                return Err(AppError::format(format!("manifest.clients.{id}"), "client has no examples"));
            }
            for &e in examples {
                if !seen.insert(e) {
                    return Err(AppError::format(format!("manifest.clients.{id}"), format!("example {e} assigned twice")));
                }
            }
            out.push(examples.clone());
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> AppResult<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        read_json(path)
    }
}
