use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{contract, Result};

/// One client's examples (indices into the task's example store) cut into
/// consecutive batches of `batch_size`. The last batch keeps the remainder.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClientDataset {
    examples: Vec<usize>,
    batch_size: usize,
    batches: Vec<Range<usize>>,
}

impl ClientDataset {
    pub fn new(examples: Vec<usize>, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(contract("batch size must be at least 1"));
        }
        let n = examples.len();
        let batches = (0..n)
            .step_by(batch_size)
            .map(|start| start..(start + batch_size).min(n))
            .collect();
        Ok(Self {
            examples,
            batch_size,
            batches,
        })
    }

    /// `n_i`
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn num_batches(&self) -> usize {
        self.batches.len()
    }

    pub fn examples(&self) -> &[usize] {
        &self.examples
    }

    pub fn batch(&self, b: usize) -> Option<&[usize]> {
        self.batches.get(b).map(|r| &self.examples[r.clone()])
    }

    pub fn batch_sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.batches.iter().map(|r| r.len())
    }
}
