//! Client-side local training.
//!
//! Three entry points share one SGD loop: `K` steps on uniformly drawn
//! batches, `E` epochs over the batch list (reshuffled each epoch), and the
//! SCAFFOLD variant whose gradients are corrected by `c − c_i`.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{contract, Result};
use crate::numkit::ParamVector;
use crate::tasks::{Batch, Task};

/// Amount of local work per round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LocalWork {
    /// `K` SGD steps, each on a uniformly drawn batch.
    Steps(usize),
    /// `E` passes over the client's batches.
    Epochs(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalResult {
    /// `Δ_i = x_i − x_t`.
    pub delta: ParamVector,
    /// `n_i`, the client's example count.
    pub examples: usize,
    pub steps_taken: usize,
    /// Mean of batch losses at the iterate before each step.
    pub train_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaffoldResult {
    pub local: LocalResult,
    /// `Δc_i = c_i⁺ − c_i`.
    pub delta_c: ParamVector,
    pub c_i_new: ParamVector,
}

/// Server variate `c` and lazily initialized client variates `c_i`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ControlVariates {
    pub c: ParamVector,
    pub client: Vec<Option<ParamVector>>,
}

impl ControlVariates {
    /// `c = 0`, every `c_i` unset.
    pub fn new(dim: usize, clients: usize) -> Self {
        Self {
            c: ParamVector::zeros(dim),
            client: alloc::vec![None; clients],
        }
    }

    /// `c_i`, or `c` for a client that has never been sampled.
    pub fn client_variate(&self, i: usize) -> ParamVector {
        match self.client.get(i) {
            Some(Some(ci)) => ci.clone(),
            _ => self.c.clone(),
        }
    }

    pub fn set_client(&mut self, i: usize, ci: ParamVector) {
        if i >= self.client.len() {
            self.client.resize(i + 1, None);
        }
        self.client[i] = Some(ci);
    }

    /// `c ← c + (|S| / m) Δc`.
    pub fn absorb(&mut self, delta_c: &ParamVector, cohort: usize, total: usize) -> Result<()> {
        self.c.axpy(cohort as f64 / total as f64, delta_c)
    }
}

/// Shared SGD loop. `observe(k, x_k)` is called before each step `k` with
/// the current local iterate.
#[allow(clippy::too_many_arguments)]
fn sgd_loop<R: Rng + ?Sized>(
    x_t: &ParamVector,
    task: &Task,
    client: usize,
    work: LocalWork,
    eta_l: f64,
    correction: Option<&ParamVector>,
    rng: &mut R,
    observe: &mut dyn FnMut(usize, &ParamVector),
) -> Result<LocalResult> {
    let ds = task.client(client)?;
    if ds.is_empty() {
        return Err(contract("client dataset is empty"));
    }
    if !(eta_l >= 0.0) || !eta_l.is_finite() {
        return Err(contract("client lr must be finite and nonnegative"));
    }
    let nb = ds.num_batches();
    let mut x = x_t.clone();
    let mut loss_sum = 0.0;
    let mut k = 0usize;
    let mut step = |b: usize, x: &mut ParamVector, rng: &mut R| -> Result<()> {
        observe(k, x);
        let (loss, g) = task.loss_and_grad(client, x, Batch::Index(b), rng)?;
        loss_sum += loss;
        let xs = x.as_mut_slice();
        match correction {
            Some(corr) => {
                for j in 0..xs.len() {
                    xs[j] -= eta_l * (g[j] + corr[j]);
                }
            }
            None => {
                for j in 0..xs.len() {
                    xs[j] -= eta_l * g[j];
                }
            }
        }
        k += 1;
        Ok(())
    };
    match work {
        LocalWork::Steps(steps) => {
            if steps == 0 {
                return Err(contract("local steps K must be at least 1"));
            }
            for _ in 0..steps {
                let b = rng.random_range(0..nb);
                step(b, &mut x, rng)?;
            }
        }
        LocalWork::Epochs(epochs) => {
            if epochs == 0 {
                return Err(contract("local epochs E must be at least 1"));
            }
            let mut order: Vec<usize> = (0..nb).collect();
            for _ in 0..epochs {
                order.sort_unstable();
                order.shuffle(rng);
                for &b in &order {
                    step(b, &mut x, rng)?;
                }
            }
        }
    }
    let steps_taken = k;
    let train_loss = loss_sum / steps_taken as f64;
    for (xj, x0) in x.as_mut_slice().iter_mut().zip(x_t.iter()) {
        *xj -= x0;
    }
    Ok(LocalResult {
        delta: x,
        examples: ds.len(),
        steps_taken,
        train_loss,
    })
}

/// `K` SGD steps on uniformly drawn batches.
pub fn local_steps<R: Rng + ?Sized>(
    x_t: &ParamVector,
    task: &Task,
    client: usize,
    k: usize,
    eta_l: f64,
    rng: &mut R,
) -> Result<LocalResult> {
    sgd_loop(x_t, task, client, LocalWork::Steps(k), eta_l, None, rng, &mut |_, _| {})
}

/// [`local_steps`] that also returns `‖x_{i,k} − x_t‖²` for `k = 0, …, K−1`.
pub fn local_steps_traced<R: Rng + ?Sized>(
    x_t: &ParamVector,
    task: &Task,
    client: usize,
    k: usize,
    eta_l: f64,
    rng: &mut R,
) -> Result<(LocalResult, Vec<f64>)> {
    let mut drift = Vec::with_capacity(k);
    let mut observe = |_: usize, x: &ParamVector| {
        drift.push(x.dist_sq(x_t).unwrap_or(f64::NAN));
    };
    let res = sgd_loop(x_t, task, client, LocalWork::Steps(k), eta_l, None, rng, &mut observe)?;
    Ok((res, drift))
}

/// `E` passes over the client's batch list, shuffled per epoch.
pub fn local_epochs<R: Rng + ?Sized>(
    x_t: &ParamVector,
    task: &Task,
    client: usize,
    epochs: usize,
    eta_l: f64,
    rng: &mut R,
) -> Result<LocalResult> {
    sgd_loop(x_t, task, client, LocalWork::Epochs(epochs), eta_l, None, rng, &mut |_, _| {})
}

/// Either [`local_steps`] or [`local_epochs`].
pub fn local_train<R: Rng + ?Sized>(
    x_t: &ParamVector,
    task: &Task,
    client: usize,
    work: LocalWork,
    eta_l: f64,
    rng: &mut R,
) -> Result<LocalResult> {
    sgd_loop(x_t, task, client, work, eta_l, None, rng, &mut |_, _| {})
}

/// SCAFFOLD (Option II) local work: steps with `g + (c − c_i)`, then
/// `c_i⁺ = c_i − c + (S η_l)⁻¹ (x_t − x_i)` where `S` is the step count.
#[allow(clippy::too_many_arguments)]
pub fn scaffold_local<R: Rng + ?Sized>(
    x_t: &ParamVector,
    task: &Task,
    client: usize,
    work: LocalWork,
    eta_l: f64,
    c: &ParamVector,
    c_i: &ParamVector,
    rng: &mut R,
) -> Result<ScaffoldResult> {
    if eta_l == 0.0 {
        return Err(contract("SCAFFOLD variate update divides by the client lr; eta_l must be nonzero"));
    }
    x_t.check_len(c)?;
    x_t.check_len(c_i)?;
    let mut correction = c.clone();
    correction.axpy(-1.0, c_i)?;
    let local = sgd_loop(x_t, task, client, work, eta_l, Some(&correction), rng, &mut |_, _| {})?;
    let inv = 1.0 / (local.steps_taken as f64 * eta_l);
    let mut c_i_new = ParamVector::zeros(x_t.len());
    let mut delta_c = ParamVector::zeros(x_t.len());
    for j in 0..x_t.len() {
        // x_t − x_i = −Δ_i
        c_i_new[j] = c_i[j] - c[j] - inv * local.delta[j];
        delta_c[j] = c_i_new[j] - c_i[j];
    }
    Ok(ScaffoldResult { local, delta_c, c_i_new })
}
