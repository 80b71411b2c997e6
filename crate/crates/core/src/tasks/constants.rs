//! Empirical estimates of the smoothness, gradient-bound and variance
//! constants over a set of probe points.

use alloc::vec::Vec;

use rand::Rng;

use super::{Batch, Task};
use crate::error::{contract, Result};
use crate::numkit::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AssumptionEstimates {
    /// Smoothness `L`.
    pub smoothness: f64,
    /// Largest observed stochastic-gradient coordinate `max |[∇f_i(x, z)]_j|`.
    pub grad_bound: f64,
    /// Largest observed stochastic-gradient Euclidean norm.
    pub grad_norm_bound: f64,
    /// `σ_l² = Σ_j σ_{l,j}²`, maximized over probes and clients.
    pub sigma_l_sq: f64,
    /// `σ_g² = (1/m) Σ_i ‖∇F_i(x) − ∇f(x)‖²`, maximized over probes.
    pub sigma_g_sq: f64,
}

/// `count` points drawn uniformly from the box `center ± radius`.
pub fn probe_box<R: Rng + ?Sized>(center: &ParamVector, radius: f64, count: usize, rng: &mut R) -> Vec<ParamVector> {
    (0..count)
        .map(|_| {
            let v = center
                .iter()
                .map(|c| c + radius * (2.0 * rng.random::<f64>() - 1.0))
                .collect::<Vec<_>>();
            ParamVector::new(v)
        })
        .collect()
}

/// Estimate `L`, `G`, `σ_l²`, `σ_g²` at `probes`.
///
/// For quadratic tasks `L` is the analytic largest eigenvalue; otherwise it
/// is the largest observed ratio `‖∇F_i(x) − ∇F_i(y)‖ / ‖x − y‖` over probe
/// pairs and clients. Each probe draws `samples_per_probe` stochastic
/// gradients per client (uniform batch plus injected noise).
pub fn estimate_constants<R: Rng + ?Sized>(
    task: &Task,
    probes: &[ParamVector],
    samples_per_probe: usize,
    rng: &mut R,
) -> Result<AssumptionEstimates> {
    if probes.len() < 2 {
        return Err(contract("estimate_constants needs at least 2 probes"));
    }
    if samples_per_probe < 2 {
        return Err(contract("estimate_constants needs at least 2 samples per probe"));
    }
    let m = task.num_clients();
    let d = task.dim();

    // Full client gradients at every probe: full[p][i].
    let mut full: Vec<Vec<ParamVector>> = Vec::with_capacity(probes.len());
    for x in probes {
        let per_client = (0..m)
            .map(|i| task.batch_gradient(i, x, Batch::Full))
            .collect::<Result<Vec<_>>>()?;
        full.push(per_client);
    }

    let smoothness = match task.analytic_smoothness() {
        Some(l) => l,
        None => {
            let mut best = 0.0f64;
            for p in 0..probes.len() {
                for q in p + 1..probes.len() {
                    let dx = probes[p].dist_sq(&probes[q])?;
                    if dx == 0.0 {
                        continue;
                    }
                    for (gp, gq) in full[p].iter().zip(&full[q]) {
                        let dg = gp.dist_sq(gq)?;
                        best = best.max(libm::sqrt(dg / dx));
                    }
                }
            }
            best
        }
    };

    let mut sigma_g_sq = 0.0f64;
    for per_client in &full {
        let mut mean = ParamVector::zeros(d);
        for g in per_client {
            mean.axpy(1.0 / m as f64, g)?;
        }
        let spread: f64 = per_client
            .iter()
            .map(|g| g.dist_sq(&mean))
            .sum::<Result<f64>>()?
            / m as f64;
        sigma_g_sq = sigma_g_sq.max(spread);
    }

    let mut grad_bound = 0.0f64;
    let mut grad_norm_bound = 0.0f64;
    let mut sigma_l_sq = 0.0f64;
    for x in probes {
        for i in 0..m {
            let batches = task.client(i)?.num_batches();
            let samples = (0..samples_per_probe)
                .map(|_| {
                    let b = rng.random_range(0..batches);
                    task.grad(i, x, Batch::Index(b), rng)
                })
                .collect::<Result<Vec<_>>>()?;
            for g in &samples {
                grad_bound = grad_bound.max(g.max_abs());
                grad_norm_bound = grad_norm_bound.max(g.norm());
            }
            let n = samples.len() as f64;
            let mut var_sum = 0.0;
            for j in 0..d {
                let mean = samples.iter().map(|g| g[j]).sum::<f64>() / n;
                var_sum += samples.iter().map(|g| (g[j] - mean) * (g[j] - mean)).sum::<f64>() / (n - 1.0);
            }
            sigma_l_sq = sigma_l_sq.max(var_sum);
        }
    }

    Ok(AssumptionEstimates {
        smoothness,
        grad_bound,
        grad_norm_bound,
        sigma_l_sq,
        sigma_g_sq,
    })
}
