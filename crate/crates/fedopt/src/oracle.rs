//! Reference implementations written straight from the algorithm
//! statements, sharing nothing with the core optimizers except the task's
//! gradient oracle and the rng streams. Used by `check` and the acceptance
//! suite.

use fedopt_core::client::LocalWork;
use fedopt_core::fedloop::{sample_clients, ExperimentConfig};
use fedopt_core::rng::{client_stream, stream, Purpose};
use fedopt_core::schedule::Schedule;
use fedopt_core::server::Flavor;
use fedopt_core::tasks::{Batch, Task};
use fedopt_core::ParamVector;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{AppError, AppResult};

/// Simplified FedAvg: each sampled client runs local SGD from `x_t` and the
/// server takes the plain mean of the returned models,
/// `x_{t+1} = (1/|S|) Σ x_i`. Returns `x_0, …, x_T`.
pub fn simplified_fedavg(cfg: &ExperimentConfig, task: &Task) -> AppResult<Vec<Vec<f64>>> {
    let r = cfg.resolve()?;
    if r.client_schedule != Schedule::Constant {
        return Err(AppError::config("the reference FedAvg uses a constant client lr"));
    }
    let mut x: Vec<f64> = task.initial_point().to_vec();
    let mut traj = vec![x.clone()];
    for t in 0..r.rounds {
        let ids = sample_clients(r.m, r.s, &mut stream(r.seed, Purpose::Sampling, t, 0))?;
        let mut sum = vec![0.0; x.len()];
        for &i in &ids {
            let xi = local_sgd(task, i, &x, r.work, r.client_lr, &mut client_stream(r.seed, t, i))?;
            for (s, v) in sum.iter_mut().zip(&xi) {
                *s += v;
            }
        }
        let n = ids.len() as f64;
        x = sum.iter().map(|s| s / n).collect();
        traj.push(x.clone());
    }
    Ok(traj)
}

fn local_sgd<R: Rng>(task: &Task, client: usize, x0: &[f64], work: LocalWork, lr: f64, rng: &mut R) -> AppResult<Vec<f64>> {
    let nb = task.client(client)?.num_batches();
    let mut x = ParamVector::from(x0);
    let sgd = |b: usize, x: &mut ParamVector, rng: &mut R| -> AppResult<()> {
        let g = task.grad(client, x, Batch::Index(b), rng)?;
        for (xj, gj) in x.as_mut_slice().iter_mut().zip(g.iter()) {
            *xj -= lr * gj;
        }
        Ok(())
    };
    match work {
        LocalWork::Steps(k) => {
            for _ in 0..k {
                let b = rng.random_range(0..nb);
                sgd(b, &mut x, rng)?;
            }
        }
        LocalWork::Epochs(e) => {
            let mut order: Vec<usize> = (0..nb).collect();
            for _ in 0..e {
                order.sort_unstable();
                order.shuffle(rng);
                for &b in &order {
                    sgd(b, &mut x, rng)?;
                }
            }
        }
    }
    Ok(x.into_inner())
}

/// Hyperparameters of a centralized adaptive optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Centralized {
    pub flavor: Flavor,
    pub lr: f64,
    pub tau: f64,
    pub beta1: f64,
    pub beta2: f64,
}

/// Adagrad, Adam (no bias correction) or Yogi run on the update
/// directions `−η_l ∇f(x)`, with `v` initialized and floored at `τ²` for the
/// moving-average flavors. Returns `x_0, …, x_steps` and floor count.
pub fn centralized_adaptive(
    opt: Centralized,
    x0: &[f64],
    eta_l: f64,
    steps: usize,
    mut grad: impl FnMut(&[f64]) -> Vec<f64>,
) -> (Vec<Vec<f64>>, u64) {
    let d = x0.len();
    let mut x = x0.to_vec();
    let mut v = vec![opt.tau * opt.tau; d];
    let mut m = vec![0.0; d];
    let mut floors = 0;
    let mut traj = vec![x.clone()];
    for _ in 0..steps {
        let g = grad(&x);
        for j in 0..d {
            let dir = -eta_l * g[j];
            m[j] = opt.beta1 * m[j] + (1.0 - opt.beta1) * dir;
            let m2 = m[j] * m[j];
            v[j] = match opt.flavor {
                Flavor::Adagrad => v[j] + m2,
                Flavor::Adam => opt.beta2 * v[j] + (1.0 - opt.beta2) * m2,
                Flavor::Yogi => {
                    let s = if v[j] > m2 {
                        1.0
                    } else if v[j] < m2 {
                        -1.0
                    } else {
                        0.0
                    };
                    v[j] - (1.0 - opt.beta2) * m2 * s
                }
                Flavor::Sgd | Flavor::Sgdm => unreachable!("adaptive flavors only"),
            };
            if opt.flavor != Flavor::Adagrad && v[j] < opt.tau * opt.tau {
                v[j] = opt.tau * opt.tau;
                floors += 1;
            }
            x[j] += opt.lr * m[j] / (v[j].sqrt() + opt.tau);
        }
        traj.push(x.clone());
    }
    (traj, floors)
}

/// Coordinate max of `|a − b|` over two trajectories of equal shape.
pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    assert_eq!(a.len(), b.len(), "trajectory lengths differ");
    a.iter()
        .zip(b)
        .flat_map(|(p, q)| p.iter().zip(q).map(|(u, w)| (u - w).abs()))
        .fold(0.0, f64::max)
}

/// Largest distance in units in the last place between two trajectories.
pub fn max_ulp_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> u64 {
    let key = |v: f64| {
        let bits = v.to_bits() as i64;
        if bits < 0 {
            i64::MIN - bits
        } else {
            bits
        }
    };
    a.iter()
        .zip(b)
        .flat_map(|(p, q)| p.iter().zip(q).map(move |(u, w)| key(*u).abs_diff(key(*w))))
        .max()
        .unwrap_or(0)
}
