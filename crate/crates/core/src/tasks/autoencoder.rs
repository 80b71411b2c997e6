//! Linear bottleneck autoencoder `x ↦ D E x` with squared reconstruction loss.
//!
//! Parameter layout: encoder `E (bottleneck × dim)` then decoder
//! `D (dim × bottleneck)`, both row-major.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::dataset::ClientDataset;
use super::{Model, Task};
use crate::error::{contract, Result};
use crate::math;
use crate::numkit::ParamVector;
use crate::rng::standard_normal;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct LinearAeSpec {
    pub clients: usize,
    pub dim: usize,
    pub bottleneck: usize,
    /// Rank of the shared latent factor generating the data.
    pub latent: usize,
    pub examples_per_client: usize,
    /// Scale of client-specific mean offsets.
    pub hetero: f64,
    pub batch_size: usize,
}

impl Default for LinearAeSpec {
    fn default() -> Self {
        Self {
            clients: 10,
            dim: 8,
            bottleneck: 3,
            latent: 4,
            examples_per_client: 40,
            hetero: 0.5,
            batch_size: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearAeModel {
    dim: usize,
    bottleneck: usize,
    examples: Vec<Vec<f64>>,
}

impl LinearAeModel {
    pub fn dim(&self) -> usize {
        2 * self.dim * self.bottleneck
    }

    pub(crate) fn loss_grad(&self, x: &[f64], examples: &[usize], mut grad: Option<&mut [f64]>) -> f64 {
        if examples.is_empty() {
            return 0.0;
        }
        let (p, k) = (self.dim, self.bottleneck);
        let dec = p * k;
        let inv_n = 1.0 / examples.len() as f64;
        let mut code = vec![0.0; k];
        let mut resid = vec![0.0; p];
        let mut total = 0.0;
        for &e in examples {
            let v = &self.examples[e];
            for (c, h) in code.iter_mut().enumerate() {
                *h = x[c * p..(c + 1) * p].iter().zip(v).map(|(w, a)| w * a).sum();
            }
            for i in 0..p {
                let recon: f64 = x[dec + i * k..dec + (i + 1) * k].iter().zip(&code).map(|(w, h)| w * h).sum();
                resid[i] = recon - v[i];
            }
            total += 0.5 * resid.iter().map(|r| r * r).sum::<f64>();
            let Some(g) = grad.as_deref_mut() else { continue };
            for i in 0..p {
                let r = resid[i] * inv_n;
                for c in 0..k {
                    g[dec + i * k + c] += r * code[c];
                }
            }
            for c in 0..k {
                let back: f64 = (0..p).map(|i| x[dec + i * k + c] * resid[i]).sum::<f64>() * inv_n;
                for (j, a) in v.iter().enumerate() {
                    g[c * p + j] += back * a;
                }
            }
        }
        total * inv_n
    }
}

/// Data `x = M z + hetero · μ_i` with a shared random factor `M` of rank
/// `latent` and client offsets `μ_i`. The initial point is a small random
/// encoder/decoder pair.
pub fn make_linear_ae<R: Rng + ?Sized>(spec: &LinearAeSpec, rng: &mut R) -> Result<Task> {
    if spec.clients == 0 || spec.dim == 0 || spec.bottleneck == 0 || spec.latent == 0 || spec.examples_per_client == 0 {
        return Err(contract("linear_ae needs positive clients, sizes and examples"));
    }
    if spec.bottleneck > spec.dim {
        return Err(contract("bottleneck must not exceed the data dimension"));
    }
    let (p, r) = (spec.dim, spec.latent);
    let factor: Vec<f64> = (0..p * r).map(|_| standard_normal(rng) / math::sqrt(r as f64)).collect();
    let mut examples = Vec::new();
    let mut clients = Vec::new();
    for _ in 0..spec.clients {
        let offset: Vec<f64> = (0..p).map(|_| spec.hetero * standard_normal(rng)).collect();
        let start = examples.len();
        for _ in 0..spec.examples_per_client {
            let z: Vec<f64> = (0..r).map(|_| standard_normal(rng)).collect();
            let v: Vec<f64> = (0..p)
                .map(|i| factor[i * r..(i + 1) * r].iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + offset[i])
                .collect();
            examples.push(v);
        }
        clients.push(ClientDataset::new((start..examples.len()).collect(), spec.batch_size)?);
    }
    let model = LinearAeModel {
        dim: p,
        bottleneck: spec.bottleneck,
        examples,
    };
    let d = model.dim();
    let x0 = ParamVector::new((0..d).map(|_| 0.3 * standard_normal(rng) / math::sqrt(p as f64)).collect());
    Ok(Task::from_parts(Model::LinearAe(model), clients, x0))
}
