//! One-hidden-layer sigmoid network with squared loss.
//!
//! Parameter layout: `W1 (hidden × input)`, `b1 (hidden)`, `W2 (output × hidden)`,
//! `b2 (output)`, all row-major and concatenated in that order.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::dataset::ClientDataset;
use super::{Model, Task};
use crate::error::{contract, Result};
use crate::math::{self, sigmoid};
use crate::numkit::ParamVector;
use crate::rng::standard_normal;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct Mlp2Spec {
    pub clients: usize,
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub examples_per_client: usize,
    /// Scale of client-specific input mean shifts.
    pub hetero: f64,
    /// Standard deviation of target noise.
    pub target_noise: f64,
    pub batch_size: usize,
}

impl Default for Mlp2Spec {
    fn default() -> Self {
        Self {
            clients: 10,
            input: 6,
            hidden: 8,
            output: 2,
            examples_per_client: 40,
            hetero: 1.0,
            target_noise: 0.05,
            batch_size: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DenseExample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MlpModel {
    input: usize,
    hidden: usize,
    output: usize,
    examples: Vec<DenseExample>,
}

struct Offsets {
    b1: usize,
    w2: usize,
    b2: usize,
    end: usize,
}

impl MlpModel {
    fn offsets(&self) -> Offsets {
        let b1 = self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.output * self.hidden;
        Offsets {
            b1,
            w2,
            b2,
            end: b2 + self.output,
        }
    }

    pub fn dim(&self) -> usize {
        self.offsets().end
    }

    fn forward(&self, x: &[f64], input: &[f64], act: &mut [f64], out: &mut [f64]) {
        let o = self.offsets();
        for j in 0..self.hidden {
            let row = &x[j * self.input..(j + 1) * self.input];
            let pre: f64 = row.iter().zip(input).map(|(w, v)| w * v).sum::<f64>() + x[o.b1 + j];
            act[j] = sigmoid(pre);
        }
        for k in 0..self.output {
            let row = &x[o.w2 + k * self.hidden..o.w2 + (k + 1) * self.hidden];
            out[k] = row.iter().zip(act.iter()).map(|(w, a)| w * a).sum::<f64>() + x[o.b2 + k];
        }
    }

    pub(crate) fn loss_grad(&self, x: &[f64], examples: &[usize], mut grad: Option<&mut [f64]>) -> f64 {
        if examples.is_empty() {
            return 0.0;
        }
        let o = self.offsets();
        let inv_n = 1.0 / examples.len() as f64;
        let mut act = vec![0.0; self.hidden];
        let mut out = vec![0.0; self.output];
        let mut resid = vec![0.0; self.output];
        let mut total = 0.0;
        for &e in examples {
            let ex = &self.examples[e];
            self.forward(x, &ex.input, &mut act, &mut out);
            for k in 0..self.output {
                resid[k] = out[k] - ex.target[k];
            }
            total += 0.5 * resid.iter().map(|r| r * r).sum::<f64>();
            let Some(g) = grad.as_deref_mut() else { continue };
            for k in 0..self.output {
                let r = resid[k] * inv_n;
                for j in 0..self.hidden {
                    g[o.w2 + k * self.hidden + j] += r * act[j];
                }
                g[o.b2 + k] += r;
            }
            for j in 0..self.hidden {
                let back: f64 = (0..self.output)
                    .map(|k| x[o.w2 + k * self.hidden + j] * resid[k])
                    .sum();
                let delta = back * act[j] * (1.0 - act[j]) * inv_n;
                for (i, v) in ex.input.iter().enumerate() {
                    g[j * self.input + i] += delta * v;
                }
                g[o.b1 + j] += delta;
            }
        }
        total * inv_n
    }
}

fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * standard_normal(rng)).collect()
}

/// Teacher-student regression. Client inputs are Gaussian around a
/// client-specific mean `hetero · μ_i`; targets come from a random teacher
/// network of the same shape plus noise. The initial point is a small
/// random network.
pub fn make_mlp2<R: Rng + ?Sized>(spec: &Mlp2Spec, rng: &mut R) -> Result<Task> {
    if spec.clients == 0 || spec.input == 0 || spec.hidden == 0 || spec.output == 0 || spec.examples_per_client == 0 {
        return Err(contract("mlp2 needs positive clients, layer sizes and examples"));
    }
    let shape = MlpModel {
        input: spec.input,
        hidden: spec.hidden,
        output: spec.output,
        examples: Vec::new(),
    };
    let d = shape.dim();
    let teacher = gaussian_vec(rng, d, 1.5 / math::sqrt(spec.input as f64));
    let mut examples = Vec::new();
    let mut clients = Vec::new();
    let mut act = vec![0.0; spec.hidden];
    let mut out = vec![0.0; spec.output];
    for _ in 0..spec.clients {
        let mean = gaussian_vec(rng, spec.input, spec.hetero);
        let start = examples.len();
        for _ in 0..spec.examples_per_client {
            let input: Vec<f64> = mean.iter().map(|m| m + standard_normal(rng)).collect();
            shape.forward(&teacher, &input, &mut act, &mut out);
            let target = out.iter().map(|v| v + spec.target_noise * standard_normal(rng)).collect();
            examples.push(DenseExample { input, target });
        }
        clients.push(ClientDataset::new((start..examples.len()).collect(), spec.batch_size)?);
    }
    let x0 = ParamVector::new(gaussian_vec(rng, d, 0.5 / math::sqrt(spec.input as f64)));
    let model = MlpModel { examples, ..shape };
    Ok(Task::from_parts(Model::Mlp2(model), clients, x0))
}
