//! Multinomial logistic regression over sparse bag-of-features vectors.
//!
//! Parameters are a `classes × vocab` weight matrix stored row-major, so
//! coordinate `c * vocab + f` couples class `c` with feature `f`. A batch
//! gradient is exactly zero on every feature absent from the batch.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::dataset::ClientDataset;
use super::{Model, Task};
use crate::error::{contract, Result};
use crate::math;
use crate::numkit::ParamVector;
use crate::rng::{standard_normal, symmetric_dirichlet};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SparseExample {
    pub label: usize,
    /// `(feature, value)` pairs with distinct features.
    pub features: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SparseLogregSpec {
    pub clients: usize,
    pub vocab: usize,
    pub classes: usize,
    /// Exponent `s` of the feature-frequency law `p(rank r) ∝ (r + 1)^-s`.
    pub zipf_exponent: f64,
    pub examples_per_client: usize,
    pub tokens_per_example: usize,
    /// Feature `f` belongs to topic `f mod topics`.
    pub topics: usize,
    /// Symmetric Dirichlet concentration of each client's topic mixture.
    pub topic_concentration: f64,
    /// Standard deviation of the teacher weights that generate labels.
    pub teacher_scale: f64,
    pub batch_size: usize,
}

impl Default for SparseLogregSpec {
    fn default() -> Self {
        Self {
            clients: 100,
            vocab: 2000,
            classes: 5,
            zipf_exponent: 1.2,
            examples_per_client: 50,
            tokens_per_example: 20,
            topics: 10,
            topic_concentration: 0.3,
            teacher_scale: 10.0,
            batch_size: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LogregModel {
    vocab: usize,
    classes: usize,
    examples: Vec<SparseExample>,
}

impl LogregModel {
    pub fn dim(&self) -> usize {
        self.vocab * self.classes
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn example(&self, e: usize) -> &SparseExample {
        &self.examples[e]
    }

    pub fn examples(&self) -> &[SparseExample] {
        &self.examples
    }

    fn logits(&self, x: &[f64], ex: &SparseExample, out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let row = &x[c * self.vocab..(c + 1) * self.vocab];
            *o = ex.features.iter().map(|(f, v)| row[*f] * v).sum();
        }
    }

    pub fn predict(&self, x: &[f64], e: usize) -> usize {
        let mut z = vec![0.0; self.classes];
        self.logits(x, &self.examples[e], &mut z);
        let mut best = 0;
        for c in 1..self.classes {
            if z[c] > z[best] {
                best = c;
            }
        }
        best
    }

    pub(crate) fn loss_grad(&self, x: &[f64], examples: &[usize], mut grad: Option<&mut [f64]>) -> f64 {
        if examples.is_empty() {
            return 0.0;
        }
        let inv_n = 1.0 / examples.len() as f64;
        let mut z = vec![0.0; self.classes];
        let mut total = 0.0;
        for &e in examples {
            let ex = &self.examples[e];
            self.logits(x, ex, &mut z);
            let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut norm = 0.0;
            for v in z.iter_mut() {
                *v = math::exp(*v - zmax);
                norm += *v;
            }
            total += math::ln(norm) - math::ln(z[ex.label]);
            if let Some(g) = grad.as_deref_mut() {
                for c in 0..self.classes {
                    let coeff = (z[c] / norm - if c == ex.label { 1.0 } else { 0.0 }) * inv_n;
                    let row = &mut g[c * self.vocab..(c + 1) * self.vocab];
                    for (f, v) in &ex.features {
                        row[*f] += coeff * v;
                    }
                }
            }
        }
        total * inv_n
    }
}

/// Normalized Zipf weights over `vocab` ranks.
pub fn zipf_weights(vocab: usize, exponent: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..vocab).map(|r| math::powf((r + 1) as f64, -exponent)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

fn draw_cumulative<R: Rng + ?Sized>(rng: &mut R, cum: &[f64]) -> usize {
    let total = *cum.last().expect("nonempty cumulative table");
    let u = rng.random::<f64>() * total;
    cum.partition_point(|c| *c <= u).min(cum.len() - 1)
}

struct Generator {
    vocab: usize,
    classes: usize,
    tokens: usize,
    teacher: Vec<f64>,
}

impl Generator {
    fn new<R: Rng + ?Sized>(spec: &SparseLogregSpec, rng: &mut R) -> Self {
        let teacher = (0..spec.vocab * spec.classes)
            .map(|_| spec.teacher_scale * standard_normal(rng))
            .collect();
        Self {
            vocab: spec.vocab,
            classes: spec.classes,
            tokens: spec.tokens_per_example,
            teacher,
        }
    }

    fn example<R: Rng + ?Sized>(&self, cum: &[f64], rng: &mut R) -> SparseExample {
        let mut counts: Vec<(usize, f64)> = Vec::with_capacity(self.tokens);
        for _ in 0..self.tokens {
            let f = draw_cumulative(rng, cum);
            match counts.iter_mut().find(|(g, _)| *g == f) {
                Some(entry) => entry.1 += 1.0,
                None => counts.push((f, 1.0)),
            }
        }
        counts.sort_by_key(|(f, _)| *f);
        let inv = 1.0 / self.tokens as f64;
        for c in counts.iter_mut() {
            c.1 *= inv;
        }
        let mut z: Vec<f64> = (0..self.classes)
            .map(|c| {
                let row = &self.teacher[c * self.vocab..(c + 1) * self.vocab];
                counts.iter().map(|(f, v)| row[*f] * v).sum()
            })
            .collect();
        let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for v in z.iter_mut() {
            *v = math::exp(*v - zmax);
        }
        let label = crate::rng::categorical(rng, &z);
        SparseExample {
            label,
            features: counts,
        }
    }
}

fn validate(spec: &SparseLogregSpec) -> Result<()> {
    if spec.classes < 2 || spec.vocab < spec.classes {
        return Err(contract("sparse logreg needs vocab >= classes >= 2"));
    }
    if spec.clients == 0 || spec.examples_per_client == 0 || spec.tokens_per_example == 0 || spec.topics == 0 {
        return Err(contract("sparse logreg needs clients, examples, tokens and topics >= 1"));
    }
    if !(spec.zipf_exponent >= 0.0) || !(spec.topic_concentration > 0.0) {
        return Err(contract("sparse logreg needs zipf_exponent >= 0 and topic_concentration > 0"));
    }
    Ok(())
}

/// Client-specific feature weights: Zipf base modulated by the client's
/// topic mixture, so rare features concentrate on clients favoring their topic.
fn client_feature_weights(base: &[f64], topic_mix: &[f64]) -> Vec<f64> {
    let topics = topic_mix.len();
    base.iter()
        .enumerate()
        .map(|(f, w)| w * topic_mix[f % topics])
        .collect()
}

/// Synthetic federated logistic regression. Each client draws a topic mixture
/// from a symmetric Dirichlet and samples its examples with that mixture.
pub fn make_sparse_logreg<R: Rng + ?Sized>(spec: &SparseLogregSpec, rng: &mut R) -> Result<Task> {
    validate(spec)?;
    let base = zipf_weights(spec.vocab, spec.zipf_exponent);
    let gen = Generator::new(spec, rng);
    let mut examples = Vec::with_capacity(spec.clients * spec.examples_per_client);
    let mut clients = Vec::with_capacity(spec.clients);
    for _ in 0..spec.clients {
        let mix = symmetric_dirichlet(rng, spec.topic_concentration, spec.topics);
        let cum = cumulative(&client_feature_weights(&base, &mix));
        let start = examples.len();
        for _ in 0..spec.examples_per_client {
            examples.push(gen.example(&cum, rng));
        }
        clients.push(ClientDataset::new((start..examples.len()).collect(), spec.batch_size)?);
    }
    let model = LogregModel {
        vocab: spec.vocab,
        classes: spec.classes,
        examples,
    };
    let dim = model.dim();
    Ok(Task::from_parts(Model::SparseLogreg(model), clients, ParamVector::zeros(dim)))
}

/// A pool of `size` examples drawn with a uniform topic mixture, for
/// partitioning by label.
pub fn sparse_logreg_pool<R: Rng + ?Sized>(spec: &SparseLogregSpec, size: usize, rng: &mut R) -> Result<Vec<SparseExample>> {
    validate(spec)?;
    let base = zipf_weights(spec.vocab, spec.zipf_exponent);
    let gen = Generator::new(spec, rng);
    let cum = cumulative(&base);
    Ok((0..size).map(|_| gen.example(&cum, rng)).collect())
}

/// Logistic regression over an explicit pool and client assignment
/// (`assignment[i]` lists the pool indices owned by client `i`).
pub fn sparse_logreg_from_pool(
    pool: Vec<SparseExample>,
    assignment: &[Vec<usize>],
    vocab: usize,
    classes: usize,
    batch_size: usize,
) -> Result<Task> {
    if classes < 2 || vocab == 0 {
        return Err(contract("logreg needs classes >= 2 and vocab >= 1"));
    }
    for ex in &pool {
        if ex.label >= classes {
            return Err(contract(alloc::format!("label {} outside {} classes", ex.label, classes)));
        }
        if ex.features.iter().any(|(f, _)| *f >= vocab) {
            return Err(contract("feature index outside vocabulary"));
        }
    }
    if assignment.is_empty() || assignment.iter().any(|a| a.is_empty()) {
        return Err(contract("every client needs at least one example"));
    }
    if assignment.iter().flatten().any(|&e| e >= pool.len()) {
        return Err(contract("assignment references an example outside the pool"));
    }
    let clients = assignment
        .iter()
        .map(|ids| ClientDataset::new(ids.clone(), batch_size))
        .collect::<Result<Vec<_>>>()?;
    let model = LogregModel {
        vocab,
        classes,
        examples: pool,
    };
    let dim = model.dim();
    Ok(Task::from_parts(Model::SparseLogreg(model), clients, ParamVector::zeros(dim)))
}
