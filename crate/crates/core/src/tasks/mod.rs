//! Synthetic client objectives with analytic gradients.
//!
//! A [`Task`] owns a model family, an example store and one
//! [`ClientDataset`] per client. Client `i`'s objective `F_i` is the mean
//! example loss over its dataset; the global objective is the uniform mean
//! `f(x) = (1/m) Σ F_i(x)`. Stochastic gradients are batch gradients plus
//! optional additive Gaussian noise with a known per-coordinate standard
//! deviation, so the local variance `σ_l² = Σ_j σ_{l,j}²` is an input rather
//! than an unknown.

mod autoencoder;
mod constants;
mod dataset;
pub mod linalg;
mod logreg;
mod mlp;
mod quadratic;

use alloc::vec;
use alloc::vec::Vec;

pub use autoencoder::{make_linear_ae, LinearAeModel, LinearAeSpec};
pub use constants::{estimate_constants, probe_box, AssumptionEstimates};
pub use dataset::ClientDataset;
pub use logreg::{
    make_sparse_logreg, sparse_logreg_from_pool, sparse_logreg_pool, LogregModel, SparseExample,
    SparseLogregSpec,
};
pub use mlp::{make_mlp2, Mlp2Spec, MlpModel};
pub use quadratic::{diagonal_quadratic, isotropic_quadratic, make_quadratic_ensemble, QuadraticModel, QuadraticSpec};

use crate::error::{Error, Result};
use crate::math;
use crate::numkit::ParamVector;
use crate::rng::standard_normal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TaskKind {
    Quadratic,
    SparseLogreg,
    Mlp2,
    LinearAe,
}

/// Which examples a loss or gradient is averaged over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Batch {
    Full,
    Index(usize),
}

#[derive(Debug, Clone)]
pub(crate) enum Model {
    Quadratic(QuadraticModel),
    SparseLogreg(LogregModel),
    Mlp2(MlpModel),
    LinearAe(LinearAeModel),
}

impl Model {
    fn dim(&self) -> usize {
        match self {
            Model::Quadratic(m) => m.dim(),
            Model::SparseLogreg(m) => m.dim(),
            Model::Mlp2(m) => m.dim(),
            Model::LinearAe(m) => m.dim(),
        }
    }

    /// Mean loss over `examples`; accumulates the mean gradient into `grad`
    /// when given (which must be zeroed by the caller).
    fn loss_grad(&self, client: usize, x: &[f64], examples: &[usize], grad: Option<&mut [f64]>) -> f64 {
        match self {
            Model::Quadratic(m) => m.loss_grad(client, x, grad),
            Model::SparseLogreg(m) => m.loss_grad(x, examples, grad),
            Model::Mlp2(m) => m.loss_grad(x, examples, grad),
            Model::LinearAe(m) => m.loss_grad(x, examples, grad),
        }
    }
}

/// A federated objective: model family, client datasets, noise knob and
/// initial point.
#[derive(Debug, Clone)]
pub struct Task {
    model: Model,
    clients: Vec<ClientDataset>,
    noise_std: Vec<f64>,
    x0: ParamVector,
}

impl Task {
    pub(crate) fn from_parts(model: Model, clients: Vec<ClientDataset>, x0: ParamVector) -> Self {
        Self {
            model,
            clients,
            noise_std: Vec::new(),
            x0,
        }
    }

    pub fn kind(&self) -> TaskKind {
        match self.model {
            Model::Quadratic(_) => TaskKind::Quadratic,
            Model::SparseLogreg(_) => TaskKind::SparseLogreg,
            Model::Mlp2(_) => TaskKind::Mlp2,
            Model::LinearAe(_) => TaskKind::LinearAe,
        }
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn clients(&self) -> &[ClientDataset] {
        &self.clients
    }

    pub fn client(&self, id: usize) -> Result<&ClientDataset> {
        self.clients.get(id).ok_or(Error::Lookup { kind: "client", id })
    }

    pub fn initial_point(&self) -> &ParamVector {
        &self.x0
    }

    pub fn set_initial_point(&mut self, x0: ParamVector) -> Result<()> {
        self.x0.check_len(&x0)?;
        self.x0 = x0;
        Ok(())
    }

    /// Uniform local noise: `σ_{l,j} = σ_l / √d`, so `Σ_j σ_{l,j}² = σ_l²`.
    pub fn with_uniform_noise(mut self, sigma_l: f64) -> Self {
        let d = self.dim();
        self.noise_std = if sigma_l > 0.0 {
            vec![sigma_l / math::sqrt(d as f64); d]
        } else {
            Vec::new()
        };
        self
    }

    pub fn with_noise_profile(mut self, std_per_coordinate: Vec<f64>) -> Result<Self> {
        if std_per_coordinate.len() != self.dim() {
            return Err(Error::Shape {
                left: std_per_coordinate.len(),
                right: self.dim(),
            });
        }
        self.noise_std = if std_per_coordinate.iter().all(|s| *s == 0.0) {
            Vec::new()
        } else {
            std_per_coordinate
        };
        Ok(self)
    }

    pub fn noise_std(&self) -> &[f64] {
        &self.noise_std
    }

    /// Exact `σ_l² = Σ_j σ_{l,j}²` of the injected noise.
    pub fn injected_noise_variance(&self) -> f64 {
        self.noise_std.iter().map(|s| s * s).sum()
    }

    pub fn model_quadratic(&self) -> Option<&QuadraticModel> {
        match &self.model {
            Model::Quadratic(m) => Some(m),
            _ => None,
        }
    }

    pub fn model_logreg(&self) -> Option<&LogregModel> {
        match &self.model {
            Model::SparseLogreg(m) => Some(m),
            _ => None,
        }
    }

    fn resolve<'a>(&'a self, client: usize, x: &ParamVector, batch: Batch) -> Result<&'a [usize]> {
        if x.len() != self.dim() {
            return Err(Error::Shape {
                left: x.len(),
                right: self.dim(),
            });
        }
        let ds = self.client(client)?;
        match batch {
            Batch::Full => Ok(ds.examples()),
            Batch::Index(b) => ds.batch(b).ok_or(Error::Lookup { kind: "batch", id: b }),
        }
    }

    /// Mean loss of client `client` over `batch`. `Batch::Full` is `F_i(x)`.
    pub fn loss(&self, client: usize, x: &ParamVector, batch: Batch) -> Result<f64> {
        let examples = self.resolve(client, x, batch)?;
        Ok(self.model.loss_grad(client, x, examples, None))
    }

    /// Exact batch gradient, without noise.
    pub fn batch_gradient(&self, client: usize, x: &ParamVector, batch: Batch) -> Result<ParamVector> {
        Ok(self.batch_loss_gradient(client, x, batch)?.1)
    }

    pub fn batch_loss_gradient(&self, client: usize, x: &ParamVector, batch: Batch) -> Result<(f64, ParamVector)> {
        let examples = self.resolve(client, x, batch)?;
        let mut g = ParamVector::zeros(self.dim());
        let loss = self.model.loss_grad(client, x, examples, Some(g.as_mut_slice()));
        Ok((loss, g))
    }

    /// Unbiased stochastic gradient: batch gradient plus injected noise.
    pub fn grad<R: rand::Rng + ?Sized>(
        &self,
        client: usize,
        x: &ParamVector,
        batch: Batch,
        rng: &mut R,
    ) -> Result<ParamVector> {
        Ok(self.loss_and_grad(client, x, batch, rng)?.1)
    }

    /// Batch loss (at `x`, before any update) together with [`Task::grad`].
    pub fn loss_and_grad<R: rand::Rng + ?Sized>(
        &self,
        client: usize,
        x: &ParamVector,
        batch: Batch,
        rng: &mut R,
    ) -> Result<(f64, ParamVector)> {
        let (loss, mut g) = self.batch_loss_gradient(client, x, batch)?;
        for (gj, sj) in g.as_mut_slice().iter_mut().zip(&self.noise_std) {
            *gj += sj * standard_normal(rng);
        }
        Ok((loss, g))
    }

    /// `f(x) = (1/m) Σ F_i(x)`.
    pub fn global_loss(&self, x: &ParamVector) -> Result<f64> {
        let m = self.num_clients();
        let mut total = 0.0;
        for i in 0..m {
            total += self.loss(i, x, Batch::Full)?;
        }
        Ok(total / m as f64)
    }

    /// `∇f(x) = (1/m) Σ ∇F_i(x)`.
    pub fn global_gradient(&self, x: &ParamVector) -> Result<ParamVector> {
        let m = self.num_clients();
        let mut g = ParamVector::zeros(self.dim());
        for i in 0..m {
            let gi = self.batch_gradient(i, x, Batch::Full)?;
            g.axpy(1.0, &gi)?;
        }
        g.scale(1.0 / m as f64);
        Ok(g)
    }

    /// Task-specific evaluation metric: accuracy for logistic regression,
    /// the global objective otherwise.
    pub fn eval_metric(&self, x: &ParamVector) -> Result<f64> {
        match &self.model {
            Model::SparseLogreg(m) => {
                if x.len() != self.dim() {
                    return Err(Error::Shape {
                        left: x.len(),
                        right: self.dim(),
                    });
                }
                let mut correct = 0usize;
                let mut total = 0usize;
                for ds in &self.clients {
                    for &e in ds.examples() {
                        correct += usize::from(m.predict(x, e) == m.example(e).label);
                        total += 1;
                    }
                }
                Ok(correct as f64 / total.max(1) as f64)
            }
            _ => self.global_loss(x),
        }
    }

    /// `f(x*)` when available in closed form.
    pub fn optimal_value(&self) -> Option<f64> {
        match &self.model {
            Model::Quadratic(m) => m.optimum().map(|(_, v)| v),
            _ => None,
        }
    }

    pub fn minimizer(&self) -> Option<ParamVector> {
        match &self.model {
            Model::Quadratic(m) => m.optimum().map(|(x, _)| x),
            _ => None,
        }
    }

    /// Smoothness constant known analytically (largest curvature eigenvalue).
    pub fn analytic_smoothness(&self) -> Option<f64> {
        match &self.model {
            Model::Quadratic(m) => Some(m.max_eigenvalue()),
            _ => None,
        }
    }
}
