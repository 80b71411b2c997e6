//! Heterogeneous quadratic ensembles: `F_i(x) = ½ (x − b_i)ᵀ A_i (x − b_i)`.

use alloc::vec::Vec;

use super::dataset::ClientDataset;
use super::linalg::{solve, SquareMatrix};
use super::{Model, Task};
use crate::error::{contract, Result};
use crate::math;
use crate::numkit::ParamVector;
use crate::rng::standard_normal;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct QuadraticSpec {
    pub clients: usize,
    pub dim: usize,
    /// Spread of client centers around the shared center; 0 gives identical clients.
    pub hetero: f64,
    /// Ratio of largest to smallest curvature eigenvalue.
    pub cond: f64,
    /// Largest curvature eigenvalue.
    pub smoothness: f64,
    /// Virtual example count per client; every example carries the same loss.
    pub examples_per_client: usize,
    pub batch_size: usize,
}

impl Default for QuadraticSpec {
    fn default() -> Self {
        Self {
            clients: 10,
            dim: 20,
            hetero: 1.0,
            cond: 10.0,
            smoothness: 1.0,
            examples_per_client: 20,
            batch_size: 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuadraticModel {
    dim: usize,
    spectrum: Vec<f64>,
    curvatures: Vec<SquareMatrix>,
    /// Index into `curvatures` for each client.
    client_curvature: Vec<usize>,
    centers: Vec<ParamVector>,
}

impl QuadraticModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.spectrum.iter().cloned().fold(0.0, f64::max)
    }

    pub fn center(&self, client: usize) -> &ParamVector {
        &self.centers[client]
    }

    pub fn curvature(&self, client: usize) -> &SquareMatrix {
        &self.curvatures[self.client_curvature[client]]
    }

    pub(crate) fn loss_grad(&self, client: usize, x: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let a = self.curvature(client);
        let b = &self.centers[client];
        let r: Vec<f64> = x.iter().zip(b.iter()).map(|(xi, bi)| xi - bi).collect();
        let mut ar = alloc::vec![0.0; self.dim];
        a.mul_vec(&r, &mut ar);
        let loss = 0.5 * r.iter().zip(&ar).map(|(p, q)| p * q).sum::<f64>();
        if let Some(g) = grad {
            g.copy_from_slice(&ar);
        }
        loss
    }

    /// Minimizer and minimum of `f = (1/m) Σ F_i`:
    /// `x* = (Σ A_i)⁻¹ Σ A_i b_i`.
    pub fn optimum(&self) -> Option<(ParamVector, f64)> {
        let d = self.dim;
        let m = self.centers.len();
        let mut sum_a = SquareMatrix::zeros(d);
        let mut rhs = alloc::vec![0.0; d];
        let mut ab = alloc::vec![0.0; d];
        for i in 0..m {
            let a = self.curvature(i);
            for r in 0..d {
                for c in 0..d {
                    sum_a.set(r, c, sum_a.get(r, c) + a.get(r, c));
                }
            }
            a.mul_vec(self.centers[i].as_slice(), &mut ab);
            for (s, v) in rhs.iter_mut().zip(&ab) {
                *s += v;
            }
        }
        let xs = ParamVector::new(solve(&sum_a, &rhs).ok()?);
        let value = (0..m)
            .map(|i| self.loss_grad(i, xs.as_slice(), None))
            .sum::<f64>()
            / m as f64;
        Some((xs, value))
    }
}

/// Quadratic ensemble with a shared curvature `A = Q Λ Qᵀ` whose spectrum is
/// log-spaced in `[smoothness / cond, smoothness]`, and centers
/// `b_i = c + hetero · z_i` around a shared Gaussian center `c`.
///
/// The `z_i` are drawn regardless of `hetero`, so two specs differing only in
/// `hetero` produce centers on the same rays from `c`. With `cond == 1` the
/// curvature is exactly `smoothness · I`. The initial point is the origin.
pub fn make_quadratic_ensemble<R: rand::Rng + ?Sized>(spec: &QuadraticSpec, rng: &mut R) -> Result<Task> {
    if spec.clients == 0 || spec.dim == 0 {
        return Err(contract("quadratic ensemble needs m >= 1 and d >= 1"));
    }
    if !(spec.cond >= 1.0) || !(spec.smoothness > 0.0) || !(spec.hetero >= 0.0) {
        return Err(contract("quadratic ensemble needs cond >= 1, smoothness > 0, hetero >= 0"));
    }
    let d = spec.dim;
    let spectrum: Vec<f64> = (0..d)
        .map(|k| {
            if d == 1 || spec.cond == 1.0 {
                spec.smoothness
            } else {
                let frac = k as f64 / (d - 1) as f64;
                spec.smoothness * math::powf(spec.cond, frac - 1.0)
            }
        })
        .collect();
    let q = SquareMatrix::random_orthogonal(d, rng);
    let curvature = if spec.cond == 1.0 {
        let mut a = SquareMatrix::identity(d);
        for i in 0..d {
            a.set(i, i, spec.smoothness);
        }
        a
    } else {
        SquareMatrix::from_spectrum(&q, &spectrum)
    };
    let shared: Vec<f64> = (0..d).map(|_| standard_normal(rng)).collect();
    let centers = (0..spec.clients)
        .map(|_| {
            let v: Vec<f64> = shared
                .iter()
                .map(|c| c + spec.hetero * standard_normal(rng))
                .collect();
            ParamVector::new(v)
        })
        .collect();
    let model = QuadraticModel {
        dim: d,
        spectrum,
        curvatures: alloc::vec![curvature],
        client_curvature: alloc::vec![0; spec.clients],
        centers,
    };
    let clients = (0..spec.clients)
        .map(|_| ClientDataset::new((0..spec.examples_per_client).collect(), spec.batch_size))
        .collect::<Result<Vec<_>>>()?;
    Ok(Task::from_parts(Model::Quadratic(model), clients, ParamVector::zeros(d)))
}

/// Quadratic task with diagonal curvatures `A_i = diag(diagonals[i])`.
pub fn diagonal_quadratic(
    diagonals: Vec<Vec<f64>>,
    centers: Vec<ParamVector>,
    examples_per_client: usize,
    batch_size: usize,
) -> Result<Task> {
    if centers.is_empty() || centers.len() != diagonals.len() {
        return Err(contract("one diagonal and one center per client, at least one client"));
    }
    let d = centers[0].len();
    if d == 0 {
        return Err(contract("quadratic dimension must be at least 1"));
    }
    for (diag, c) in diagonals.iter().zip(&centers) {
        if diag.len() != d || c.len() != d {
            return Err(contract("every diagonal and center must have the task dimension"));
        }
        if diag.iter().any(|v| !(*v >= 0.0)) {
            return Err(contract("curvature diagonal must be nonnegative"));
        }
    }
    let max_eig = diagonals.iter().flatten().cloned().fold(0.0, f64::max);
    let curvatures = diagonals
        .iter()
        .map(|diag| {
            let mut a = SquareMatrix::zeros(d);
            for (i, v) in diag.iter().enumerate() {
                a.set(i, i, *v);
            }
            a
        })
        .collect();
    let m = centers.len();
    let model = QuadraticModel {
        dim: d,
        spectrum: alloc::vec![max_eig],
        client_curvature: (0..m).collect(),
        curvatures,
        centers,
    };
    let clients = (0..m)
        .map(|_| ClientDataset::new((0..examples_per_client).collect(), batch_size))
        .collect::<Result<Vec<_>>>()?;
    Ok(Task::from_parts(Model::Quadratic(model), clients, ParamVector::zeros(d)))
}

/// Identity-curvature quadratic `F_i = ½‖x − b_i‖²`.
pub fn isotropic_quadratic(centers: Vec<ParamVector>, examples_per_client: usize, batch_size: usize) -> Result<Task> {
    let d = centers.first().map(|c| c.len()).unwrap_or(0);
    let diagonals = centers.iter().map(|_| alloc::vec![1.0; d]).collect();
    diagonal_quadratic(diagonals, centers, examples_per_client, batch_size)
}
