//! Server optimizers applied to the pseudo-gradient `−Δ_t`.
//!
//! The adaptive flavors share one update shape,
//! `x_{t+1} = x_t + η Δ_t / (√v_t + τ)`, and differ only in how the
//! second-moment accumulator `v_t` absorbs `Δ_t²`.

use crate::error::{contract, Result};
use crate::math;
use crate::numkit::{sign, ParamVector};

/// Fixed heavy-ball coefficient for [`Flavor::Sgdm`].
pub const SGDM_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Flavor {
    Sgd,
    Sgdm,
    Adagrad,
    Adam,
    Yogi,
}

impl Flavor {
    pub fn is_adaptive(self) -> bool {
        matches!(self, Flavor::Adagrad | Flavor::Adam | Flavor::Yogi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ServerParams {
    pub flavor: Flavor,
    pub eta: f64,
    pub tau: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl ServerParams {
    pub fn validate(&self) -> Result<()> {
        if !self.eta.is_finite() || self.eta < 0.0 {
            return Err(contract("server lr must be finite and nonnegative"));
        }
        if self.flavor.is_adaptive() && !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(contract("tau must be positive for adaptive flavors"));
        }
        if !(0.0..=1.0).contains(&self.beta1) || !(0.0..=1.0).contains(&self.beta2) {
            return Err(contract("beta1 and beta2 must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ServerState {
    pub x: ParamVector,
    pub v: ParamVector,
    /// `Δ_{t−1}` for adaptive flavors, the velocity for SGDM.
    pub momentum: ParamVector,
    pub t: u64,
    pub params: ServerParams,
    /// Total number of coordinates lifted to `τ²` so far.
    pub floor_events: u64,
    /// Abort on non-finite coordinates after every step.
    pub check_finite: bool,
}

impl ServerState {
    /// Fresh state with `v_{−1} = τ²`, `Δ_{−1} = 0`.
    pub fn new(x0: ParamVector, params: ServerParams) -> Result<Self> {
        let v0 = params.tau * params.tau;
        Self::with_initial_accumulator(x0, params, v0)
    }

    pub fn with_initial_accumulator(x0: ParamVector, params: ServerParams, v0: f64) -> Result<Self> {
        params.validate()?;
        // A few ulps of slack so that `v0 = 0.01` is accepted for `τ = 0.1`.
        let floor = params.tau * params.tau * (1.0 - 4.0 * f64::EPSILON);
        if params.flavor.is_adaptive() && !(v0 >= floor) {
            return Err(contract("initial accumulator must be at least tau^2"));
        }
        let d = x0.len();
        Ok(Self {
            x: x0,
            v: ParamVector::filled(d, v0),
            momentum: ParamVector::zeros(d),
            t: 0,
            params,
            floor_events: 0,
            check_finite: true,
        })
    }

    /// `Δ_t = β₁ Δ_{t−1} + (1 − β₁) avg`, stored back as the momentum buffer.
    pub fn apply_momentum(&mut self, avg_delta: &ParamVector) -> Result<ParamVector> {
        self.momentum.check_len(avg_delta)?;
        let b1 = self.params.beta1;
        if b1 == 0.0 {
            self.momentum = avg_delta.clone();
        } else {
            for (m, a) in self.momentum.as_mut_slice().iter_mut().zip(avg_delta.iter()) {
                *m = b1 * *m + (1.0 - b1) * a;
            }
        }
        Ok(self.momentum.clone())
    }

    /// One server update with the post-momentum `Δ_t`. Returns the number of
    /// coordinates floored at `τ²` in this step.
    pub fn step(&mut self, delta: &ParamVector) -> Result<u64> {
        self.x.check_len(delta)?;
        let p = self.params;
        let mut floored = 0u64;
        match p.flavor {
            Flavor::Sgd => self.x.axpy(p.eta, delta)?,
            Flavor::Sgdm => {
                for (u, dj) in self.momentum.as_mut_slice().iter_mut().zip(delta.iter()) {
                    *u = SGDM_MOMENTUM * *u + dj;
                }
                self.x.axpy(p.eta, &self.momentum)?;
            }
            Flavor::Adagrad | Flavor::Adam | Flavor::Yogi => {
                let floor = p.tau * p.tau;
                let x = self.x.as_mut_slice();
                let v = self.v.as_mut_slice();
                for j in 0..x.len() {
                    let d2 = delta[j] * delta[j];
                    let next = match p.flavor {
                        Flavor::Adagrad => v[j] + d2,
                        Flavor::Adam => p.beta2 * v[j] + (1.0 - p.beta2) * d2,
                        _ => v[j] - (1.0 - p.beta2) * d2 * sign(v[j] - d2),
                    };
                    v[j] = if p.flavor != Flavor::Adagrad && next < floor {
                        floored += 1;
                        floor
                    } else {
                        next
                    };
                    x[j] += p.eta * delta[j] / (math::sqrt(v[j]) + p.tau);
                }
            }
        }
        self.t += 1;
        self.floor_events += floored;
        if self.check_finite {
            self.x.ensure_finite("server step (x)")?;
            self.v.ensure_finite("server step (v)")?;
        }
        Ok(floored)
    }

    /// [`apply_momentum`](Self::apply_momentum) for adaptive flavors, then
    /// [`step`](Self::step). SGD and SGDM consume the raw average.
    pub fn update(&mut self, avg_delta: &ParamVector) -> Result<u64> {
        if self.params.flavor.is_adaptive() {
            let d = self.apply_momentum(avg_delta)?;
            self.step(&d)
        } else {
            self.step(avg_delta)
        }
    }
}
