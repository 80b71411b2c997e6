//! Convergence-bound evaluators for adaptive server optimizers, and
//! empirical checks against run traces.
//!
//! Every `O(·)` constant is taken as 1. Checks compare a seed-averaged
//! empirical quantity plus two standard errors against `C · bound` for a
//! caller-chosen slack `C`, and report the measured ratio `C*`.

use alloc::vec::Vec;

use crate::client::local_steps_traced;
use crate::error::{contract, Result};
use crate::fedloop::Trace;
use crate::math;
use crate::numkit::ParamVector;
use crate::rng::client_stream;
use crate::tasks::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BoundKind {
    Adagrad,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundInputs {
    pub smoothness: f64,
    pub grad_bound: f64,
    pub sigma_l_sq: f64,
    pub sigma_g_sq: f64,
    pub eta_l: f64,
    pub eta: f64,
    pub tau: f64,
    pub beta2: f64,
    /// Local steps `K`.
    pub k: f64,
    /// Rounds `T`.
    pub t: f64,
    /// Clients `m`.
    pub m: f64,
    /// Dimension `d`.
    pub d: f64,
    pub f0_minus_fstar: f64,
}

impl BoundInputs {
    /// `σ² = σ_l² + 6 K σ_g²`.
    pub fn sigma_sq(&self) -> f64 {
        self.sigma_l_sq + 6.0 * self.k * self.sigma_g_sq
    }
}

/// `η_l = 1/(K L √T)`, `η = √(K m)`, `τ = G / L`.
pub fn corollary_hyperparameters(smoothness: f64, grad_bound: f64, k: f64, t: f64, m: f64) -> (f64, f64, f64) {
    (1.0 / (k * smoothness * math::sqrt(t)), math::sqrt(k * m), grad_bound / smoothness)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Conditions {
    pub condition_i: bool,
    pub condition_ii: bool,
    /// `1/(8LK)`.
    pub limit_i: f64,
    /// Upper limit on `η_l` from the second condition.
    pub limit_ii: f64,
    /// Index (0 or 1) of the binding term inside the second condition's min.
    pub binding_ii: usize,
}

pub fn check_conditions(kind: BoundKind, p: &BoundInputs) -> Conditions {
    let (l, g, tau, eta, k, t) = (p.smoothness, p.grad_bound, p.tau, p.eta, p.k, p.t);
    let limit_i = 1.0 / (8.0 * l * k);
    let (a, b, scale) = match kind {
        BoundKind::Adagrad => (
            math::powf(t, -0.1) * math::powf(tau * tau * tau / (l * l * g * g * g), 0.2),
            math::powf(t, -0.125) * math::powf(tau * tau / (l * l * l * g * eta), 0.25),
            1.0 / (3.0 * k),
        ),
        BoundKind::Adam => (
            math::sqrt(tau / (g * l)),
            math::powf(tau * tau / (g * l * l * l * eta), 0.25),
            1.0 / (6.0 * k),
        ),
    };
    let (binding_ii, inner) = if b < a { (1, b) } else { (0, a) };
    let limit_ii = scale * inner;
    Conditions {
        condition_i: p.eta_l <= limit_i,
        condition_ii: p.eta_l <= limit_ii,
        limit_i,
        limit_ii,
        binding_ii,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DriftBound {
    pub value: f64,
    /// The bound is only claimed under `η_l ≤ 1/(8LK)`.
    pub condition_i: bool,
}

/// `5Kη_l²(σ_l² + 6Kσ_g²) + 30K²η_l²‖∇f‖²`.
pub fn drift_bound(p: &BoundInputs, grad_norm_sq: f64) -> DriftBound {
    let (k, el) = (p.k, p.eta_l);
    DriftBound {
        value: 5.0 * k * el * el * p.sigma_sq() + 30.0 * k * k * el * el * grad_norm_sq,
        condition_i: p.eta_l <= 1.0 / (8.0 * p.smoothness * p.k),
    }
}

/// The drift bound with the smaller constants given in its statement:
/// `5Kη_l²(σ_l² + 2Kσ_g²) + 10K²η_l²‖∇f‖²`.
pub fn drift_bound_as_stated(p: &BoundInputs, grad_norm_sq: f64) -> f64 {
    let (k, el) = (p.k, p.eta_l);
    5.0 * k * el * el * (p.sigma_l_sq + 2.0 * k * p.sigma_g_sq) + 10.0 * k * k * el * el * grad_norm_sq
}

fn psi(p: &BoundInputs) -> f64 {
    let (el, k, l) = (p.eta_l, p.k, p.smoothness);
    p.f0_minus_fstar / p.eta + 5.0 * el * el * el * k * k * l * l * p.t / (2.0 * p.tau) * p.sigma_sq()
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdagradBound {
    pub psi: f64,
    pub psi_var: f64,
    pub psi_var_tilde: f64,
    /// `G/√T + τ/(η_l K T)`.
    pub prefactor: f64,
    /// Under the first condition only.
    pub rhs_i: f64,
    /// Under both conditions, with `Ψ̃_var`.
    pub rhs_i_and_ii: f64,
    /// `prefactor · (Ψ + min{Ψ_var, Ψ̃_var})`.
    pub rhs_min: f64,
}

pub fn adagrad_bound(p: &BoundInputs) -> AdagradBound {
    let (el, k, l, g, tau, eta, t) = (p.eta_l, p.k, p.smoothness, p.grad_bound, p.tau, p.eta, p.t);
    let psi = psi(p);
    let log_term = math::ln((tau * tau + el * el * k * k * g * g * t) / (tau * tau));
    let psi_var = p.d * (el * k * g * g + tau * eta * l) / tau * (1.0 + log_term);
    let psi_var_tilde = (2.0 * el * k * g * g + tau * eta * l) / (tau * tau)
        * (2.0 * el * el * k * t / p.m * p.sigma_l_sq + 10.0 * math::powi(el, 4) * k * k * k * l * l * t * p.sigma_sq());
    let prefactor = g / math::sqrt(t) + tau / (el * k * t);
    AdagradBound {
        psi,
        psi_var,
        psi_var_tilde,
        prefactor,
        rhs_i: prefactor * (psi + psi_var),
        rhs_i_and_ii: prefactor * (psi + psi_var_tilde),
        rhs_min: prefactor * (psi + psi_var.min(psi_var_tilde)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamBound {
    pub psi: f64,
    pub psi_var: f64,
    /// `(√β₂ η_l K G + τ)/(η_l K T)`.
    pub prefactor: f64,
    pub rhs: f64,
}

pub fn adam_bound(p: &BoundInputs) -> AdamBound {
    let (el, k, l, g, tau, eta, t) = (p.eta_l, p.k, p.smoothness, p.grad_bound, p.tau, p.eta, p.t);
    let psi = psi(p);
    let psi_var = (g + eta * l / 2.0)
        * (4.0 * el * el * k * t / (p.m * tau * tau) * p.sigma_l_sq
            + 20.0 * math::powi(el, 4) * k * k * k * l * l * t / (tau * tau) * p.sigma_sq());
    let prefactor = (math::sqrt(p.beta2) * el * k * g + tau) / (el * k * t);
    AdamBound {
        psi,
        psi_var,
        prefactor,
        rhs: prefactor * (psi + psi_var),
    }
}

/// Rate under the corollary hyperparameters; identical for both kinds.
pub fn corollary_rate(_kind: BoundKind, p: &BoundInputs) -> f64 {
    let (l, g, k, t, m) = (p.smoothness, p.grad_bound, p.k, p.t, p.m);
    let s2 = p.sigma_sq();
    let root = math::sqrt(m * k * t);
    p.f0_minus_fstar / root
        + 2.0 * p.sigma_l_sq * l / (g * g * root)
        + s2 / (g * k * t)
        + s2 * l * math::sqrt(m) / (g * g * math::sqrt(k) * math::powf(t, 1.5))
}

/// Extra variance from sampling `s` of `m` clients:
/// `6η_l²K²Tσ_g²/τ² · (1 − s/m)`.
pub fn partial_participation_term(p: &BoundInputs, s: f64) -> Result<f64> {
    if !(s >= 1.0 && s <= p.m) {
        return Err(contract("cohort size must lie in [1, m]"));
    }
    let (el, k) = (p.eta_l, p.k);
    Ok(6.0 * el * el * k * k * p.t * p.sigma_g_sq / (p.tau * p.tau) * (1.0 - s / p.m))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundComparison {
    /// Seed mean of `min_t ‖∇f(x_t)‖²`.
    pub min_grad_sq: f64,
    pub std_err: f64,
    pub bound: f64,
    pub slack: f64,
    /// `min_grad_sq + 2·std_err ≤ slack · bound`.
    pub satisfied: bool,
    /// `slack · bound − (min_grad_sq + 2·std_err)`.
    pub margin: f64,
    /// Measured `min_grad_sq / bound`.
    pub empirical_constant: f64,
}

fn min_grad_sq(trace: &Trace) -> Result<f64> {
    let mut best: Option<f64> = None;
    for r in &trace.records {
        if let Some(g) = r.grad_norm_sq {
            best = Some(best.map_or(g, |b: f64| b.min(g)));
        }
    }
    best.ok_or_else(|| contract("trace carries no gradient-norm records"))
}

/// Mean and standard error of `values`.
pub fn mean_and_std_err(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, math::sqrt(var / n))
}

/// Seed-averaged comparison of `min_t ‖∇f(x_t)‖²` against `slack · bound`.
pub fn compare_traces_to_bound(traces: &[Trace], bound: f64, slack: f64) -> Result<BoundComparison> {
    if traces.is_empty() {
        return Err(contract("need at least one trace"));
    }
    let mins = traces.iter().map(min_grad_sq).collect::<Result<Vec<_>>>()?;
    let (mean, se) = mean_and_std_err(&mins);
    let upper = mean + 2.0 * se;
    Ok(BoundComparison {
        min_grad_sq: mean,
        std_err: se,
        bound,
        slack,
        satisfied: upper <= slack * bound,
        margin: slack * bound - upper,
        empirical_constant: mean / bound,
    })
}

pub fn compare_trace_to_bound(trace: &Trace, bound: f64) -> Result<BoundComparison> {
    compare_traces_to_bound(core::slice::from_ref(trace), bound, 1.0)
}

/// `(1/m) Σ_i ‖x_{i,k} − x_t‖²` for `k = 0, …, K−1`, every client starting
/// from `x_t` with stream `(seed, round, i)`.
pub fn empirical_drift(task: &Task, x_t: &ParamVector, k: usize, eta_l: f64, seed: u64, round: u64) -> Result<Vec<f64>> {
    let m = task.num_clients();
    let mut mean = alloc::vec![0.0; k];
    for i in 0..m {
        let (_, drift) = local_steps_traced(x_t, task, i, k, eta_l, &mut client_stream(seed, round, i))?;
        for (acc, d) in mean.iter_mut().zip(drift) {
            *acc += d / m as f64;
        }
    }
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fedloop::RoundRecord;
    use alloc::vec;
    use proptest::prelude::*;

    fn base() -> BoundInputs {
        BoundInputs {
            smoothness: 1.0,
            grad_bound: 1.0,
            sigma_l_sq: 1.0,
            sigma_g_sq: 0.5,
            eta_l: 0.01,
            eta: 1.0,
            tau: 0.1,
            beta2: 0.99,
            k: 10.0,
            t: 100.0,
            m: 10.0,
            d: 20.0,
            f0_minus_fstar: 1.0,
        }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn condition_i_boundary_is_inclusive() {
        let p = BoundInputs { eta_l: 0.0125, ..base() };
        let c = check_conditions(BoundKind::Adagrad, &p);
        assert_eq!(c.limit_i, 0.0125);
        assert!(c.condition_i);
        let tiny = BoundInputs { eta_l: 1e-12, ..base() };
        let c = check_conditions(BoundKind::Adam, &tiny);
        assert!(c.condition_i && c.condition_ii);
    }

    #[test]
    fn adam_condition_hand_value() {
        let c = check_conditions(BoundKind::Adam, &base());
        assert!(close(c.limit_ii, 0.1f64.sqrt() / 60.0));
        assert!((c.limit_ii - 0.0052704).abs() < 1e-7);
    }

    #[test]
    fn drift_hand_values() {
        assert!(close(drift_bound(&base(), 4.0).value, 1.355));
        let still = BoundInputs { sigma_l_sq: 0.0, sigma_g_sq: 0.0, ..base() };
        assert_eq!(drift_bound(&still, 0.0).value, 0.0);
        // Proof-final constants dominate the stated ones.
        assert!(drift_bound_as_stated(&base(), 4.0) < drift_bound(&base(), 4.0).value);
    }

    #[test]
    fn psi_hand_value_and_shared_form() {
        let p = BoundInputs { sigma_l_sq: 31.0, sigma_g_sq: 0.0, ..base() };
        let a = adagrad_bound(&p);
        assert!(close(a.psi, 8.75));
        assert_eq!(a.psi, adam_bound(&p).psi);
        assert!(close(a.rhs_i, a.prefactor * (a.psi + a.psi_var)));
    }

    #[test]
    fn adam_variance_term_matches_scripted_oracle() {
        // σ_l² = 1 and σ² = 31 (σ_g² = 0.5, K = 10).
        let b = adam_bound(&base());
        assert!((b.psi_var - 99.0).abs() < 1e-10, "{}", b.psi_var);
        let no_beta = adam_bound(&BoundInputs { beta2: 0.0, ..base() });
        assert!(close(no_beta.prefactor, 0.1 / (0.01 * 10.0 * 100.0)));
    }

    #[test]
    fn psi_var_tilde_loses_local_term_as_m_grows() {
        let p = BoundInputs { m: 1e300, ..base() };
        let a = adagrad_bound(&p);
        let (el, k, l, g, tau, eta, t) = (p.eta_l, p.k, p.smoothness, p.grad_bound, p.tau, p.eta, p.t);
        let expected = (2.0 * el * k * g * g + tau * eta * l) / (tau * tau) * 10.0 * el.powi(4) * k.powi(3) * l * l * t * p.sigma_sq();
        assert!(close(a.psi_var_tilde, expected));
    }

    #[test]
    fn corollary_hand_value_and_kind_identity() {
        let p = BoundInputs { sigma_l_sq: 0.0, sigma_g_sq: 0.0, ..base() };
        assert!(close(corollary_rate(BoundKind::Adagrad, &p), 0.01));
        let q = base();
        assert_eq!(corollary_rate(BoundKind::Adagrad, &q), corollary_rate(BoundKind::Adam, &q));
        let far = BoundInputs { t: 1e12, ..q };
        assert!(corollary_rate(BoundKind::Adam, &far) < 1e-4);
    }

    #[test]
    fn participation_hand_values() {
        let p = base();
        assert_eq!(partial_participation_term(&p, 10.0).unwrap(), 0.0);
        assert!((partial_participation_term(&p, 1.0).unwrap() - 270.0).abs() < 1e-9);
        let big = BoundInputs { m: 100.0, ..p };
        let near_zero = 6.0 * 1e-4 * 100.0 * 100.0 * 0.5 / 0.01;
        assert!(close(partial_participation_term(&big, 50.0).unwrap(), near_zero / 2.0));
        assert!(partial_participation_term(&p, 11.0).is_err());
    }

    fn trace_with(grads: &[Option<f64>]) -> Trace {
        Trace {
            fingerprint: 0,
            seed: 0,
            records: grads
                .iter()
                .enumerate()
                .map(|(t, g)| RoundRecord {
                    round: t as u64,
                    clients: vec![0],
                    train_loss: 0.0,
                    grad_norm_sq: *g,
                    eval_metric: None,
                    floor_events: 0,
                    wall_ms: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn trace_comparisons() {
        let tr = trace_with(&[Some(3.0), None, Some(1e-20)]);
        assert!(compare_trace_to_bound(&tr, f64::INFINITY).unwrap().satisfied);
        let c = compare_trace_to_bound(&tr, 1e-3).unwrap();
        assert!(c.satisfied);
        assert_eq!(c.min_grad_sq, 1e-20);
        assert!(compare_trace_to_bound(&trace_with(&[None, None]), 1.0).is_err());
        let two = compare_traces_to_bound(&[trace_with(&[Some(1.0)]), trace_with(&[Some(3.0)])], 1.0, 10.0).unwrap();
        assert_eq!(two.min_grad_sq, 2.0);
        assert_eq!(two.empirical_constant, 2.0);
        assert!(two.satisfied);
    }

    proptest! {
        #[test]
        fn evaluators_are_monotone(scale in 1.0f64..3.0, which in 0usize..5) {
            let p = base();
            let mut q = p;
            let g0 = 4.0;
            let mut g1 = g0;
            match which {
                0 => q.eta_l *= scale,
                1 => q.k *= scale,
                2 => q.sigma_l_sq *= scale,
                3 => q.sigma_g_sq *= scale,
                _ => g1 *= scale,
            }
            prop_assert!(drift_bound(&q, g1).value >= drift_bound(&p, g0).value);
            let mut r = p;
            r.t *= scale;
            prop_assert!(psi(&r) >= psi(&p));
            let mut s = p;
            s.sigma_l_sq *= scale;
            prop_assert!(psi(&s) >= psi(&p));
        }

        #[test]
        fn full_participation_term_vanishes(el in 1e-4f64..1.0, k in 1.0f64..50.0, sg in 0.0f64..10.0, m in 1.0f64..500.0) {
            let p = BoundInputs { eta_l: el, k, sigma_g_sq: sg, m, ..base() };
            prop_assert_eq!(partial_participation_term(&p, m).unwrap(), 0.0);
        }
    }
}
