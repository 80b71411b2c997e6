//! Deterministic RNG streams.
//!
//! Every random quantity in a run is drawn from a ChaCha8 stream keyed by
//! `(seed, purpose, round, index)`. Client work in a round therefore does
//! not depend on how many threads execute it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use alloc::vec::Vec;

pub type Stream = ChaCha8Rng;

/// Stream purposes. Distinct purposes never share key material.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    TaskBuild = 1,
    Partition = 2,
    Sampling = 3,
    Client = 4,
    Probe = 5,
    Init = 6,
}

/// Stream keyed by `(seed, purpose, round, index)`.
pub fn stream(seed: u64, purpose: Purpose, round: u64, index: u64) -> Stream {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
    key[16..24].copy_from_slice(&round.to_le_bytes());
    key[24..32].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

pub fn client_stream(seed: u64, round: u64, client: usize) -> Stream {
    stream(seed, Purpose::Client, round, client as u64)
}

pub fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Sample from a symmetric Dirichlet with `k` categories.
///
/// Built from normalized Gamma draws. `k == 1` returns `[1.0]`. If every
/// Gamma draw underflows to zero (possible for tiny concentrations) the
/// uniform distribution is returned.
pub fn symmetric_dirichlet<R: rand::Rng + ?Sized>(rng: &mut R, concentration: f64, k: usize) -> Vec<f64> {
    if k == 0 {
        return Vec::new();
    }
    if k == 1 {
        return alloc::vec![1.0];
    }
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    let mut draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return alloc::vec![1.0 / k as f64; k];
    }
    for d in draws.iter_mut() {
        *d /= total;
    }
    draws
}

/// Index drawn from unnormalized nonnegative weights.
///
/// Falls back to a uniform choice when every weight is zero.
pub fn categorical<R: rand::Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return rng.random_range(0..weights.len());
    }
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    // Rounding can leave u marginally above the last cumulative edge.
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(7, Purpose::Client, 3, 1).random();
        let b: u64 = stream(7, Purpose::Client, 3, 1).random();
        let c: u64 = stream(7, Purpose::Client, 3, 2).random();
        let d: u64 = stream(7, Purpose::Sampling, 3, 1).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn dirichlet_sums_to_one() {
        let mut rng = stream(1, Purpose::Partition, 0, 0);
        for &alpha in &[0.1, 1.0, 10.0, 1e6] {
            let p = symmetric_dirichlet(&mut rng, alpha, 20);
            let s: f64 = p.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|v| *v >= 0.0));
        }
        assert_eq!(symmetric_dirichlet(&mut rng, 0.1, 1), alloc::vec![1.0]);
    }

    #[test]
    fn categorical_respects_zero_weights() {
        let mut rng = stream(2, Purpose::Partition, 0, 0);
        for _ in 0..1000 {
            let i = categorical(&mut rng, &[0.0, 0.3, 0.0, 0.7]);
            assert!(i == 1 || i == 3);
        }
    }
}
