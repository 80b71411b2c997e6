//! Dense vector arithmetic shared by every optimizer.
//!
//! All operations are coordinate-wise on `f64`. Binary operations require
//! equal lengths and report [`Error::Shape`] otherwise; operations that
//! could leave the real line (square root of a negative, division by zero)
//! report [`Error::Domain`].

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, Index, IndexMut};

use crate::error::{Error, Result};
use crate::math;

/// Tolerance on `Σ w_i = 1` accepted by [`weighted_sum`].
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Flat vector of model parameters.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct ParamVector(Vec<f64>);

/// Unary coordinate-wise maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unary {
    Square,
    Sqrt,
    Sign,
}

/// Binary coordinate-wise combinations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binary {
    Add,
    Sub,
    Div,
    /// `alpha * a + beta * b`
    ScaledAdd { alpha: f64, beta: f64 },
}

/// Mathematical sign with `sign(0) = 0`.
#[inline]
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Self(vec![value; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> core::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn check_len(&self, other: &ParamVector) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Shape {
                left: self.len(),
                right: other.len(),
            });
        }
        Ok(())
    }

    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        self.check_len(other)?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.norm_sq())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn dist_sq(&self, other: &ParamVector) -> Result<f64> {
        self.check_len(other)?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &ParamVector) -> Result<()> {
        self.check_len(other)?;
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in self.0.iter_mut() {
            *a *= alpha;
        }
    }

    pub fn scaled(&self, alpha: f64) -> ParamVector {
        ParamVector(self.0.iter().map(|a| alpha * a).collect())
    }

    /// First non-finite coordinate, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.0.iter().position(|v| !v.is_finite())
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        match self.first_non_finite() {
            Some(index) => Err(Error::NonFinite {
                index,
                context: context.to_string(),
            }),
            None => Ok(()),
        }
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

impl From<&[f64]> for ParamVector {
    fn from(values: &[f64]) -> Self {
        Self(values.to_vec())
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ParamVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

pub fn elementwise(kind: Unary, a: &ParamVector) -> Result<ParamVector> {
    let out: Vec<f64> = match kind {
        Unary::Square => a.0.iter().map(|v| v * v).collect(),
        Unary::Sqrt => {
            if let Some(i) = a.0.iter().position(|v| *v < 0.0) {
                return Err(Error::Domain(format!(
                    "sqrt of negative entry {} at coordinate {i}",
                    a.0[i]
                )));
            }
            a.0.iter().map(|v| math::sqrt(*v)).collect()
        }
        Unary::Sign => a.0.iter().map(|v| sign(*v)).collect(),
    };
    Ok(ParamVector(out))
}

pub fn combine(kind: Binary, a: &ParamVector, b: &ParamVector) -> Result<ParamVector> {
    a.check_len(b)?;
    let pairs = a.0.iter().zip(&b.0);
    let out: Vec<f64> = match kind {
        Binary::Add => pairs.map(|(x, y)| x + y).collect(),
        Binary::Sub => pairs.map(|(x, y)| x - y).collect(),
        Binary::Div => {
            if let Some(i) = b.0.iter().position(|v| *v == 0.0) {
                return Err(Error::Domain(format!("zero divisor at coordinate {i}")));
            }
            pairs.map(|(x, y)| x / y).collect()
        }
        Binary::ScaledAdd { alpha, beta } => pairs.map(|(x, y)| alpha * x + beta * y).collect(),
    };
    Ok(ParamVector(out))
}

/// `Σ w_i v_i`, with the weights required to sum to one.
pub fn weighted_sum(vectors: &[&ParamVector], weights: &[f64]) -> Result<ParamVector> {
    if vectors.is_empty() {
        return Err(Error::Contract("weighted_sum of an empty list".into()));
    }
    if vectors.len() != weights.len() {
        return Err(Error::Shape {
            left: vectors.len(),
            right: weights.len(),
        });
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
        return Err(Error::Contract(format!("negative weight {w}")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::Contract(format!("weights sum to {total}, expected 1")));
    }
    let dim = vectors[0].len();
    let mut out = ParamVector::zeros(dim);
    for (v, w) in vectors.iter().zip(weights) {
        out.axpy(*w, v)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::from(v)
    }

    #[test]
    fn unary_examples() {
        assert_eq!(elementwise(Unary::Square, &pv(&[-2.0, 3.0])).unwrap(), pv(&[4.0, 9.0]));
        assert_eq!(elementwise(Unary::Sqrt, &pv(&[4.0, 0.0])).unwrap(), pv(&[2.0, 0.0]));
        assert_eq!(
            elementwise(Unary::Sign, &pv(&[-0.5, 0.0, 7.0])).unwrap(),
            pv(&[-1.0, 0.0, 1.0])
        );
        assert!(matches!(
            elementwise(Unary::Sqrt, &pv(&[1.0, -1.0])),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn binary_examples() {
        assert_eq!(combine(Binary::Div, &pv(&[3.0, 8.0]), &pv(&[2.0, 4.0])).unwrap(), pv(&[1.5, 2.0]));
        let mix = Binary::ScaledAdd { alpha: 0.9, beta: 0.1 };
        assert_eq!(combine(mix, &pv(&[10.0, 10.0]), &pv(&[0.0, 0.0])).unwrap(), pv(&[9.0, 9.0]));
        assert_eq!(combine(Binary::Sub, &pv(&[1.0, 1.0]), &pv(&[1.0, 1.0])).unwrap(), pv(&[0.0, 0.0]));
        assert!(matches!(
            combine(Binary::Add, &pv(&[1.0]), &pv(&[1.0, 2.0])),
            Err(Error::Shape { left: 1, right: 2 })
        ));
        assert!(matches!(
            combine(Binary::Div, &pv(&[1.0]), &pv(&[0.0])),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn weighted_sum_examples() {
        let (a, b) = (pv(&[4.0]), pv(&[0.0]));
        assert_eq!(weighted_sum(&[&a, &b], &[0.25, 0.75]).unwrap(), pv(&[1.0]));
        let c = pv(&[2.0, 2.0]);
        assert_eq!(weighted_sum(&[&c], &[1.0]).unwrap(), c);
        let (d, e) = (pv(&[1.0]), pv(&[3.0]));
        assert_eq!(weighted_sum(&[&d, &e], &[0.5, 0.5]).unwrap(), pv(&[2.0]));
        assert!(matches!(
            weighted_sum(&[&d, &e], &[0.5, 0.6]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn non_finite_is_reported() {
        let v = pv(&[1.0, f64::NAN]);
        assert!(matches!(v.ensure_finite("test"), Err(Error::NonFinite { index: 1, .. })));
    }

    fn vec_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1e3f64..1e3, 1..16)
    }

    proptest! {
        #[test]
        fn square_is_nonnegative(v in vec_strategy()) {
            let sq = elementwise(Unary::Square, &ParamVector::new(v)).unwrap();
            prop_assert!(sq.iter().all(|x| *x >= 0.0));
        }

        #[test]
        fn uniform_weights_give_mean(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 4), 1..10)) {
            let n = rows.len();
            let vecs: Vec<ParamVector> = rows.iter().cloned().map(ParamVector::new).collect();
            let refs: Vec<&ParamVector> = vecs.iter().collect();
            let w = vec![1.0 / n as f64; n];
            let got = weighted_sum(&refs, &w).unwrap();
            for j in 0..4 {
                let mean: f64 = rows.iter().map(|r| r[j]).sum::<f64>() / n as f64;
                let scale = rows.iter().map(|r| r[j].abs()).fold(1.0, f64::max);
                prop_assert!((got[j] - mean).abs() <= 1e-12 * scale);
            }
        }

        #[test]
        fn div_square_by_self_recovers(v in prop::collection::vec(1e-3f64..1e3, 1..16)) {
            let a = ParamVector::new(v);
            let sq = elementwise(Unary::Square, &a).unwrap();
            let back = combine(Binary::Div, &sq, &a).unwrap();
            for (x, y) in back.iter().zip(a.iter()) {
                prop_assert!((x - y).abs() <= 1e-12 * y.abs());
            }
        }
    }
}
