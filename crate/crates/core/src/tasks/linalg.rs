//! Small dense linear algebra for the quadratic tasks.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::rng::standard_normal;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn mul_vec(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    /// `Q diag(spectrum) Qᵀ`
    pub fn from_spectrum(q: &SquareMatrix, spectrum: &[f64]) -> Self {
        let n = q.n;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let v = (0..n).map(|k| q.get(i, k) * spectrum[k] * q.get(j, k)).sum();
                m.set(i, j, v);
            }
        }
        m
    }

    /// Random orthogonal matrix by Gram-Schmidt on a Gaussian matrix.
    pub fn random_orthogonal<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        loop {
            let mut cols: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..n).map(|_| standard_normal(rng)).collect())
                .collect();
            let mut ok = true;
            for k in 0..n {
                for p in 0..k {
                    let proj: f64 = cols[k].iter().zip(&cols[p]).map(|(a, b)| a * b).sum();
                    let prev = cols[p].clone();
                    for (a, b) in cols[k].iter_mut().zip(&prev) {
                        *a -= proj * b;
                    }
                }
                let norm = math::sqrt(cols[k].iter().map(|a| a * a).sum());
                if norm < 1e-8 {
                    ok = false;
                    break;
                }
                for a in cols[k].iter_mut() {
                    *a /= norm;
                }
            }
            if ok {
                let mut q = Self::zeros(n);
                for (k, col) in cols.iter().enumerate() {
                    for (i, v) in col.iter().enumerate() {
                        q.set(i, k, *v);
                    }
                }
                return q;
            }
        }
    }
}

/// Solve `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &SquareMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.n;
    let mut m = a.data.clone();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r, &s| m[r * n + col].abs().total_cmp(&m[s * n + col].abs()))
            .unwrap_or(col);
        if m[pivot * n + col].abs() < 1e-300 {
            return Err(Error::Domain("singular curvature matrix".into()));
        }
        if pivot != col {
            for j in 0..n {
                m.swap(pivot * n + j, col * n + j);
            }
            rhs.swap(pivot, col);
        }
        for r in col + 1..n {
            let f = m[r * n + col] / m[col * n + col];
            if f != 0.0 {
                for j in col..n {
                    m[r * n + j] -= f * m[col * n + j];
                }
                rhs[r] -= f * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|j| m[r * n + j] * x[j]).sum();
        x[r] = (rhs[r] - s) / m[r * n + r];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    #[test]
    fn orthogonal_and_spectrum() {
        let mut rng = stream(3, Purpose::TaskBuild, 0, 0);
        let q = SquareMatrix::random_orthogonal(6, &mut rng);
        for i in 0..6 {
            for j in 0..6 {
                let dot: f64 = (0..6).map(|k| q.get(k, i) * q.get(k, j)).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
        let a = SquareMatrix::from_spectrum(&q, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let trace: f64 = (0..6).map(|i| a.get(i, i)).sum();
        assert!((trace - 21.0).abs() < 1e-10);
    }

    #[test]
    fn solve_recovers_solution() {
        let mut a = SquareMatrix::zeros(3);
        let rows = [[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 1.0]];
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                a.set(i, j, *v);
            }
        }
        let x = [1.0, -2.0, 0.5];
        let mut b = [0.0; 3];
        a.mul_vec(&x, &mut b);
        let got = solve(&a, &b).unwrap();
        for (g, w) in got.iter().zip(&x) {
            assert!((g - w).abs() < 1e-12);
        }
    }
}
