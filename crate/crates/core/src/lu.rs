//! Dense LU factorization with partial pivoting for the Newton step.

use crate::error::{Error, Result};

/// Pivots with magnitude below this are treated as singular.
pub const PIVOT_THRESHOLD: f64 = 1e-12;

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn dim(&self) -> usize {
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

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                self.data[i * self.n..(i + 1) * self.n]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }
}

/// In-place LU factors `P A = L U`, unit lower triangle implied.
#[derive(Debug)]
pub struct LuFactors {
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl LuFactors {
    pub fn factor(mut a: DenseMatrix) -> Result<Self> {
        let n = a.n;
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, max) = (k..n)
                .map(|i| (i, a.get(i, k).abs()))
                .fold(
                    (k, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
            if !(max >= PIVOT_THRESHOLD) {
                return Err(Error::SingularJacobian {
                    column: k,
                    pivot: max.max(0.0),
                });
            }
            if p != k {
                for j in 0..n {
                    a.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = a.get(k, k);
            for i in k + 1..n {
                let factor = a.get(i, k) / pivot;
                a.set(i, k, factor);
                if factor != 0.0 {
                    let (upper, lower) = a.data.split_at_mut(i * n);
                    let row_k = &upper[k * n + k + 1..k * n + n];
                    let row_i = &mut lower[k + 1..n];
                    for (x, y) in row_i.iter_mut().zip(row_k) {
                        *x -= factor * y;
                    }
                }
            }
        }
        Ok(LuFactors { lu: a, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu.get(i, j) * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu.get(i, j) * x[j]).sum();
            x[i] = (x[i] - s) / self.lu.get(i, i);
        }
        x
    }
}

pub fn solve(a: DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    Ok(LuFactors::factor(a)?.solve(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn from_rows(rows: &[&[f64]]) -> DenseMatrix {
        let n = rows.len();
        let mut m = DenseMatrix::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                m.set(i, j, *v);
            }
        }
        m
    }

    #[test]
    fn needs_pivoting() {
        let a = from_rows(&[&[0.0, 1.0], &[2.0, 3.0]]);
        let x = solve(a, &[1.0, 8.0]).unwrap();
        assert!((x[0] - 2.5).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singular_detected() {
        let a = from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(
            solve(a, &[1.0, 1.0]),
            Err(Error::SingularJacobian { column: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn residual_small_on_diagonally_dominant(
            entries in proptest::collection::vec(-1.0f64..1.0, 36),
            b in proptest::collection::vec(-1.0f64..1.0, 6),
        ) {
            let mut a = DenseMatrix::zeros(6);
            for i in 0..6 {
                for j in 0..6 {
                    a.set(i, j, entries[i * 6 + j] + if i == j { 7.0 } else { 0.0 });
                }
            }
            let x = solve(a.clone(), &b).unwrap();
            let r = a.mul_vec(&x);
            for (ri, bi) in r.iter().zip(&b) {
                prop_assert!((ri - bi).abs() < 1e-12);
            }
        }
    }
}
