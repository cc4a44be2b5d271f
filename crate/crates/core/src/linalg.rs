//! Small dense helpers for lower-triangular factors. Matrices are row-major.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower-triangular `n × n` matrix stored densely (upper part kept at zero).
#[derive(Debug, Clone, PartialEq)]
pub struct Lower<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> Lower<T> {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![T::zero(); n * n];
        for i in 0..n {
            data[i * n + i] = T::one();
        }
        Lower { n, data }
    }

    pub fn zeros(n: usize) -> Self {
        Lower { n, data: vec![T::zero(); n * n] }
    }

    /// Builds from a dense row-major buffer; entries above the diagonal must be zero.
    pub fn from_rows(n: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Dimension { expected: n * n, actual: data.len() });
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if data[i * n + j] != T::zero() {
                    return Err(Error::Parameter(format!("entry ({i},{j}) above the diagonal is non-zero")));
                }
            }
        }
        Ok(Lower { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        debug_assert!(j <= i);
        self.data[i * self.n + j] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// `L · x`
    pub fn mul_vec(&self, x: &[T], out: &mut [T]) {
        for i in 0..self.n {
            let row = &self.data[i * self.n..i * self.n + i + 1];
            out[i] = row.iter().zip(x).map(|(&a, &b)| a * b).sum();
        }
    }

    /// `Lᵀ · x`
    pub fn tmul_vec(&self, x: &[T], out: &mut [T]) {
        for j in 0..self.n {
            let mut acc = T::zero();
            for i in j..self.n {
                acc += self.get(i, j) * x[i];
            }
            out[j] = acc;
        }
    }

    /// Solves `L · y = b` by forward substitution.
    pub fn solve(&self, b: &[T], out: &mut [T]) {
        for i in 0..self.n {
            let mut acc = b[i];
            for j in 0..i {
                acc -= self.get(i, j) * out[j];
            }
            out[i] = acc / self.get(i, i);
        }
    }

    /// `L · Lᵀ` as a dense row-major matrix.
    pub fn gram(&self) -> Vec<T> {
        let n = self.n;
        let mut out = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let v: T = (0..=j).map(|k| self.get(i, k) * self.get(j, k)).sum();
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
        out
    }

    /// `Σ ln Lᵢᵢ`
    pub fn log_diag_sum(&self) -> T {
        (0..self.n).map(|i| self.get(i, i).ln()).sum()
    }
}

/// Cholesky factorisation of a symmetric positive-definite row-major matrix.
pub fn cholesky<T: Scalar>(n: usize, a: &[T]) -> Result<Lower<T>> {
    let mut l = Lower::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if !(s > T::zero()) {
                    return Err(Error::Parameter(format!("matrix not positive definite at pivot {i}")));
                }
                l.set(i, i, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Ok(l)
}
