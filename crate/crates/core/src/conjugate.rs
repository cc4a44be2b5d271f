//! Gaussian linear model with known residual scale and independent normal
//! priors. Evidence and posterior are available in closed form, which makes
//! it the reference problem for the bridge estimator and the SBC harness.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distributions::normal_lpdf;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, Lower};
use crate::target::LogDensity;

/// `y = Xθ + ε`, `ε ~ N(0, σ²I)`, `θ_j ~ N(m_j, s_j²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugateLinear {
    /// Design columns, each of length `n`.
    pub columns: Vec<Vec<f64>>,
    pub prior_mean: Vec<f64>,
    pub prior_sd: Vec<f64>,
    pub sigma: f64,
}

/// Sum-coded column pattern shared by the factorial designs: column 0 is the
/// intercept, columns 1 and 2 are the two main effects over four cells.
fn code(col: usize, row: usize) -> f64 {
    match col {
        0 => 1.0,
        1 => {
            if row % 2 == 0 {
                -1.0
            } else {
                1.0
            }
        }
        2 => {
            if (row / 2) % 2 == 0 {
                -1.0
            } else {
                1.0
            }
        }
        _ => {
            if (row >> (col - 1)) % 2 == 0 {
                -1.0
            } else {
                1.0
            }
        }
    }
}

impl ConjugateLinear {
    /// Balanced sum-coded design with `prior_sd.len()` columns and `n` rows.
    pub fn balanced(n: usize, prior_mean: Vec<f64>, prior_sd: Vec<f64>, sigma: f64) -> Result<Self> {
        let p = prior_sd.len();
        let columns = (0..p).map(|c| (0..n).map(|r| code(c, r)).collect()).collect();
        let m = ConjugateLinear { columns, prior_mean, prior_sd, sigma };
        m.validate()?;
        Ok(m)
    }

    /// Normal mean with known σ: a single intercept column.
    pub fn normal_mean(n: usize, prior_mean: f64, prior_sd: f64, sigma: f64) -> Result<Self> {
        Self::balanced(n, vec![prior_mean], vec![prior_sd], sigma)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.columns.len();
        if p == 0 || self.prior_mean.len() != p || self.prior_sd.len() != p {
            return Err(Error::Parameter("columns, prior means and prior sds must have equal non-zero length".into()));
        }
        let n = self.columns[0].len();
        if n == 0 || self.columns.iter().any(|c| c.len() != n) {
            return Err(Error::Parameter("design columns must be non-empty and of equal length".into()));
        }
        if !(self.sigma > 0.0) || self.prior_sd.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Parameter("scales must be positive".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn n_obs(&self) -> usize {
        self.columns[0].len()
    }

    /// The nested model without column `drop`.
    pub fn without(&self, drop: usize) -> Self {
        let keep = |v: &Vec<f64>| -> Vec<f64> { v.iter().enumerate().filter(|(i, _)| *i != drop).map(|(_, x)| *x).collect() };
        ConjugateLinear {
            columns: self.columns.iter().enumerate().filter(|(i, _)| *i != drop).map(|(_, c)| c.clone()).collect(),
            prior_mean: keep(&self.prior_mean),
            prior_sd: keep(&self.prior_sd),
            sigma: self.sigma,
        }
    }

    fn mean_at(&self, theta: &[f64], row: usize) -> f64 {
        self.columns.iter().zip(theta).map(|(c, t)| c[row] * t).sum()
    }

    pub fn log_likelihood(&self, theta: &[f64], y: &[f64]) -> f64 {
        y.iter().enumerate().map(|(i, &yi)| normal_lpdf(yi, self.mean_at(theta, i), self.sigma)).sum()
    }

    pub fn log_prior(&self, theta: &[f64]) -> f64 {
        theta.iter().zip(&self.prior_mean).zip(&self.prior_sd).map(|((&t, &m), &s)| normal_lpdf(t, m, s)).sum()
    }

    pub fn log_joint(&self, theta: &[f64], y: &[f64]) -> f64 {
        self.log_prior(theta) + self.log_likelihood(theta, y)
    }

    /// Posterior mean and Cholesky factor of the posterior precision.
    pub fn posterior(&self, y: &[f64]) -> Result<(Vec<f64>, Lower<f64>)> {
        crate::error::check_dim(self.n_obs(), y.len())?;
        let p = self.dim();
        let s2 = self.sigma * self.sigma;
        let mut prec = vec![0.0; p * p];
        let mut b = vec![0.0; p];
        for i in 0..p {
            for j in 0..p {
                prec[i * p + j] = self.columns[i].iter().zip(&self.columns[j]).map(|(a, c)| a * c).sum::<f64>() / s2;
            }
            let v = self.prior_sd[i] * self.prior_sd[i];
            prec[i * p + i] += 1.0 / v;
            b[i] = self.columns[i].iter().zip(y).map(|(a, c)| a * c).sum::<f64>() / s2 + self.prior_mean[i] / v;
        }
        let chol = cholesky(p, &prec)?;
        let mut tmp = vec![0.0; p];
        chol.solve(&b, &mut tmp);
        let mut mean = vec![0.0; p];
        solve_upper(&chol, &tmp, &mut mean);
        Ok((mean, chol))
    }

    /// Closed-form `ln p(y)` through `ln p(y) = ln p(y, θ) − ln p(θ | y)` at the posterior mean.
    pub fn log_evidence(&self, y: &[f64]) -> Result<f64> {
        let (mean, chol) = self.posterior(y)?;
        let p = self.dim() as f64;
        let log_post_at_mean = chol.log_diag_sum() - 0.5 * p * (2.0 * std::f64::consts::PI).ln();
        Ok(self.log_joint(&mean, y) - log_post_at_mean)
    }

    /// `n` iid posterior draws.
    pub fn sample_posterior<R: Rng + ?Sized>(&self, y: &[f64], n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        let (mean, chol) = self.posterior(y)?;
        let p = self.dim();
        Ok((0..n)
            .map(|_| {
                let z: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
                let mut d = vec![0.0; p];
                solve_upper(&chol, &z, &mut d);
                d.iter().zip(&mean).map(|(a, m)| a + m).collect()
            })
            .collect())
    }

    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.prior_mean.iter().zip(&self.prior_sd).map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    pub fn simulate<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Vec<f64> {
        (0..self.n_obs()).map(|i| self.mean_at(theta, i) + self.sigma * rng.sample::<f64, _>(StandardNormal)).collect()
    }
}

/// Posterior of a [`ConjugateLinear`] model as a sampler target.
pub struct ConjugateTarget<'a> {
    pub model: &'a ConjugateLinear,
    pub y: &'a [f64],
}

impl LogDensity for ConjugateTarget<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn log_density_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let m = self.model;
        let s2 = m.sigma * m.sigma;
        for (j, g) in grad.iter_mut().enumerate() {
            *g = -(x[j] - m.prior_mean[j]) / (m.prior_sd[j] * m.prior_sd[j]);
        }
        for (i, &yi) in self.y.iter().enumerate() {
            let r = (yi - m.mean_at(x, i)) / s2;
            for (g, c) in grad.iter_mut().zip(&m.columns) {
                *g += c[i] * r;
            }
        }
        m.log_joint(x, self.y)
    }
}

/// Solves `Lᵀx = b`.
fn solve_upper(l: &Lower<f64>, b: &[f64], x: &mut [f64]) {
    let n = l.dim();
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l.get(k, i) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate;

    #[test]
    fn one_dimensional_evidence_matches_quadrature() {
        let m = ConjugateLinear::normal_mean(5, 0.3, 0.8, 1.3).unwrap();
        let y = [0.1, 1.2, -0.4, 0.9, 2.0];
        let ev = m.log_evidence(&y).unwrap();
        let q = integrate(|t| m.log_joint(&[t], &y).exp(), -10.0, 10.0, &[], 1e-14, 1e-12, 200);
        assert!((q.value.ln() - ev).abs() < 1e-9, "{} {}", q.value.ln(), ev);
    }

    #[test]
    fn evidence_does_not_depend_on_evaluation_point() {
        let m = ConjugateLinear::balanced(8, vec![0.5, 0.0, 0.0], vec![1.0, 0.5, 0.3], 0.7).unwrap();
        let y = [0.2, 0.9, -0.1, 1.4, 0.3, 0.8, 0.0, 1.1];
        let (mean, chol) = m.posterior(&y).unwrap();
        let ev = m.log_evidence(&y).unwrap();
        let shifted: Vec<f64> = mean.iter().map(|v| v + 0.3).collect();
        let d = vec![0.3; 3];
        let mut u = vec![0.0; 3];
        chol.tmul_vec(&d, &mut u);
        let quad = u.iter().map(|v| v * v).sum::<f64>();
        let log_post = chol.log_diag_sum() - 1.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * quad;
        assert!((m.log_joint(&shifted, &y) - log_post - ev).abs() < 1e-10);
    }

    #[test]
    fn balanced_columns_are_orthogonal() {
        let m = ConjugateLinear::balanced(16, vec![0.0; 3], vec![1.0; 3], 1.0).unwrap();
        for i in 0..3 {
            for j in 0..i {
                let dot: f64 = m.columns[i].iter().zip(&m.columns[j]).map(|(a, b)| a * b).sum();
                assert_eq!(dot, 0.0);
            }
        }
    }
}
