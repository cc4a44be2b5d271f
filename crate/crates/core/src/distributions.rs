//! Prior and likelihood families: sampling and log densities.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Lower;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PriorFamily {
    Normal { mean: f64, sd: f64 },
    /// Normal restricted to `[0, ∞)`.
    #[serde(alias = "normal_plus", alias = "half_normal")]
    TruncatedNormalAtZero { mean: f64, sd: f64 },
    Lkj { eta: f64 },
    Cauchy { location: f64, scale: f64 },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must be positive and finite, got {v}")))
    }
}

impl PriorFamily {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PriorFamily::Normal { mean, sd } | PriorFamily::TruncatedNormalAtZero { mean, sd } => {
                if !mean.is_finite() {
                    return Err(Error::Parameter(format!("mean must be finite, got {mean}")));
                }
                positive("sd", sd)
            }
            PriorFamily::Lkj { eta } => positive("eta", eta),
            PriorFamily::Cauchy { location, scale } => {
                if !location.is_finite() {
                    return Err(Error::Parameter(format!("location must be finite, got {location}")));
                }
                positive("scale", scale)
            }
        }
    }

    pub fn is_scalar(&self) -> bool {
        !matches!(self, PriorFamily::Lkj { .. })
    }

    /// Lower end of the support of a scalar family.
    pub fn lower_bound(&self) -> f64 {
        match self {
            PriorFamily::TruncatedNormalAtZero { .. } => 0.0,
            _ => f64::NEG_INFINITY,
        }
    }

    /// Draws one value from a scalar family.
    pub fn sample_scalar<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        self.validate()?;
        match *self {
            PriorFamily::Normal { mean, sd } => Ok(mean + sd * rng.sample::<f64, _>(StandardNormal)),
            PriorFamily::TruncatedNormalAtZero { mean, sd } => Ok(sample_truncated_normal(mean, sd, rng)),
            PriorFamily::Cauchy { location, scale } => {
                let u: f64 = rng.random();
                Ok(location + scale * (std::f64::consts::PI * (u - 0.5)).tan())
            }
            PriorFamily::Lkj { .. } => Err(Error::Parameter("LKJ is not a scalar family".into())),
        }
    }

    /// Draws a correlation matrix (as its Cholesky factor) from an LKJ family.
    pub fn sample_correlation<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Result<Lower<f64>> {
        match *self {
            PriorFamily::Lkj { eta } => lkj_cholesky_sample(eta, dim, rng),
            _ => Err(Error::Parameter("only LKJ yields correlation matrices".into())),
        }
    }

    /// Log density of a scalar family; `-∞` outside the support.
    pub fn log_density<T: Scalar>(&self, x: T) -> Result<T> {
        self.validate()?;
        Ok(match *self {
            PriorFamily::Normal { mean, sd } => normal_lpdf(x, T::lit(mean), T::lit(sd)),
            PriorFamily::TruncatedNormalAtZero { mean, sd } => truncated_normal_lpdf(x, T::lit(mean), T::lit(sd)),
            PriorFamily::Cauchy { location, scale } => cauchy_lpdf(x, T::lit(location), T::lit(scale)),
            PriorFamily::Lkj { .. } => return Err(Error::Parameter("LKJ density needs a matrix argument".into())),
        })
    }

    /// Log density of an LKJ family at a correlation Cholesky factor.
    pub fn log_density_correlation<T: Scalar>(&self, chol: &Lower<T>) -> Result<T> {
        match *self {
            PriorFamily::Lkj { eta } => {
                positive("eta", eta)?;
                Ok(lkj_cholesky_lpdf(T::lit(eta), chol))
            }
            _ => Err(Error::Parameter("only LKJ has a matrix density".into())),
        }
    }

    /// `d/dx` of the log density of a scalar family, for `x` inside the support.
    pub(crate) fn dlog_density<T: Scalar>(&self, x: T) -> T {
        match *self {
            PriorFamily::Normal { mean, sd } | PriorFamily::TruncatedNormalAtZero { mean, sd } => {
                -(x - T::lit(mean)) / T::lit(sd * sd)
            }
            PriorFamily::Cauchy { location, scale } => {
                let d = x - T::lit(location);
                -T::lit(2.0) * d / (T::lit(scale * scale) + d * d)
            }
            PriorFamily::Lkj { .. } => T::nan(),
        }
    }
}

#[inline]
pub fn normal_lpdf<T: Scalar>(x: T, mean: T, sd: T) -> T {
    let z = (x - mean) / sd;
    -T::lit(0.5) * z * z - sd.ln() - T::half_ln_2pi()
}

/// Normal density renormalised to `[0, ∞)`; for `mean = 0` this is twice the
/// untruncated density.
pub fn truncated_normal_lpdf<T: Scalar>(x: T, mean: T, sd: T) -> T {
    if x < T::zero() {
        return T::neg_infinity();
    }
    normal_lpdf(x, mean, sd) - (mean / sd).ln_norm_cdf()
}

pub fn cauchy_lpdf<T: Scalar>(x: T, location: T, scale: T) -> T {
    let z = (x - location) / scale;
    -(T::PI() * scale).ln() - (T::one() + z * z).ln()
}

fn sample_truncated_normal<R: Rng + ?Sized>(mean: f64, sd: f64, rng: &mut R) -> f64 {
    if mean >= 0.0 {
        // acceptance probability Φ(mean/sd) ≥ ½
        loop {
            let x = mean + sd * rng.sample::<f64, _>(StandardNormal);
            if x >= 0.0 {
                return x;
            }
        }
    }
    use statrs::distribution::{ContinuousCDF, Normal};
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    let lo = std.cdf(-mean / sd);
    let u = lo + (1.0 - lo) * rng.random::<f64>();
    let x = mean + sd * std.inverse_cdf(u.min(1.0 - f64::EPSILON));
    x.max(0.0)
}

/// `ln Z_d(η)` where the LKJ density is `det(R)^(η−1) / Z_d(η)`.
pub fn lkj_log_normalizer<T: Scalar>(eta: T, dim: usize) -> T {
    let d = T::lit(dim as f64);
    let two = T::lit(2.0);
    let mut acc = T::zero();
    for k in 1..dim {
        let dk = d - T::lit(k as f64);
        let b = eta + (dk - T::one()) / two;
        let ln_beta = two * b.ln_gamma() - (two * b).ln_gamma();
        acc += (two * eta - two + dk) * dk * T::LN_2() + dk * ln_beta;
    }
    acc
}

/// LKJ log density of `R = L Lᵀ`, with respect to Lebesgue measure on the
/// strictly lower off-diagonal entries of `R`.
pub fn lkj_cholesky_lpdf<T: Scalar>(eta: T, chol: &Lower<T>) -> T {
    // ln det R = 2 Σ ln Lᵢᵢ
    (eta - T::one()) * T::lit(2.0) * chol.log_diag_sum() - lkj_log_normalizer(eta, chol.dim())
}

/// Onion-method draw of a `dim × dim` correlation matrix from LKJ(η),
/// returned as its lower Cholesky factor.
pub fn lkj_cholesky_sample<R: Rng + ?Sized>(eta: f64, dim: usize, rng: &mut R) -> Result<Lower<f64>> {
    positive("eta", eta)?;
    let mut l = Lower::identity(dim);
    if dim < 2 {
        return Ok(l);
    }
    let mut beta = eta + (dim as f64 - 2.0) / 2.0;
    let r = 2.0 * Beta::new(beta, beta).map_err(|e| Error::Parameter(e.to_string()))?.sample(rng) - 1.0;
    l.set(1, 0, r);
    l.set(1, 1, (1.0 - r * r).sqrt());
    for k in 2..dim {
        beta -= 0.5;
        let y = Beta::new(k as f64 / 2.0, beta).map_err(|e| Error::Parameter(e.to_string()))?.sample(rng);
        let mut u: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = y.sqrt() / norm;
        for (j, uj) in u.iter_mut().enumerate() {
            *uj *= scale;
            l.set(k, j, *uj);
        }
        l.set(k, k, (1.0 - y).sqrt());
    }
    Ok(l)
}

/// `mean + L·z` with `z` standard normal.
pub fn sample_mvnormal<R: Rng + ?Sized>(mean: &[f64], chol: &Lower<f64>, rng: &mut R) -> Result<Vec<f64>> {
    if chol.dim() != mean.len() {
        return Err(Error::Dimension { expected: mean.len(), actual: chol.dim() });
    }
    let z: Vec<f64> = (0..mean.len()).map(|_| rng.sample(StandardNormal)).collect();
    let mut out = vec![0.0; mean.len()];
    chol.mul_vec(&z, &mut out);
    for (o, m) in out.iter_mut().zip(mean) {
        *o += m;
    }
    Ok(out)
}
