//! Scalar abstraction shared by the density, model and regression kernels.
//!
//! Everything that is pure arithmetic is written against [`Scalar`] so the same
//! code runs in `f32` or `f64`. The Monte Carlo drivers (sampler, bridge
//! estimator, SBC harness) are fixed to `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64;

    /// `ln Γ(x)` for `x > 0`.
    fn ln_gamma(self) -> Self;

    /// `ln Φ(x)`, the log of the standard normal CDF, accurate in the far left tail.
    fn ln_norm_cdf(self) -> Self;

    /// `½ ln(2π)`.
    fn half_ln_2pi() -> Self {
        Self::lit(0.918_938_533_204_672_8)
    }
}

fn ln_norm_cdf_f64(x: f64) -> f64 {
    if x > -30.0 {
        (0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)).ln()
    } else {
        // Mills-ratio asymptotic expansion.
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        -0.5 * x2 - 0.918_938_533_204_672_8 - (-x).ln() + series.ln()
    }
}

impl Scalar for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    fn ln_gamma(self) -> Self {
        statrs::function::gamma::ln_gamma(self)
    }
    fn ln_norm_cdf(self) -> Self {
        ln_norm_cdf_f64(self)
    }
}

impl Scalar for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn ln_gamma(self) -> Self {
        statrs::function::gamma::ln_gamma(self as f64) as f32
    }
    fn ln_norm_cdf(self) -> Self {
        ln_norm_cdf_f64(self as f64) as f32
    }
}

/// Numerically stable `ln(eᵃ + eᵇ)`.
pub fn log_add_exp<T: Scalar>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        return b;
    }
    if b == T::neg_infinity() {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Numerically stable `ln Σ eˣ`.
pub fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<T>().ln()
}

/// `ln((1/n) Σ eˣ)`.
pub fn log_mean_exp<T: Scalar>(xs: &[T]) -> T {
    log_sum_exp(xs) - T::lit(xs.len() as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_norm_cdf_matches_erfc_and_tail() {
        assert!((0.0f64.ln_norm_cdf() - 0.5f64.ln()).abs() < 1e-15);
        // continuity across the switch to the asymptotic branch
        let a = ln_norm_cdf_f64(-29.999);
        let b = ln_norm_cdf_f64(-30.001);
        assert!((a - b).abs() < 0.07, "{a} {b}");
        assert!(ln_norm_cdf_f64(-1e3).is_finite());
    }

    #[test]
    fn log_sum_exp_handles_infinities() {
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 1.5), 1.5);
        let v = log_sum_exp(&[1000.0f64, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp::<f64>(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn f32_and_f64_agree() {
        let x = 3.7;
        assert!((Scalar::ln_gamma(x as f32) as f64 - Scalar::ln_gamma(x)).abs() < 1e-5);
    }
}
