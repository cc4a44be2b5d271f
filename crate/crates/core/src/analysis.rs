//! Calibration statistics over SBC records: the JZS one-sample Bayes factor
//! with prior-scale sensitivity, isotonic (PAV) reliability curves with
//! consistency bands, and evidence as a function of the number of runs.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::integrate;
use crate::rng::StreamKey;
use crate::scalar::Scalar;

/// Conventional default scale of the Cauchy prior on the standardized effect.
pub const DEFAULT_SCALE: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Sample t statistic and size of a one-sample problem.
pub fn t_statistic(x: &[f64]) -> Result<(f64, usize)> {
    let n = x.len();
    if n < 2 {
        return Err(Error::DegenerateData(format!("need at least 2 values, got {n}")));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    if !(var > 0.0) || x.iter().all(|&v| v == x[0]) {
        return Err(Error::DegenerateData("values have zero variance".into()));
    }
    Ok((mean / (var / n as f64).sqrt(), n))
}

/// `ln BF10` of the JZS one-sample test from its t statistic, computed as the
/// inverse-gamma mixture over `g` integrated in `ln g`.
pub fn jzs_log_bf10(t: f64, n: usize, scale: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::DegenerateData(format!("need n >= 2, got {n}")));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Parameter(format!("scale must be positive, got {scale}")));
    }
    if !t.is_finite() {
        return Err(Error::DegenerateData("t statistic is not finite".into()));
    }
    let nu = (n - 1) as f64;
    let nr2 = n as f64 * scale * scale;
    let t2 = t * t;
    let log_null = -0.5 * (nu + 1.0) * (t2 / nu).ln_1p();
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    // Integrand in u = ln g, including the Jacobian g.
    let log_h = |u: f64| {
        let g = u.exp();
        let c = (nr2 * g).ln_1p();
        let lik = -0.5 * c - 0.5 * (nu + 1.0) * (t2 / (nu * c.exp())).ln_1p();
        lik - half_ln_2pi - 0.5 * u - 0.5 / g
    };
    let (lo, hi, step) = (-40.0, 80.0, 0.25);
    let grid: Vec<f64> = (0..=((hi - lo) / step) as usize).map(|i| lo + i as f64 * step).collect();
    let values: Vec<f64> = grid.iter().map(|&u| log_h(u)).collect();
    let (imax, &top) = values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty grid");
    let keep: Vec<usize> = (0..grid.len()).filter(|&i| values[i] > top - 50.0).collect();
    let a = grid[keep[0].saturating_sub(1)];
    let b = grid[(keep[keep.len() - 1] + 1).min(grid.len() - 1)];
    let cuts: Vec<f64> = (imax.saturating_sub(8)..=(imax + 8).min(grid.len() - 1)).map(|i| grid[i]).collect();
    let q = integrate(|u| (log_h(u) - top).exp(), a, b, &cuts, 1e-300, 1e-12, 2000);
    Ok(top + q.value.ln() - log_null)
}

/// JZS Bayes factor BF10 for the hypothesis that the mean of `differences` is
/// non-zero, with a Cauchy(0, `scale`) prior on the standardized effect.
pub fn jzs_paired_bf(differences: &[f64], scale: f64) -> Result<f64> {
    let (t, n) = t_statistic(differences)?;
    Ok(jzs_log_bf10(t, n, scale)?.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint {
    pub scale: f64,
    pub bf10: f64,
    pub is_default: bool,
}

/// Log-spaced scales on `[0.05, 1.5]` with the default scale inserted, 20 in total.
pub fn default_scales() -> Vec<f64> {
    let (lo, hi) = (0.05f64.ln(), 1.5f64.ln());
    let mut s: Vec<f64> = (0..19).map(|i| (lo + (hi - lo) * i as f64 / 18.0).exp()).collect();
    s.push(DEFAULT_SCALE);
    s.sort_by(f64::total_cmp);
    s
}

pub fn sensitivity_curve(differences: &[f64], scales: &[f64]) -> Result<Vec<SensitivityPoint>> {
    let (t, n) = t_statistic(differences)?;
    scales
        .iter()
        .map(|&scale| {
            Ok(SensitivityPoint { scale, bf10: jzs_log_bf10(t, n, scale)?.exp(), is_default: scale == DEFAULT_SCALE })
        })
        .collect()
}

/// Weighted isotonic (non-decreasing) least-squares fit by pool-adjacent-violators.
pub fn pav<T: Scalar>(values: &[T], weights: &[T]) -> Vec<T> {
    let mut blocks: Vec<(T, T, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (v2, w2, n2) = blocks[blocks.len() - 1];
            let (v1, w1, n1) = blocks[blocks.len() - 2];
            if v1 <= v2 {
                break;
            }
            blocks.pop();
            let w = w1 + w2;
            *blocks.last_mut().expect("two blocks") = ((v1 * w1 + v2 * w2) / w, w, n1 + n2);
        }
    }
    blocks.into_iter().flat_map(|(v, _, n)| std::iter::repeat_n(v, n)).collect()
}

/// Points sorted by forecast with ties pooled: `(forecast, mean outcome, count)`.
fn pooled_ties(forecasts: &[f64], outcomes: &[f64]) -> (Vec<usize>, Vec<(f64, f64, usize)>) {
    let mut order: Vec<usize> = (0..forecasts.len()).collect();
    order.sort_by(|&a, &b| forecasts[a].total_cmp(&forecasts[b]));
    let mut groups: Vec<(f64, f64, usize)> = Vec::new();
    for &i in &order {
        match groups.last_mut() {
            Some(g) if g.0 == forecasts[i] => {
                g.1 += outcomes[i];
                g.2 += 1;
            }
            _ => groups.push((forecasts[i], outcomes[i], 1)),
        }
    }
    groups.iter_mut().for_each(|g| g.1 /= g.2 as f64);
    (order, groups)
}

/// Isotonic fit of outcomes on sorted forecasts, one value per observation.
fn fit_sorted(forecasts: &[f64], outcomes: &[f64]) -> Vec<f64> {
    let (_, groups) = pooled_ties(forecasts, outcomes);
    let v: Vec<f64> = groups.iter().map(|g| g.1).collect();
    let w: Vec<f64> = groups.iter().map(|g| g.2 as f64).collect();
    let fit = pav(&v, &w);
    groups.iter().zip(fit).flat_map(|(g, f)| std::iter::repeat_n(f, g.2)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityCurve {
    /// Forecasts in ascending order.
    pub forecast: Vec<f64>,
    /// Outcomes reordered alongside `forecast`.
    pub outcome: Vec<f64>,
    /// Isotonic conditional event probability at each forecast.
    pub fitted: Vec<f64>,
    /// Number of observations sharing each fitted value's block.
    pub weight: Vec<usize>,
    pub band_lower: Option<Vec<f64>>,
    pub band_upper: Option<Vec<f64>>,
    pub histogram: Vec<HistogramBin>,
}

fn check_probabilities(forecasts: &[f64]) -> Result<()> {
    if forecasts.is_empty() {
        return Err(Error::DegenerateData("no forecasts".into()));
    }
    if forecasts.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Data("forecasts must lie in [0, 1]".into()));
    }
    Ok(())
}

fn histogram(forecasts: &[f64], bins: usize) -> Vec<HistogramBin> {
    let mut counts = vec![0usize; bins];
    for &p in forecasts {
        counts[((p * bins as f64) as usize).min(bins - 1)] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin { lower: i as f64 / bins as f64, upper: (i + 1) as f64 / bins as f64, count })
        .collect()
}

/// CORP reliability curve: isotonic regression of binary outcomes on forecasts.
pub fn pav_reliability(forecasts: &[f64], outcomes: &[f64]) -> Result<ReliabilityCurve> {
    check_probabilities(forecasts)?;
    crate::error::check_dim(forecasts.len(), outcomes.len())?;
    if outcomes.iter().any(|&o| o != 0.0 && o != 1.0) {
        return Err(Error::Data("outcomes must be 0 or 1".into()));
    }
    let (order, _) = pooled_ties(forecasts, outcomes);
    let fitted = fit_sorted(forecasts, outcomes);
    let mut weight = vec![0usize; fitted.len()];
    let mut i = 0;
    while i < fitted.len() {
        let j = (i..fitted.len()).find(|&j| fitted[j] != fitted[i]).unwrap_or(fitted.len());
        weight[i..j].iter_mut().for_each(|w| *w = j - i);
        i = j;
    }
    Ok(ReliabilityCurve {
        forecast: order.iter().map(|&i| forecasts[i]).collect(),
        outcome: order.iter().map(|&i| outcomes[i]).collect(),
        fitted,
        weight,
        band_lower: None,
        band_upper: None,
        histogram: histogram(forecasts, 20),
    })
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pointwise consistency bands under the calibration hypothesis, in ascending
/// forecast order. Replicate `b` resamples outcomes from `key.with_sub(b)`.
pub fn consistency_bands(forecasts: &[f64], level: f64, n_resample: usize, key: StreamKey) -> Result<Vec<(f64, f64)>> {
    check_probabilities(forecasts)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Parameter(format!("level must lie in (0, 1), got {level}")));
    }
    if n_resample < 2 {
        return Err(Error::Parameter("at least two resamples are required".into()));
    }
    let mut sorted = forecasts.to_vec();
    sorted.sort_by(f64::total_cmp);
    let fits: Vec<Vec<f64>> = (0..n_resample as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = key.with_sub(b).stream();
            let z: Vec<f64> = sorted.iter().map(|&p| if rng.random::<f64>() < p { 1.0 } else { 0.0 }).collect();
            fit_sorted(&sorted, &z)
        })
        .collect();
    let (pl, pu) = ((1.0 - level) / 2.0, (1.0 + level) / 2.0);
    Ok((0..sorted.len())
        .map(|i| {
            let mut col: Vec<f64> = fits.iter().map(|f| f[i]).collect();
            col.sort_by(f64::total_cmp);
            (quantile_type7(&col, pl), quantile_type7(&col, pu))
        })
        .collect())
}

/// Attaches consistency bands to a reliability curve.
pub fn with_bands(mut curve: ReliabilityCurve, level: f64, n_resample: usize, key: StreamKey) -> Result<ReliabilityCurve> {
    let bands = consistency_bands(&curve.forecast, level, n_resample, key)?;
    curve.band_lower = Some(bands.iter().map(|b| b.0).collect());
    curve.band_upper = Some(bands.iter().map(|b| b.1).collect());
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvidencePoint {
    pub n: usize,
    /// `None` where the prefix has zero variance.
    pub bf01: Option<f64>,
}

/// JZS BF01 on the prefixes of `differences` of length `stride, 2·stride, …`
/// and the full length.
pub fn evidence_vs_n(differences: &[f64], scale: f64, stride: usize) -> Result<Vec<EvidencePoint>> {
    if differences.len() < 2 {
        return Err(Error::DegenerateData("need at least 2 records".into()));
    }
    let stride = stride.max(1);
    let mut lengths: Vec<usize> = (1..).map(|k| k * stride).take_while(|&n| n < differences.len()).filter(|&n| n >= 2).collect();
    lengths.push(differences.len());
    lengths
        .into_iter()
        .map(|n| match jzs_paired_bf(&differences[..n], scale) {
            Ok(bf) => Ok(EvidencePoint { n, bf01: Some(1.0 / bf) }),
            Err(Error::DegenerateData(_)) => Ok(EvidencePoint { n, bf01: None }),
            Err(e) => Err(e),
        })
        .collect()
}
