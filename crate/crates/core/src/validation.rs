//! Analytic-oracle checks shared by the `validate` command and the test suite.

use rand::Rng;
use serde::Serialize;

use crate::analysis::{jzs_log_bf10, pav_reliability};
use crate::bridge::{estimate_logml, BridgeConfig};
use crate::conjugate::ConjugateLinear;
use crate::distributions::PriorFamily;
use crate::rng::{Purpose, StreamKey};
use crate::sampler::Draws;

/// BF10 of the JZS one-sample test at `(t, n, scale)`, from brute-force double
/// quadrature of the Cauchy-weighted noncentral t density.
pub const JZS_REFERENCE: [(f64, usize, f64, f64); 36] = [
    (0.0, 20, 0.2, 0.5536062537848785),
    (0.0, 20, 0.7071067811865476, 0.23232629437646501),
    (0.0, 20, 1.0, 0.17057771832597257),
    (0.0, 100, 0.2, 0.33620400244634113),
    (0.0, 100, 0.7071067811865476, 0.1107046377330686),
    (0.0, 100, 1.0, 0.07901338820277201),
    (0.0, 1000, 0.2, 0.12321394008789223),
    (0.0, 1000, 0.7071067811865476, 0.03561154132518998),
    (0.0, 1000, 1.0, 0.025206169213112892),
    (1.0, 20, 0.2, 0.7154116474206339),
    (1.0, 20, 0.7071067811865476, 0.36127034299482175),
    (1.0, 20, 1.0, 0.27317581647140876),
    (1.0, 100, 0.2, 0.4908412494118495),
    (1.0, 100, 0.7071067811865476, 0.17966632930955703),
    (1.0, 100, 1.0, 0.12935345020516262),
    (1.0, 1000, 0.2, 0.1987436036182582),
    (1.0, 1000, 0.7071067811865476, 0.058612009348216663),
    (1.0, 1000, 1.0, 0.04152698274089118),
    (2.0, 20, 0.2, 1.5277446327971929),
    (2.0, 20, 0.7071067811865476, 1.2057726015859944),
    (2.0, 20, 1.0, 0.9831506550754923),
    (2.0, 100, 0.2, 1.548730179965262),
    (2.0, 100, 0.7071067811865476, 0.7469234361014795),
    (2.0, 100, 1.0, 0.5512866373150784),
    (2.0, 1000, 0.2, 0.8335752743045951),
    (2.0, 1000, 0.7071067811865476, 0.2605451733058194),
    (2.0, 1000, 1.0, 0.18514090529313085),
    (4.0, 20, 0.2, 25.354533151762173),
    (4.0, 20, 0.7071067811865476, 46.124455466559695),
    (4.0, 20, 1.0, 45.21566946358715),
    (4.0, 100, 0.2, 160.8520284552486),
    (4.0, 100, 0.7071067811865476, 152.75046235964794),
    (4.0, 100, 1.0, 122.59417312079151),
    (4.0, 1000, 0.2, 254.49232461722724),
    (4.0, 1000, 0.7071067811865476, 97.34307884680454),
    (4.0, 1000, 1.0, 69.97083821928122),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Kolmogorov–Smirnov statistic of `samples` against a continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of the KS statistic `d` for sample size `n`.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let x = (sn + 0.12 + 0.11 / sn) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * x * x).exp();
        p += if k % 2 == 1 { 2.0 * term } else { -2.0 * term };
        if term < 1e-16 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

fn key(sub: u64) -> StreamKey {
    StreamKey::new(0x5eed, Purpose::Validation, sub)
}

/// Bridge estimate against the closed-form evidence of a normal-mean model
/// with known σ. `logml_offset` is added to every estimate (fault injection).
pub fn conjugate_evidence(reps: usize, n_draws: usize, logml_offset: f64) -> Check {
    let model = ConjugateLinear::normal_mean(10, 0.5, 1.0, 1.0).expect("valid model");
    let mut hits = 0;
    let mut worst: f64 = 0.0;
    for r in 0..reps as u64 {
        let mut rng = key(r).stream();
        let theta = model.sample_prior(&mut rng);
        let y = model.simulate(&theta, &mut rng);
        let exact = model.log_evidence(&y).expect("evidence");
        let rows = model.sample_posterior(&y, n_draws, &mut rng).expect("posterior");
        let draws = Draws::from_rows(&rows, 4);
        let target = |x: &[f64]| model.log_joint(x, &y);
        let est = estimate_logml(&target, &draws, &BridgeConfig::default(), &mut rng).map(|b| b.logml + logml_offset);
        let err = est.map_or(f64::INFINITY, |e| (e - exact).abs());
        worst = worst.max(err);
        hits += usize::from(err < 0.01);
    }
    Check {
        name: "conjugate evidence",
        passed: hits as f64 >= 0.95 * reps as f64,
        detail: format!("{hits}/{reps} within 0.01 nats, worst {worst:.2e}"),
    }
}

/// Mean of half-normal draws against `σ√(2/π)`.
pub fn half_normal_mean(n: usize) -> Check {
    let family = PriorFamily::TruncatedNormalAtZero { mean: 0.0, sd: 1.0 };
    let mut rng = key(1_000).stream();
    let draws: Vec<f64> = (0..n).map(|_| family.sample_scalar(&mut rng).expect("valid family")).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let expected = (2.0 / std::f64::consts::PI).sqrt();
    let se = ((1.0 - 2.0 / std::f64::consts::PI) / n as f64).sqrt();
    let z = (mean - expected) / se;
    Check { name: "half-normal mean", passed: z.abs() < 4.0, detail: format!("mean {mean:.5} vs {expected:.5} (z = {z:.2})") }
}

/// KS test of the off-diagonal of LKJ(2) 2×2 draws against `(3/4)(1 − r²)`.
pub fn lkj_goodness_of_fit(n: usize) -> Check {
    let family = PriorFamily::Lkj { eta: 2.0 };
    let mut rng = key(1_001).stream();
    let r: Vec<f64> = (0..n).map(|_| family.sample_correlation(2, &mut rng).expect("valid family").get(1, 0)).collect();
    let d = ks_statistic(&r, |x| 0.5 + 0.75 * (x - x * x * x / 3.0));
    let p = ks_pvalue(d, n);
    Check { name: "LKJ(2) goodness of fit", passed: p > 0.01, detail: format!("KS D = {d:.5}, p = {p:.3}") }
}

/// Isotonic least squares by exhaustive search over contiguous partitions of
/// the forecast-sorted outcomes that keep tied forecasts together.
pub fn brute_force_isotonic(forecasts: &[f64], outcomes: &[f64]) -> Vec<f64> {
    let n = forecasts.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| forecasts[a].total_cmp(&forecasts[b]));
    let f: Vec<f64> = idx.iter().map(|&i| forecasts[i]).collect();
    let y: Vec<f64> = idx.iter().map(|&i| outcomes[i]).collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << (n - 1)) {
        if (0..n - 1).any(|b| mask & (1 << b) != 0 && f[b] == f[b + 1]) {
            continue;
        }
        let mut fit = vec![0.0; n];
        let mut start = 0;
        for end in 1..=n {
            if end == n || mask & (1 << (end - 1)) != 0 {
                let m = y[start..end].iter().sum::<f64>() / (end - start) as f64;
                fit[start..end].iter_mut().for_each(|v| *v = m);
                start = end;
            }
        }
        if fit.windows(2).any(|w| w[0] > w[1] + 1e-15) {
            continue;
        }
        let sse: f64 = fit.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum();
        if best.as_ref().is_none_or(|(s, _)| sse < *s - 1e-15) {
            best = Some((sse, fit));
        }
    }
    best.expect("the single block is always feasible").1
}

/// PAV against exhaustive search on random instances of size 1 to 8.
pub fn pav_oracle(instances: usize) -> Check {
    let mut rng = key(1_002).stream();
    let mut worst: f64 = 0.0;
    let mut worst_mean: f64 = 0.0;
    for _ in 0..instances {
        let n = rng.random_range(1..=8);
        // a coarse grid makes ties common
        let f: Vec<f64> = (0..n).map(|_| rng.random_range(0..=10) as f64 / 10.0).collect();
        let y: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect();
        let curve = pav_reliability(&f, &y).expect("valid instance");
        let oracle = brute_force_isotonic(&f, &y);
        worst = curve.fitted.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        let mean_fit = curve.fitted.iter().sum::<f64>() / n as f64;
        let mean_y = y.iter().sum::<f64>() / n as f64;
        worst_mean = worst_mean.max((mean_fit - mean_y).abs());
    }
    Check {
        name: "PAV exhaustive oracle",
        passed: worst < 1e-12 && worst_mean < 1e-12,
        detail: format!("{instances} instances, max |fit - oracle| {worst:.1e}, max mean gap {worst_mean:.1e}"),
    }
}

/// JZS Bayes factors against the frozen reference grid.
pub fn jzs_oracle() -> Check {
    let mut worst: f64 = 0.0;
    for &(t, n, scale, reference) in &JZS_REFERENCE {
        let bf = jzs_log_bf10(t, n, scale).map_or(f64::NAN, f64::exp);
        worst = worst.max(((bf - reference) / reference).abs());
    }
    let limit = jzs_log_bf10(2.0, 50, 1e-8).map_or(f64::NAN, f64::exp);
    Check {
        name: "JZS Bayes factor oracle",
        passed: worst < 1e-4 && (0.999..=1.001).contains(&limit),
        detail: format!("max relative error {worst:.1e}, BF10 at scale 1e-8: {limit:.6}"),
    }
}

/// All checks run by the `validate` command.
pub fn run_all(logml_offset: f64) -> Vec<Check> {
    vec![
        conjugate_evidence(100, 20_000, logml_offset),
        half_normal_mean(100_000),
        lkj_goodness_of_fit(100_000),
        pav_oracle(1000),
        jzs_oracle(),
    ]
}
