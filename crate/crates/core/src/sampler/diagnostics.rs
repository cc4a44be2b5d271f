//! Convergence diagnostics: split-R̂ and effective sample size.

use crate::scalar::Scalar;

/// R̂ convergence threshold.
pub const RHAT_THRESHOLD: f64 = 1.01;

fn mean_var<T: Scalar>(x: &[T]) -> (T, T) {
    let n = T::lit(x.len() as f64);
    let mean = x.iter().copied().sum::<T>() / n;
    let ss = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>();
    (mean, ss / (n - T::one()))
}

/// Potential scale reduction on half-chains. `chains` holds one series per chain.
/// Returns `None` (undefined) for fewer than two chains, fewer than four draws
/// per chain, or zero within-chain variance.
pub fn split_rhat<T: Scalar>(chains: &[&[T]]) -> Option<T> {
    let n = chains.iter().map(|c| c.len()).min()?;
    if chains.len() < 2 || n < 4 {
        return None;
    }
    let half = n / 2;
    let mut halves: Vec<&[T]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        // drop the middle draw when n is odd
        halves.push(&c[..half]);
        halves.push(&c[n - half..n]);
    }
    let stats: Vec<(T, T)> = halves.iter().map(|h| mean_var(h)).collect();
    let w = stats.iter().map(|s| s.1).sum::<T>() / T::lit(stats.len() as f64);
    if !(w > T::zero()) {
        return None;
    }
    let means: Vec<T> = stats.iter().map(|s| s.0).collect();
    let hn = T::lit(half as f64);
    let b = hn * mean_var(&means).1;
    let var_plus = (hn - T::one()) / hn * w + b / hn;
    Some((var_plus / w).sqrt())
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence.
/// Autocovariances are evaluated lag by lag until the sequence is truncated.
pub fn effective_sample_size(chains: &[&[f64]]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if m == 0 || n < 4 {
        return f64::NAN;
    }
    let centred: Vec<Vec<f64>> = chains
        .iter()
        .map(|c| {
            let mean = c[..n].iter().sum::<f64>() / n as f64;
            c[..n].iter().map(|v| v - mean).collect()
        })
        .collect();
    let chain_means: Vec<f64> = chains.iter().map(|c| c[..n].iter().sum::<f64>() / n as f64).collect();
    let mean_acov = |lag: usize| -> f64 {
        centred
            .iter()
            .map(|c| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
            .sum::<f64>()
            / m as f64
    };
    let acov0 = mean_acov(0);
    let within = acov0 * n as f64 / (n as f64 - 1.0);
    let mut var_plus = within * (n as f64 - 1.0) / n as f64;
    if m > 1 {
        var_plus += mean_var(&chain_means).1;
    }
    if !(var_plus > 0.0) {
        return f64::NAN;
    }
    let rho = |t: usize| if t == 0 { 1.0 - (within - acov0) / var_plus } else { 1.0 - (within - mean_acov(t)) / var_plus };
    let total = (m * n) as f64;
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let mut pair = rho(t) + rho(t + 1);
        if pair <= 0.0 {
            break;
        }
        if pair > prev_pair {
            pair = prev_pair;
        }
        tau += 2.0 * pair;
        prev_pair = pair;
        t += 2;
    }
    let tau = tau.max(1.0 / total.log10().max(1.0));
    total / tau
}

/// Monte Carlo standard error of the mean of `chains`.
pub fn mcse_mean(chains: &[&[f64]]) -> f64 {
    let all: Vec<f64> = chains.iter().flat_map(|c| c.iter().copied()).collect();
    let (_, var) = mean_var(&all);
    (var / effective_sample_size(chains)).sqrt()
}
