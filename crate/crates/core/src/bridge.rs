//! Marginal likelihood estimation by iterative optimal bridge sampling,
//! with the plain normal proposal and the warp-III transformation.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, Lower};
use crate::sampler::{effective_sample_size, Draws};
use crate::scalar::{log_add_exp, log_mean_exp, log_sum_exp};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Largest fraction of non-finite log-target evaluations tolerated.
pub const MAX_EXCLUDED_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BridgeMethod {
    Plain,
    Warp3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BridgeConfig {
    pub maxiter: usize,
    pub tol: f64,
    pub method: BridgeMethod,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        BridgeConfig { maxiter: 1000, tol: 1e-10, method: BridgeMethod::Warp3 }
    }
}

impl BridgeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.maxiter == 0 {
            return Err(Error::Config("bridge maxiter must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("bridge tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeResult {
    pub logml: f64,
    /// Iterations of the pass that produced `logml`.
    pub n_iterations: usize,
    pub converged: bool,
    /// Set when the first pass hit `maxiter`, whatever the rerun did.
    pub warning: bool,
    pub relative_error_estimate: f64,
    pub method: BridgeMethod,
    pub excluded: usize,
    pub jittered: bool,
}

/// Multivariate normal `N(mean, chol·cholᵀ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub mean: Vec<f64>,
    pub chol: Lower<f64>,
    pub jittered: bool,
}

impl Proposal {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `η = L⁻¹(x − m)`.
    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let mut out = vec![0.0; d.len()];
        self.chol.solve(&d, &mut out);
        out
    }

    /// `m + s·Lη`.
    pub fn unstandardize(&self, eta: &[f64], sign: f64) -> Vec<f64> {
        let mut out = vec![0.0; eta.len()];
        self.chol.mul_vec(eta, &mut out);
        out.iter_mut().zip(&self.mean).for_each(|(o, m)| *o = m + sign * *o);
        out
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let eta = self.standardize(x);
        std_normal_lpdf(&eta) - self.chol.log_diag_sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let eta: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        self.unstandardize(&eta, 1.0)
    }

    /// Same mean, covariance multiplied by `factor`.
    pub fn with_scaled_covariance(&self, factor: f64) -> Proposal {
        let s = factor.sqrt();
        let n = self.dim();
        let data = self.chol.as_slice().iter().map(|v| v * s).collect();
        Proposal { mean: self.mean.clone(), chol: Lower::from_rows(n, data).expect("scaled factor"), jittered: self.jittered }
    }
}

fn std_normal_lpdf(eta: &[f64]) -> f64 {
    -0.5 * eta.iter().map(|v| v * v).sum::<f64>() - 0.5 * eta.len() as f64 * LN_2PI
}

/// Moment-matched normal fitted to `rows`. A covariance that is not
/// numerically positive definite receives a diagonal jitter.
pub fn fit_proposal(rows: &[&[f64]]) -> Result<Proposal> {
    let n = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    if d == 0 {
        return Err(Error::Parameter("cannot fit a proposal to zero-dimensional draws".into()));
    }
    if n < 2 * d {
        return Err(Error::Estimation(format!("{n} draws are too few to fit a {d}-dimensional proposal")));
    }
    let mut mean = vec![0.0; d];
    for r in rows {
        crate::error::check_dim(d, r.len())?;
        mean.iter_mut().zip(r.iter()).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; d * d];
    for r in rows {
        for i in 0..d {
            let di = r[i] - mean[i];
            for j in 0..=i {
                cov[i * d + j] += di * (r[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            let v = cov[i * d + j] / (n as f64 - 1.0);
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    if let Ok(chol) = cholesky(d, &cov) {
        let min_diag = (0..d).map(|i| chol.get(i, i)).fold(f64::INFINITY, f64::min);
        let max_sd = (0..d).map(|i| cov[i * d + i].sqrt()).fold(0.0, f64::max);
        if min_diag > 1e-12 * max_sd {
            return Ok(Proposal { mean, chol, jittered: false });
        }
    }
    let mean_diag = (0..d).map(|i| cov[i * d + i]).sum::<f64>() / d as f64;
    let mut jitter = if mean_diag > 0.0 && mean_diag.is_finite() { 1e-8 * mean_diag } else { 1e-8 };
    for _ in 0..20 {
        let mut c = cov.clone();
        (0..d).for_each(|i| c[i * d + i] += jitter);
        if let Ok(chol) = cholesky(d, &c) {
            return Ok(Proposal { mean, chol, jittered: true });
        }
        jitter *= 10.0;
    }
    Err(Error::Estimation("proposal covariance could not be regularised".into()))
}

/// Warp-III view of a target: `η ↦ ln|L| + ln ½[p(m + Lη) + p(m − Lη)]`,
/// whose normaliser equals the original one.
pub struct Warp3<'a, F> {
    pub log_target: &'a F,
    pub proposal: &'a Proposal,
}

impl<F: Fn(&[f64]) -> f64> Warp3<'_, F> {
    pub fn log_density(&self, eta: &[f64]) -> f64 {
        let a = (self.log_target)(&self.proposal.unstandardize(eta, 1.0));
        let b = (self.log_target)(&self.proposal.unstandardize(eta, -1.0));
        self.proposal.chol.log_diag_sum() + log_add_exp(a, b) - std::f64::consts::LN_2
    }
}

/// Standardizes `rows` by the proposal and flips each with probability ½.
pub fn warp3_transform<R: Rng + ?Sized>(rows: &[&[f64]], proposal: &Proposal, rng: &mut R) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| {
            let mut eta = proposal.standardize(r);
            if rng.random::<bool>() {
                eta.iter_mut().for_each(|v| *v = -*v);
            }
            eta
        })
        .collect()
}

/// Posterior draws reserved for the bridge iteration, with their chain labels.
pub struct IterationDraws<'a> {
    pub rows: Vec<&'a [f64]>,
    pub chain: Vec<usize>,
}

/// Splits every chain in half: the first halves fit the proposal, the second
/// halves enter the bridge iteration.
pub fn split_draws(draws: &Draws) -> (Vec<&[f64]>, IterationDraws<'_>) {
    let n_chains = draws.n_chains();
    let mut counts = vec![0usize; n_chains];
    draws.chain.iter().for_each(|&c| counts[c] += 1);
    let mut seen = vec![0usize; n_chains];
    let mut fit = Vec::new();
    let mut iter = IterationDraws { rows: Vec::new(), chain: Vec::new() };
    for (i, &c) in draws.chain.iter().enumerate() {
        if seen[c] < counts[c] / 2 {
            fit.push(draws.row(i));
        } else {
            iter.rows.push(draws.row(i));
            iter.chain.push(c);
        }
        seen[c] += 1;
    }
    (fit, iter)
}

struct Pass {
    log_r: f64,
    iterations: usize,
    converged: bool,
}

fn iterate(l1: &[f64], l2: &[f64], log_r0: f64, maxiter: usize, tol: f64) -> Pass {
    let (n1, n2) = (l1.len() as f64, l2.len() as f64);
    let (ln_s1, ln_s2) = ((n1 / (n1 + n2)).ln(), (n2 / (n1 + n2)).ln());
    let ln_ratio = (n1 / n2).ln();
    let mut log_r = log_r0;
    let mut num = vec![0.0; l2.len()];
    let mut den = vec![0.0; l1.len()];
    for i in 1..=maxiter {
        let b = ln_s2 + log_r;
        num.iter_mut().zip(l2).for_each(|(o, &l)| *o = l - log_add_exp(ln_s1 + l, b));
        den.iter_mut().zip(l1).for_each(|(o, &l)| *o = -log_add_exp(ln_s1 + l, b));
        let new = ln_ratio + log_sum_exp(&num) - log_sum_exp(&den);
        let change = (1.0 - (log_r - new).exp()).abs();
        log_r = new;
        if !log_r.is_finite() {
            return Pass { log_r, iterations: i, converged: false };
        }
        if change < tol {
            return Pass { log_r, iterations: i, converged: true };
        }
    }
    Pass { log_r, iterations: maxiter, converged: false }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

fn relative_error(q11: &[f64], q12: &[f64], q21: &[f64], q22: &[f64], chain: &[usize], logml: f64) -> f64 {
    let (n1, n2) = (q11.len() as f64, q21.len() as f64);
    let (s1, s2) = (n1 / (n1 + n2), n2 / (n1 + n2));
    // f1 on proposal draws, f2 on posterior draws; both are bounded ratios.
    let f1: Vec<f64> = q21
        .iter()
        .zip(q22)
        .map(|(&p, &g)| {
            let lp = p - logml;
            1.0 / (s1 + s2 * (g - lp).exp())
        })
        .collect();
    let f2: Vec<f64> = q11
        .iter()
        .zip(q12)
        .map(|(&p, &g)| {
            let lp = p - logml;
            1.0 / (s1 * (lp - g).exp() + s2)
        })
        .collect();
    let (m1, v1) = mean_var(&f1);
    let (m2, v2) = mean_var(&f2);
    let n_chains = chain.iter().max().map_or(1, |c| c + 1);
    let mut per_chain = vec![Vec::new(); n_chains];
    chain.iter().zip(&f2).for_each(|(&c, &v)| per_chain[c].push(v));
    let refs: Vec<&[f64]> = per_chain.iter().map(Vec::as_slice).filter(|c| !c.is_empty()).collect();
    let ess = if v2 > 0.0 { effective_sample_size(&refs).clamp(1.0, n1) } else { n1 };
    let re2 = v1 / (n2 * m1 * m1) + v2 / (ess * m2 * m2);
    if re2.is_finite() {
        re2.max(0.0).sqrt()
    } else {
        f64::INFINITY
    }
}

fn keep_finite(a: Vec<f64>, b: Vec<f64>, chain: Option<&[usize]>) -> (Vec<f64>, Vec<f64>, Vec<usize>, usize) {
    let mut out = (Vec::with_capacity(a.len()), Vec::with_capacity(a.len()), Vec::new(), 0);
    for (i, (x, y)) in a.into_iter().zip(b).enumerate() {
        if x.is_finite() && y.is_finite() {
            out.0.push(x);
            out.1.push(y);
            if let Some(c) = chain {
                out.2.push(c[i]);
            }
        } else {
            out.3 += 1;
        }
    }
    out
}

/// Bridge estimate of `ln ∫ exp(log_target)` from posterior draws and a
/// fitted proposal. Draws `N2 = N1` fresh points from the proposal.
pub fn bridge_logml<F, R>(
    log_target: &F,
    posterior: &IterationDraws<'_>,
    proposal: &Proposal,
    config: &BridgeConfig,
    rng: &mut R,
) -> Result<BridgeResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
    R: Rng + ?Sized,
{
    config.validate()?;
    let n1 = posterior.rows.len();
    if n1 < 2 {
        return Err(Error::Estimation("at least two posterior draws are required".into()));
    }
    let d = proposal.dim();
    let gen: Vec<Vec<f64>> =
        (0..n1).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let (q11, q12, q21, q22) = match config.method {
        BridgeMethod::Plain => {
            let q11 = posterior.rows.par_iter().map(|r| log_target(r)).collect();
            let q12 = posterior.rows.iter().map(|r| proposal.log_density(r)).collect();
            let pts: Vec<Vec<f64>> = gen.iter().map(|e| proposal.unstandardize(e, 1.0)).collect();
            let q21 = pts.par_iter().map(|x| log_target(x)).collect();
            let q22 = pts.iter().map(|x| proposal.log_density(x)).collect();
            (q11, q12, q21, q22)
        }
        BridgeMethod::Warp3 => {
            let warp = Warp3 { log_target, proposal };
            let eta = warp3_transform(&posterior.rows, proposal, rng);
            let q11 = eta.par_iter().map(|e| warp.log_density(e)).collect();
            let q12 = eta.iter().map(|e| std_normal_lpdf(e)).collect();
            let q21 = gen.par_iter().map(|e| warp.log_density(e)).collect();
            let q22 = gen.iter().map(|e| std_normal_lpdf(e)).collect();
            (q11, q12, q21, q22)
        }
    };
    let (q11, q12, chain, ex1) = keep_finite(q11, q12, Some(&posterior.chain));
    let (q21, q22, _, ex2) = keep_finite(q21, q22, None);
    let excluded = ex1 + ex2;
    if excluded as f64 > MAX_EXCLUDED_FRACTION * (2 * n1) as f64 || q11.len() < 2 || q21.len() < 2 {
        return Err(Error::Estimation(format!("{excluded} of {} log-target evaluations were not finite", 2 * n1)));
    }
    let l1: Vec<f64> = q11.iter().zip(&q12).map(|(a, b)| a - b).collect();
    let l2: Vec<f64> = q21.iter().zip(&q22).map(|(a, b)| a - b).collect();
    let lstar = median(&l1);
    let l1s: Vec<f64> = l1.iter().map(|v| v - lstar).collect();
    let l2s: Vec<f64> = l2.iter().map(|v| v - lstar).collect();

    let first = iterate(&l1s, &l2s, 0.5f64.ln(), config.maxiter, config.tol);
    let warning = !first.converged;
    let pass = if first.converged {
        first
    } else {
        let restart = log_mean_exp(&l2s);
        let second = iterate(&l1s, &l2s, restart, config.maxiter, config.tol);
        if second.log_r.is_finite() || !first.log_r.is_finite() {
            second
        } else {
            Pass { converged: false, ..first }
        }
    };
    let logml = pass.log_r + lstar;
    if !logml.is_finite() {
        return Err(Error::Estimation("bridge iteration diverged".into()));
    }
    let re = relative_error(&q11, &q12, &q21, &q22, &chain, logml);
    Ok(BridgeResult {
        logml,
        n_iterations: pass.iterations,
        converged: pass.converged,
        warning,
        relative_error_estimate: re,
        method: config.method,
        excluded,
        jittered: proposal.jittered,
    })
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fits the proposal on the first half of each chain and runs the bridge
/// iteration on the second halves.
pub fn estimate_logml<F, R>(log_target: &F, draws: &Draws, config: &BridgeConfig, rng: &mut R) -> Result<BridgeResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
    R: Rng + ?Sized,
{
    let (fit, iter) = split_draws(draws);
    let proposal = fit_proposal(&fit)?;
    bridge_logml(log_target, &iter, &proposal, config, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesFactor {
    pub bf: f64,
    pub log_bf: f64,
}

/// `BF12 = exp(logml_1 − logml_2)`.
pub fn bayes_factor(logml_1: f64, logml_2: f64) -> BayesFactor {
    let log_bf = logml_1 - logml_2;
    BayesFactor { bf: log_bf.exp(), log_bf }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelProbability {
    pub prob: f64,
    /// The prior was 0 or 1, so the data could not move it.
    pub degenerate: bool,
}

/// Posterior probability of H1 from `ln BF10` and the prior probability of H1.
pub fn posterior_model_prob(log_bf10: f64, prior_h1: f64) -> Result<ModelProbability> {
    if !(0.0..=1.0).contains(&prior_h1) {
        return Err(Error::Parameter(format!("prior probability {prior_h1} outside [0, 1]")));
    }
    if prior_h1 == 0.0 || prior_h1 == 1.0 {
        return Ok(ModelProbability { prob: prior_h1, degenerate: true });
    }
    if log_bf10 == 0.0 {
        return Ok(ModelProbability { prob: prior_h1, degenerate: false });
    }
    let logit = log_bf10 + prior_h1.ln() - (-prior_h1).ln_1p();
    let prob = if logit >= 0.0 { 1.0 / (1.0 + (-logit).exp()) } else { logit.exp() / (1.0 + logit.exp()) };
    Ok(ModelProbability { prob, degenerate: false })
}
