//! Gradient-based MCMC (NUTS) over an unconstrained log density, with warmup
//! adaptation and convergence diagnostics.

mod adapt;
pub mod diagnostics;
pub mod nuts;

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, ModelSpec, Posterior};
use crate::rng::{Purpose, StreamKey};
use crate::target::LogDensity;

pub use diagnostics::{effective_sample_size, mcse_mean, split_rhat, RHAT_THRESHOLD};
pub use nuts::{leapfrog, leapfrog_step, PhasePoint, TransitionInfo, MAX_DELTA_H};

use adapt::{DualAveraging, WindowedVariance};
use nuts::Nuts;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_warmup: usize,
    /// Post-warmup draws summed over all chains.
    pub n_draws_total: usize,
    pub target_accept: f64,
    pub max_treedepth: u32,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_chains: 4,
            n_warmup: 2000,
            n_draws_total: 8000,
            target_accept: 0.9,
            max_treedepth: 10,
            seed: 1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::Config("n_chains must be at least 1".into()));
        }
        if self.n_warmup < 100 {
            return Err(Error::Config(format!("n_warmup must be at least 100, got {}", self.n_warmup)));
        }
        if self.n_draws_total < self.n_chains {
            return Err(Error::Config("n_draws_total must be at least n_chains".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config("target_accept must lie in (0, 1)".into()));
        }
        if self.max_treedepth == 0 {
            return Err(Error::Config("max_treedepth must be at least 1".into()));
        }
        Ok(())
    }

    fn draws_in_chain(&self, chain: usize) -> usize {
        self.n_draws_total / self.n_chains + usize::from(chain < self.n_draws_total % self.n_chains)
    }
}

/// Post-warmup draws in unconstrained space, stored chain after chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Draws {
    pub dim: usize,
    /// Row-major `[n_draws × dim]`.
    pub values: Vec<f64>,
    pub chain: Vec<usize>,
    pub energy: Vec<f64>,
    pub divergent: Vec<bool>,
    pub treedepth: Vec<u32>,
    pub accept_stat: Vec<f64>,
}

impl Draws {
    /// Wraps independent draws, dealt into `n_chains` consecutive blocks.
    pub fn from_rows(rows: &[Vec<f64>], n_chains: usize) -> Draws {
        let n = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        let per = n.div_ceil(n_chains.max(1)).max(1);
        Draws {
            dim,
            values: rows.iter().flatten().copied().collect(),
            chain: (0..n).map(|i| i / per).collect(),
            energy: vec![0.0; n],
            divergent: vec![false; n],
            treedepth: vec![0; n],
            accept_stat: vec![1.0; n],
        }
    }

    pub fn n_draws(&self) -> usize {
        self.chain.len()
    }

    pub fn n_chains(&self) -> usize {
        self.chain.iter().max().map_or(0, |c| c + 1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim.max(1))
    }

    /// Per-chain traces of one coordinate.
    pub fn traces(&self, param: usize) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.n_chains()];
        for (i, &c) in self.chain.iter().enumerate() {
            out[c].push(self.values[i * self.dim + param]);
        }
        out
    }

    /// Per-chain sequences of an arbitrary scalar function of the draw.
    pub fn map_chains<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.n_chains()];
        for (i, &c) in self.chain.iter().enumerate() {
            out[c].push(f(self.row(i)));
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W, names: &[String]) -> std::io::Result<()> {
        write!(w, "chain,draw,energy,divergent,treedepth,accept_stat")?;
        for n in names {
            write!(w, ",{n}")?;
        }
        writeln!(w)?;
        let mut per_chain = vec![0usize; self.n_chains()];
        for i in 0..self.n_draws() {
            let c = self.chain[i];
            write!(
                w,
                "{},{},{},{},{},{}",
                c,
                per_chain[c],
                self.energy[i],
                u8::from(self.divergent[i]),
                self.treedepth[i],
                self.accept_stat[i]
            )?;
            per_chain[c] += 1;
            for v in self.row(i) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `None` where R̂ is undefined (zero within-chain variance or too few draws).
    pub split_rhat: Vec<Option<f64>>,
    pub n_divergent: usize,
    pub max_treedepth_hits: usize,
    pub step_sizes: Vec<f64>,
    pub warmup_divergent: usize,
}

impl Diagnostics {
    /// Largest defined R̂; `None` when any coordinate is undefined.
    pub fn rhat_max(&self) -> Option<f64> {
        self.split_rhat.iter().try_fold(f64::NEG_INFINITY, |m, r| r.map(|r| m.max(r)))
    }

    pub fn converged(&self) -> bool {
        self.rhat_max().is_some_and(|r| r < RHAT_THRESHOLD)
    }
}

struct ChainOutput {
    values: Vec<f64>,
    info: Vec<TransitionInfo>,
    step: f64,
    warmup_divergent: usize,
}

fn initial_point<D: LogDensity, R: Rng + ?Sized>(target: &D, rng: &mut R) -> Result<PhasePoint<f64>> {
    let dim = target.dim();
    let mut grad = vec![0.0; dim];
    for _ in 0..100 {
        let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let logp = target.log_density_gradient(&q, &mut grad);
        if logp.is_finite() && grad.iter().all(|g| g.is_finite()) {
            return Ok(PhasePoint { q, p: vec![0.0; dim], grad, logp });
        }
    }
    Err(Error::SamplerFailure("no finite initial point in 100 attempts".into()))
}

fn run_chain<D: LogDensity>(target: &D, config: &SamplerConfig, key: StreamKey, chain: usize) -> Result<ChainOutput> {
    let mut rng = key.with_sub(chain as u64).stream();
    let dim = target.dim();
    let mut z = initial_point(target, &mut rng)?;
    let mut nuts = Nuts { target, inv_mass: vec![1.0; dim], step: 1.0, max_depth: config.max_treedepth };
    nuts.init_step(&z, &mut rng);
    let mut averager = DualAveraging::new(nuts.step, config.target_accept);
    let mut windows = WindowedVariance::new(dim, config.n_warmup);
    let mut warmup_divergent = 0;
    for _ in 0..config.n_warmup {
        let info = nuts.transition(&mut z, &mut rng);
        warmup_divergent += usize::from(info.divergent);
        nuts.step = averager.update(info.accept_stat);
        if let Some(var) = windows.observe(&z.q) {
            nuts.inv_mass = var;
            nuts.init_step(&z, &mut rng);
            averager.restart(nuts.step);
        }
    }
    if warmup_divergent == config.n_warmup {
        return Err(Error::SamplerFailure(format!(
            "chain {chain}: all {} warmup transitions divergent (final step size {:.3e})",
            config.n_warmup, nuts.step
        )));
    }
    nuts.step = averager.final_step();
    let n = config.draws_in_chain(chain);
    let mut values = Vec::with_capacity(n * dim);
    let mut info = Vec::with_capacity(n);
    for _ in 0..n {
        info.push(nuts.transition(&mut z, &mut rng));
        values.extend_from_slice(&z.q);
    }
    Ok(ChainOutput { values, info, step: nuts.step, warmup_divergent })
}

/// Runs `config.n_chains` NUTS chains in parallel. Chain `c` draws from the
/// stream `key.with_sub(c)`, so results do not depend on scheduling.
pub fn sample_with_key<D: LogDensity>(target: &D, config: &SamplerConfig, key: StreamKey) -> Result<(Draws, Diagnostics)> {
    config.validate()?;
    let dim = target.dim();
    if dim == 0 {
        return Err(Error::Parameter("target dimension must be at least 1".into()));
    }
    let outputs: Vec<Result<ChainOutput>> =
        (0..config.n_chains).into_par_iter().map(|c| run_chain(target, config, key, c)).collect();
    let outputs: Vec<ChainOutput> = outputs.into_iter().collect::<Result<_>>()?;

    let mut draws = Draws {
        dim,
        values: Vec::with_capacity(config.n_draws_total * dim),
        chain: Vec::new(),
        energy: Vec::new(),
        divergent: Vec::new(),
        treedepth: Vec::new(),
        accept_stat: Vec::new(),
    };
    for (c, out) in outputs.iter().enumerate() {
        draws.values.extend_from_slice(&out.values);
        for info in &out.info {
            draws.chain.push(c);
            draws.energy.push(info.energy);
            draws.divergent.push(info.divergent);
            draws.treedepth.push(info.depth);
            draws.accept_stat.push(info.accept_stat);
        }
    }
    let split_rhat = (0..dim)
        .map(|j| {
            let traces = draws.traces(j);
            let refs: Vec<&[f64]> = traces.iter().map(Vec::as_slice).collect();
            split_rhat(&refs)
        })
        .collect();
    let diagnostics = Diagnostics {
        split_rhat,
        n_divergent: draws.divergent.iter().filter(|&&d| d).count(),
        max_treedepth_hits: draws.treedepth.iter().filter(|&&d| d >= config.max_treedepth).count(),
        step_sizes: outputs.iter().map(|o| o.step).collect(),
        warmup_divergent: outputs.iter().map(|o| o.warmup_divergent).sum(),
    };
    Ok((draws, diagnostics))
}

/// Samples an arbitrary target with streams derived from `config.seed`.
pub fn sample<D: LogDensity>(target: &D, config: &SamplerConfig) -> Result<(Draws, Diagnostics)> {
    sample_with_key(target, config, StreamKey::new(config.seed, Purpose::FitH1, 0))
}

/// Samples the posterior of `model` given `data`.
pub fn sample_posterior(model: &ModelSpec, data: &Dataset, config: &SamplerConfig) -> Result<(Draws, Diagnostics)> {
    let posterior = Posterior::new(model, data)?;
    sample(&posterior, config)
}
