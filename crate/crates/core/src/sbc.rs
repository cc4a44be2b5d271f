//! Marginal simulation-based calibration: draw a model from its prior, draw
//! parameters and data, fit both hypotheses, and record the posterior model
//! probability. Averaged over simulations it must equal the prior probability.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bridge::{bayes_factor, estimate_logml, posterior_model_prob, BridgeConfig, BridgeResult};
use crate::conjugate::{ConjugateLinear, ConjugateTarget};
use crate::error::{Error, Result};
use crate::model::{Dataset, DesignSpec, Effect, Hypothesis, ModelSpec, Posterior, Priors};
use crate::rng::{Purpose, Stream, StreamKey};
use crate::sampler::{sample_with_key, Diagnostics, Draws, SamplerConfig};
use crate::simulate::{draw_parameters, sample_true_model, simulate_dataset};

pub const SCHEMA_VERSION: u32 = 1;

/// Stream keys handed to one fit.
#[derive(Debug, Clone, Copy)]
pub struct FitKeys {
    pub sampler: StreamKey,
    pub bridge: StreamKey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcSummary {
    pub rhat_max: Option<f64>,
    pub converged: bool,
    pub n_divergent: usize,
    pub max_treedepth_hits: usize,
    pub warmup_divergent: usize,
    pub step_sizes: Vec<f64>,
}

impl From<&Diagnostics> for McmcSummary {
    fn from(d: &Diagnostics) -> Self {
        McmcSummary {
            rhat_max: d.rhat_max(),
            converged: d.converged(),
            n_divergent: d.n_divergent,
            max_treedepth_hits: d.max_treedepth_hits,
            warmup_divergent: d.warmup_divergent,
            step_sizes: d.step_sizes.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub bridge: BridgeResult,
    pub mcmc: Option<McmcSummary>,
    pub analytic_logml: Option<f64>,
    pub sample_seconds: f64,
    pub bridge_seconds: f64,
}

/// A data-generating process together with the fitting procedure for its two hypotheses.
pub trait SbcProblem: Sync {
    type Data: Send + Sync;

    fn prior_h1(&self) -> f64;

    /// Draws parameters under `truth` and simulates one dataset.
    fn simulate(&self, truth: Hypothesis, params: &mut Stream, noise: &mut Stream) -> Result<Self::Data>;

    fn fit(&self, sim_id: u64, hypothesis: Hypothesis, data: &Self::Data, keys: FitKeys) -> Result<FitOutcome>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    SamplerFailure,
    EstimationError,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub logml: f64,
    pub warning: bool,
    pub converged: bool,
    pub n_iterations: usize,
    /// `None` when the estimate is not finite.
    pub relative_error_estimate: Option<f64>,
    pub excluded: usize,
    pub jittered: bool,
    pub mcmc: Option<McmcSummary>,
    pub analytic_logml: Option<f64>,
}

impl From<&FitOutcome> for FitRecord {
    fn from(f: &FitOutcome) -> Self {
        let re = f.bridge.relative_error_estimate;
        FitRecord {
            logml: f.bridge.logml,
            warning: f.bridge.warning,
            converged: f.bridge.converged,
            n_iterations: f.bridge.n_iterations,
            relative_error_estimate: re.is_finite().then_some(re),
            excluded: f.bridge.excluded,
            jittered: f.bridge.jittered,
            mcmc: f.mcmc.clone(),
            analytic_logml: f.analytic_logml,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedTrail {
    pub base_seed: u64,
    pub sim_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbcRunRecord {
    pub schema_version: u32,
    pub sim_id: u64,
    pub status: RunStatus,
    pub error: Option<String>,
    pub true_model: Hypothesis,
    pub prior_h1: f64,
    pub logml_h0: Option<f64>,
    pub logml_h1: Option<f64>,
    pub log_bf10: Option<f64>,
    pub posterior_h1: Option<f64>,
    pub degenerate_prior: bool,
    /// Either fit's bridge estimator needed a rerun.
    pub warning: bool,
    pub rhat_max: Option<f64>,
    /// Some fit had R̂ above threshold or undefined.
    pub rhat_flag: bool,
    pub n_divergent: usize,
    pub fit_h0: Option<FitRecord>,
    pub fit_h1: Option<FitRecord>,
    pub seeds: SeedTrail,
}

impl SbcRunRecord {
    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    /// `posterior_h1 − 1{true model is H1}`.
    pub fn deviation(&self) -> Option<f64> {
        self.posterior_h1.map(|p| p - self.true_model.indicator())
    }
}

/// Wall-clock seconds per stage; kept apart from the records so that those stay reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub sim_id: u64,
    pub simulate: f64,
    pub sample_h0: f64,
    pub bridge_h0: f64,
    pub sample_h1: f64,
    pub bridge_h1: f64,
}

fn status_of(e: &Error) -> RunStatus {
    match e {
        Error::SamplerFailure(_) => RunStatus::SamplerFailure,
        Error::Estimation(_) => RunStatus::EstimationError,
        _ => RunStatus::Error,
    }
}

/// The true model and dataset of simulation `sim_id`, drawn from the same
/// streams that [`run_one`] uses.
pub fn simulate_one<P: SbcProblem>(problem: &P, sim_id: u64, base_seed: u64) -> Result<(Hypothesis, P::Data)> {
    let key = |p| StreamKey::new(base_seed, p, sim_id);
    let truth = sample_true_model(problem.prior_h1(), &mut key(Purpose::ModelDraw).stream())?;
    let data = problem.simulate(truth, &mut key(Purpose::ParameterDraw).stream(), &mut key(Purpose::Noise).stream())?;
    Ok((truth, data))
}

/// One simulation, fully determined by `(base_seed, sim_id)`. Failures are
/// reported through the record status.
pub fn run_one<P: SbcProblem>(problem: &P, sim_id: u64, base_seed: u64) -> (SbcRunRecord, RunTiming) {
    let key = |p| StreamKey::new(base_seed, p, sim_id);
    let mut timing = RunTiming { sim_id, simulate: 0.0, sample_h0: 0.0, bridge_h0: 0.0, sample_h1: 0.0, bridge_h1: 0.0 };
    let prior_h1 = problem.prior_h1();
    let mut record = SbcRunRecord {
        schema_version: SCHEMA_VERSION,
        sim_id,
        status: RunStatus::Ok,
        error: None,
        true_model: Hypothesis::H0,
        prior_h1,
        logml_h0: None,
        logml_h1: None,
        log_bf10: None,
        posterior_h1: None,
        degenerate_prior: false,
        warning: false,
        rhat_max: None,
        rhat_flag: false,
        n_divergent: 0,
        fit_h0: None,
        fit_h1: None,
        seeds: SeedTrail { base_seed, sim_id },
    };
    let fail = |mut r: SbcRunRecord, e: Error| {
        r.status = status_of(&e);
        r.error = Some(e.to_string());
        r
    };
    let truth = match sample_true_model(prior_h1, &mut key(Purpose::ModelDraw).stream()) {
        Ok(t) => t,
        Err(e) => return (fail(record, e), timing),
    };
    record.true_model = truth;
    let start = Instant::now();
    let data = problem.simulate(truth, &mut key(Purpose::ParameterDraw).stream(), &mut key(Purpose::Noise).stream());
    timing.simulate = start.elapsed().as_secs_f64();
    let data = match data {
        Ok(d) => d,
        Err(e) => return (fail(record, e), timing),
    };
    let bridge = key(Purpose::Bridge);
    let h0 = problem.fit(sim_id, Hypothesis::H0, &data, FitKeys { sampler: key(Purpose::FitH0), bridge: bridge.with_sub(0) });
    let h1 = problem.fit(sim_id, Hypothesis::H1, &data, FitKeys { sampler: key(Purpose::FitH1), bridge: bridge.with_sub(1) });
    for (fit, s, b) in [(&h0, &mut timing.sample_h0, &mut timing.bridge_h0), (&h1, &mut timing.sample_h1, &mut timing.bridge_h1)] {
        if let Ok(f) = fit {
            *s = f.sample_seconds;
            *b = f.bridge_seconds;
        }
    }
    record.fit_h0 = h0.as_ref().ok().map(FitRecord::from);
    record.fit_h1 = h1.as_ref().ok().map(FitRecord::from);
    let mcmc: Vec<&McmcSummary> = [&record.fit_h0, &record.fit_h1].into_iter().flatten().filter_map(|f| f.mcmc.as_ref()).collect();
    record.rhat_max = mcmc.iter().filter_map(|m| m.rhat_max).reduce(f64::max);
    record.rhat_flag = mcmc.iter().any(|m| !m.converged);
    record.n_divergent = mcmc.iter().map(|m| m.n_divergent).sum();
    record.warning = [&record.fit_h0, &record.fit_h1].into_iter().flatten().any(|f| f.warning);
    let (h0, h1) = match (h0, h1) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return (fail(record, e), timing),
    };
    record.logml_h0 = Some(h0.bridge.logml);
    record.logml_h1 = Some(h1.bridge.logml);
    let bf = bayes_factor(h1.bridge.logml, h0.bridge.logml);
    record.log_bf10 = Some(bf.log_bf);
    match posterior_model_prob(bf.log_bf, prior_h1) {
        Ok(p) => {
            record.posterior_h1 = Some(p.prob);
            record.degenerate_prior = p.degenerate;
        }
        Err(e) => return (fail(record, e), timing),
    }
    (record, timing)
}

/// Output locations and scheduling for [`run_sbc`].
#[derive(Debug, Clone, Default)]
pub struct BatchOptions {
    /// JSON-lines file receiving one record per simulation.
    pub records: Option<PathBuf>,
    pub timings: Option<PathBuf>,
    /// Keep records already present in `records` and run only the missing ids.
    pub resume: bool,
    /// Worker threads; the global pool when `None`.
    pub jobs: Option<usize>,
}

/// Reads a records file, dropping a trailing line that does not parse (an
/// interrupted write).
pub fn read_records(path: &Path) -> Result<Vec<SbcRunRecord>> {
    let file = File::open(path)?;
    let lines: Vec<String> = BufReader::new(file).lines().collect::<std::io::Result<_>>()?;
    let mut out = Vec::with_capacity(lines.len());
    let last = lines.len().saturating_sub(1);
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<SbcRunRecord>(line) {
            Ok(r) => out.push(r),
            Err(_) if i == last => break,
            Err(e) => return Err(Error::Data(format!("{}: line {}: {e}", path.display(), i + 1))),
        }
    }
    Ok(out)
}

/// Writes records sorted by `sim_id`, one JSON object per line.
pub fn write_records(path: &Path, records: &[SbcRunRecord]) -> Result<()> {
    let mut sorted: Vec<&SbcRunRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.sim_id);
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        for r in sorted {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Runs simulations `0..n_sims`. Completed records are appended to
/// `options.records` by a single writer as they finish; at the end the file is
/// rewritten in `sim_id` order. Returns all records sorted by `sim_id`.
pub fn run_sbc<P: SbcProblem>(problem: &P, n_sims: u64, base_seed: u64, options: &BatchOptions) -> Result<Vec<SbcRunRecord>> {
    if n_sims == 0 {
        return Err(Error::Config("n_sims must be at least 1".into()));
    }
    let mut done: BTreeMap<u64, SbcRunRecord> = BTreeMap::new();
    if let (Some(path), true) = (&options.records, options.resume) {
        if path.exists() {
            for r in read_records(path)? {
                if r.sim_id < n_sims {
                    done.insert(r.sim_id, r);
                }
            }
        }
    }
    let todo: Vec<u64> = (0..n_sims).filter(|id| !done.contains_key(id)).collect();

    let new_records = match &options.records {
        None => with_pool(options.jobs, || {
            todo.par_iter().map(|&id| run_one(problem, id, base_seed).0).collect::<Vec<_>>()
        })?,
        Some(path) => {
            let existing: Vec<SbcRunRecord> = done.values().cloned().collect();
            write_records(path, &existing)?;
            let mut out = OpenOptions::new().append(true).open(path)?;
            let mut timing_out = match &options.timings {
                Some(t) => Some(OpenOptions::new().create(true).append(true).open(t)?),
                None => None,
            };
            let (tx, rx) = mpsc::channel::<(SbcRunRecord, RunTiming)>();
            std::thread::scope(|scope| -> Result<Vec<SbcRunRecord>> {
                let writer = scope.spawn(move || -> Result<Vec<SbcRunRecord>> {
                    let mut got = Vec::new();
                    for (record, timing) in rx {
                        let mut line = serde_json::to_string(&record)?;
                        line.push('\n');
                        out.write_all(line.as_bytes())?;
                        out.flush()?;
                        if let Some(t) = timing_out.as_mut() {
                            let mut line = serde_json::to_string(&timing)?;
                            line.push('\n');
                            t.write_all(line.as_bytes())?;
                        }
                        got.push(record);
                    }
                    Ok(got)
                });
                with_pool(options.jobs, || {
                    todo.par_iter().for_each_with(tx, |tx, &id| {
                        let _ = tx.send(run_one(problem, id, base_seed));
                    });
                })?;
                writer.join().map_err(|_| Error::Data("record writer panicked".into()))?
            })?
        }
    };
    for r in new_records {
        done.insert(r.sim_id, r);
    }
    let all: Vec<SbcRunRecord> = done.into_values().collect();
    if let Some(path) = &options.records {
        write_records(path, &all)?;
    }
    Ok(all)
}

/// Splits successful records by the warning flag into `(clean, warned)`.
pub fn partition_by_warning(records: &[SbcRunRecord]) -> (Vec<SbcRunRecord>, Vec<SbcRunRecord>) {
    records.iter().filter(|r| r.is_ok()).cloned().partition(|r| !r.warning)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbcSummary {
    pub n: usize,
    pub mean_deviation: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_clean: usize,
    pub n_warned: usize,
    /// Records without a posterior probability (failed runs).
    pub n_excluded: usize,
}

impl SbcSummary {
    pub fn ci_contains_zero(&self) -> bool {
        self.ci_low <= 0.0 && 0.0 <= self.ci_high
    }
}

/// Mean of `posterior_h1 − 1{H1 true}` with a normal-approximation 95% interval.
pub fn marginal_check(records: &[SbcRunRecord]) -> Result<SbcSummary> {
    let d: Vec<f64> = records.iter().filter(|r| r.is_ok()).filter_map(SbcRunRecord::deviation).collect();
    let n = d.len();
    if n < 2 {
        return Err(Error::DegenerateData(format!("marginal check needs at least 2 records, got {n}")));
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let se = (var / n as f64).sqrt();
    let ok = records.iter().filter(|r| r.is_ok() && r.posterior_h1.is_some());
    let n_warned = ok.clone().filter(|r| r.warning).count();
    Ok(SbcSummary {
        n,
        mean_deviation: mean,
        se,
        ci_low: mean - 1.96 * se,
        ci_high: mean + 1.96 * se,
        n_clean: n - n_warned,
        n_warned,
        n_excluded: records.len() - n,
    })
}

/// The linear mixed model problem over one of the factorial designs.
#[derive(Debug, Clone)]
pub struct LmmProblem {
    pub h0: ModelSpec,
    pub h1: ModelSpec,
    pub prior_h1: f64,
    pub sampler: SamplerConfig,
    pub bridge: BridgeConfig,
    /// Directory receiving `draws_<sim>_<h0|h1>.csv`.
    pub dump_draws: Option<PathBuf>,
}

impl LmmProblem {
    pub fn new(design: DesignSpec, priors: Priors, effect: Effect, prior_h1: f64, sampler: SamplerConfig, bridge: BridgeConfig) -> Result<Self> {
        if !(0.0..=1.0).contains(&prior_h1) {
            return Err(Error::Config(format!("prior_h1 {prior_h1} outside [0, 1]")));
        }
        sampler.validate()?;
        bridge.validate()?;
        let (h0, h1) = ModelSpec::pair(design, priors, effect)?;
        Ok(LmmProblem { h0, h1, prior_h1, sampler, bridge, dump_draws: None })
    }

    pub fn model(&self, h: Hypothesis) -> &ModelSpec {
        if h.is_h1() {
            &self.h1
        } else {
            &self.h0
        }
    }
}

impl SbcProblem for LmmProblem {
    type Data = Dataset;

    fn prior_h1(&self) -> f64 {
        self.prior_h1
    }

    fn simulate(&self, truth: Hypothesis, params: &mut Stream, noise: &mut Stream) -> Result<Dataset> {
        let model = self.model(truth);
        let theta = draw_parameters(model, params)?;
        simulate_dataset(model, &theta, noise)
    }

    fn fit(&self, sim_id: u64, hypothesis: Hypothesis, data: &Dataset, keys: FitKeys) -> Result<FitOutcome> {
        let posterior = Posterior::new(self.model(hypothesis), data)?;
        let start = Instant::now();
        let (draws, diagnostics) = sample_with_key(&posterior, &self.sampler, keys.sampler)?;
        let sample_seconds = start.elapsed().as_secs_f64();
        if let Some(dir) = &self.dump_draws {
            let name = format!("draws_{sim_id}_{}.csv", if hypothesis.is_h1() { "h1" } else { "h0" });
            let w = BufWriter::new(File::create(dir.join(name))?);
            draws.write_csv(w, &posterior.layout().names())?;
        }
        let start = Instant::now();
        let target = |x: &[f64]| posterior.log_joint::<f64>(x);
        let bridge = estimate_logml(&target, &draws, &self.bridge, &mut keys.bridge.stream())?;
        Ok(FitOutcome {
            bridge,
            mcmc: Some(McmcSummary::from(&diagnostics)),
            analytic_logml: None,
            sample_seconds,
            bridge_seconds: start.elapsed().as_secs_f64(),
        })
    }
}

/// Where the conjugate problem's posterior draws come from.
#[derive(Debug, Clone, PartialEq)]
pub enum PosteriorSource {
    /// Independent draws from the closed-form posterior.
    Exact { n_draws: usize },
    Mcmc(SamplerConfig),
}

/// Conjugate regression with the coefficient `tested` removed under H0.
#[derive(Debug, Clone)]
pub struct ConjugateProblem {
    pub h1: ConjugateLinear,
    pub h0: ConjugateLinear,
    pub tested: usize,
    pub prior_h1: f64,
    pub source: PosteriorSource,
    pub bridge: BridgeConfig,
}

impl ConjugateProblem {
    pub fn new(h1: ConjugateLinear, tested: usize, prior_h1: f64, source: PosteriorSource, bridge: BridgeConfig) -> Result<Self> {
        h1.validate()?;
        if tested >= h1.dim() || h1.dim() < 2 {
            return Err(Error::Config("tested coefficient must index one of at least two columns".into()));
        }
        if !(0.0..=1.0).contains(&prior_h1) {
            return Err(Error::Config(format!("prior_h1 {prior_h1} outside [0, 1]")));
        }
        let h0 = h1.without(tested);
        Ok(ConjugateProblem { h1, h0, tested, prior_h1, source, bridge })
    }

    pub fn model(&self, h: Hypothesis) -> &ConjugateLinear {
        if h.is_h1() {
            &self.h1
        } else {
            &self.h0
        }
    }

    /// Closed-form posterior probability of H1.
    pub fn exact_posterior_h1(&self, y: &[f64]) -> Result<f64> {
        let lbf = self.h1.log_evidence(y)? - self.h0.log_evidence(y)?;
        Ok(posterior_model_prob(lbf, self.prior_h1)?.prob)
    }
}

impl SbcProblem for ConjugateProblem {
    type Data = Vec<f64>;

    fn prior_h1(&self) -> f64 {
        self.prior_h1
    }

    fn simulate(&self, truth: Hypothesis, params: &mut Stream, noise: &mut Stream) -> Result<Vec<f64>> {
        let mut theta = self.h1.sample_prior(params);
        if !truth.is_h1() {
            theta[self.tested] = 0.0;
        }
        Ok(self.h1.simulate(&theta, noise))
    }

    fn fit(&self, _sim_id: u64, hypothesis: Hypothesis, y: &Vec<f64>, keys: FitKeys) -> Result<FitOutcome> {
        let model = self.model(hypothesis);
        let start = Instant::now();
        let (draws, mcmc) = match &self.source {
            PosteriorSource::Exact { n_draws } => {
                let rows = model.sample_posterior(y, *n_draws, &mut keys.sampler.stream())?;
                (Draws::from_rows(&rows, 4), None)
            }
            PosteriorSource::Mcmc(cfg) => {
                let target = ConjugateTarget { model, y };
                let (d, diag) = sample_with_key(&target, cfg, keys.sampler)?;
                (d, Some(McmcSummary::from(&diag)))
            }
        };
        let sample_seconds = start.elapsed().as_secs_f64();
        let start = Instant::now();
        let target = |x: &[f64]| model.log_joint(x, y);
        let bridge = estimate_logml(&target, &draws, &self.bridge, &mut keys.bridge.stream())?;
        Ok(FitOutcome {
            bridge,
            mcmc,
            analytic_logml: Some(model.log_evidence(y)?),
            sample_seconds,
            bridge_seconds: start.elapsed().as_secs_f64(),
        })
    }
}
