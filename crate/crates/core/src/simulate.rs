//! The generative half of marginal SBC: model → parameters → data.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{build_design, linear_predictor, Dataset, Hypothesis, Likelihood, ModelSpec, ParameterSet, RandomBlock};

pub fn sample_true_model<R: Rng + ?Sized>(prior_h1: f64, rng: &mut R) -> Result<Hypothesis> {
    if !(0.0..=1.0).contains(&prior_h1) {
        return Err(Error::Parameter(format!("prior_h1 must lie in [0, 1], got {prior_h1}")));
    }
    Ok(if rng.random::<f64>() < prior_h1 { Hypothesis::H1 } else { Hypothesis::H0 })
}

fn draw_block<R: Rng + ?Sized>(model: &ModelSpec, groups: usize, rng: &mut R) -> Result<RandomBlock<f64>> {
    let k = model.design.effects.len();
    let sd = (0..k).map(|_| model.priors.sd_random.sample_scalar(rng)).collect::<Result<Vec<_>>>()?;
    let corr_chol = model.priors.corr_random.sample_correlation(k, rng)?;
    let z = (0..groups * k).map(|_| rng.sample(StandardNormal)).collect();
    Ok(RandomBlock { sd, corr_chol, z })
}

/// Draws every parameter from its prior. Under H0 the zeroed coefficient is exactly 0.
pub fn draw_parameters<R: Rng + ?Sized>(model: &ModelSpec, rng: &mut R) -> Result<ParameterSet<f64>> {
    model.validate()?;
    let d = &model.design;
    let beta = d
        .effects
        .iter()
        .map(|&e| if model.is_active(e) { model.priors.for_effect(e).sample_scalar(rng) } else { Ok(0.0) })
        .collect::<Result<Vec<_>>>()?;
    let subject = d.subject_effects.then(|| draw_block(model, d.n_subjects, rng)).transpose()?;
    let item = d.item_effects.then(|| draw_block(model, d.n_items, rng)).transpose()?;
    let sigma = model.priors.sd_residual.sample_scalar(rng)?;
    Ok(ParameterSet { beta, subject, item, sigma })
}

/// `yₙ ~ Normal(μₙ, σ)` or `LogNormal(μₙ, σ)`, independent across rows.
pub fn simulate_dataset<R: Rng + ?Sized>(model: &ModelSpec, params: &ParameterSet<f64>, rng: &mut R) -> Result<Dataset> {
    let table = build_design(&model.design)?;
    let mu = linear_predictor(params, &table, model)?;
    let y = mu
        .iter()
        .map(|&m| {
            let eta = m + params.sigma * rng.sample::<f64, _>(StandardNormal);
            match model.design.likelihood {
                Likelihood::Normal => eta,
                Likelihood::Lognormal => eta.exp(),
            }
        })
        .collect();
    Ok(Dataset::new(table, y))
}
