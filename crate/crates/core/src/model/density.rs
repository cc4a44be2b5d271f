//! Constrained-space densities of the mixed model.

use super::design::{DesignTable, Likelihood};
use super::params::{Dataset, ParameterSet, RandomBlock};
use super::spec::ModelSpec;
use crate::distributions::normal_lpdf;
use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

fn check_block<T: Scalar>(block: Option<&RandomBlock<T>>, expected: bool, k: usize, groups: usize) -> Result<()> {
    match (block, expected) {
        (None, false) => Ok(()),
        (Some(b), true) => {
            check_dim(k, b.sd.len())?;
            check_dim(k, b.corr_chol.dim())?;
            check_dim(k * groups, b.z.len())
        }
        (Some(_), false) => Err(Error::Parameter("unexpected random-effect block".into())),
        (None, true) => Err(Error::Parameter("missing random-effect block".into())),
    }
}

/// Checks that a parameter set has the shapes the model and table demand.
pub fn check_shapes<T: Scalar>(params: &ParameterSet<T>, table: &DesignTable, model: &ModelSpec) -> Result<()> {
    let k = model.design.effects.len();
    check_dim(k, params.beta.len())?;
    check_dim(k, table.n_effects())?;
    check_block(params.subject.as_ref(), model.design.subject_effects, k, table.n_subjects)?;
    check_block(params.item.as_ref(), model.design.item_effects, k, table.n_item_groups)
}

/// `μₙ = Σₑ (βₑ + u_{subj[n],e} + w_{item[n],e}) · codeₑ(n)`, with the zeroed
/// coefficient read as zero under H0.
pub fn linear_predictor<T: Scalar>(params: &ParameterSet<T>, table: &DesignTable, model: &ModelSpec) -> Result<Vec<T>> {
    check_shapes(params, table, model)?;
    let k = table.n_effects();
    let beta: Vec<T> = table
        .effects
        .iter()
        .zip(&params.beta)
        .map(|(&e, &b)| if model.is_active(e) { b } else { T::zero() })
        .collect();
    let u = params.subject.as_ref().map(RandomBlock::effects);
    let w = params.item.as_ref().map(RandomBlock::effects);
    let mut mu = Vec::with_capacity(table.n_rows());
    for r in 0..table.n_rows() {
        let codes = table.row_codes(r);
        let mut m = T::zero();
        for e in 0..k {
            let mut coef = beta[e];
            if let Some(u) = &u {
                coef += u[table.subject[r] * k + e];
            }
            if let Some(w) = &w {
                coef += w[table.item[r] * k + e];
            }
            m += coef * T::lit(codes[e]);
        }
        mu.push(m);
    }
    Ok(mu)
}

/// Row-wise normal log density of `y` (or of `ln y` with Jacobian `−ln y`
/// under the lognormal likelihood).
pub fn log_likelihood<T: Scalar>(params: &ParameterSet<T>, data: &Dataset, model: &ModelSpec) -> Result<T> {
    let table = data.table();
    check_dim(table.n_rows(), data.y.len())?;
    let mu = linear_predictor(params, table, model)?;
    let sigma = params.sigma;
    let mut ll = T::zero();
    match model.design.likelihood {
        Likelihood::Normal => {
            for (&y, &m) in data.y.iter().zip(&mu) {
                ll += normal_lpdf(T::lit(y), m, sigma);
            }
        }
        Likelihood::Lognormal => {
            for (&y, &m) in data.y.iter().zip(&mu) {
                if !(y > 0.0) {
                    return Err(Error::Data(format!("lognormal likelihood needs y > 0, got {y}")));
                }
                let ly = T::lit(y.ln());
                ll += normal_lpdf(ly, m, sigma) - ly;
            }
        }
    }
    Ok(ll)
}

fn block_log_prior<T: Scalar>(block: &RandomBlock<T>, model: &ModelSpec) -> T {
    let p = &model.priors;
    let mut lp = T::zero();
    for &s in &block.sd {
        lp += p.sd_random.log_density(s).unwrap_or(T::neg_infinity());
    }
    lp += p.corr_random.log_density_correlation(&block.corr_chol).unwrap_or(T::neg_infinity());
    for &z in &block.z {
        lp += normal_lpdf(z, T::zero(), T::one());
    }
    lp
}

/// Sum of every prior term, including the standard-normal density of the
/// standardised random effects. `−∞` outside the support.
pub fn log_prior<T: Scalar>(params: &ParameterSet<T>, model: &ModelSpec) -> T {
    let p = &model.priors;
    if !(params.sigma >= T::zero()) {
        return T::neg_infinity();
    }
    let mut lp = T::zero();
    for (&e, &b) in model.design.effects.iter().zip(&params.beta) {
        if model.is_active(e) {
            lp += p.for_effect(e).log_density(b).unwrap_or(T::neg_infinity());
        }
    }
    for block in params.subject.iter().chain(params.item.iter()) {
        if block.sd.iter().any(|&s| !(s >= T::zero())) {
            return T::neg_infinity();
        }
        lp += block_log_prior(block, model);
    }
    lp + p.sd_residual.log_density(params.sigma).unwrap_or(T::neg_infinity())
}
