use std::fs;

use bfcal_core::bridge::BridgeConfig;
use bfcal_core::conjugate::ConjugateLinear;
use bfcal_core::model::{DesignId, DesignSpec, Effect, Priors};
use bfcal_core::rng::{Purpose, StreamKey};
use bfcal_core::sampler::SamplerConfig;
use bfcal_core::sbc::{
    marginal_check, partition_by_warning, read_records, run_one, run_sbc, BatchOptions, ConjugateProblem, LmmProblem,
    PosteriorSource, RunStatus, SbcProblem,
};
use tempfile::TempDir;

fn toy(prior_h1: f64, source: PosteriorSource) -> ConjugateProblem {
    let h1 = ConjugateLinear::balanced(20, vec![0.0, 0.0], vec![1.0, 0.5], 1.0).unwrap();
    ConjugateProblem::new(h1, 1, prior_h1, source, BridgeConfig::default()).unwrap()
}

#[test]
fn resume_completes_only_missing_simulations() {
    let dir = TempDir::new().unwrap();
    let p = toy(0.5, PosteriorSource::Exact { n_draws: 1000 });
    let records = dir.path().join("records.jsonl");
    let opts = BatchOptions { records: Some(records.clone()), timings: Some(dir.path().join("t.jsonl")), ..BatchOptions::default() };
    let full = run_sbc(&p, 12, 3, &opts).unwrap();
    let complete = fs::read_to_string(&records).unwrap();
    assert_eq!(complete.lines().count(), 12);
    assert_eq!(read_records(&records).unwrap(), full);

    // Keep every other line and a torn final write.
    let kept: String = complete.lines().step_by(2).map(|l| format!("{l}\n")).collect();
    fs::write(&records, format!("{kept}{{\"schema_ver")).unwrap();
    let resumed = run_sbc(&p, 12, 3, &BatchOptions { resume: true, ..opts.clone() }).unwrap();
    assert_eq!(resumed, full);
    assert_eq!(fs::read_to_string(&records).unwrap(), complete);
}

#[test]
fn parallelism_does_not_change_results() {
    let p = toy(0.2, PosteriorSource::Exact { n_draws: 1000 });
    let one = run_sbc(&p, 16, 9, &BatchOptions { jobs: Some(1), ..BatchOptions::default() }).unwrap();
    let four = run_sbc(&p, 16, 9, &BatchOptions { jobs: Some(4), ..BatchOptions::default() }).unwrap();
    assert_eq!(one, four);
    assert_eq!(one.len(), 16);
    assert!(one.windows(2).all(|w| w[0].sim_id < w[1].sim_id));
}

#[test]
fn sampled_posterior_matches_closed_form() {
    let cfg = SamplerConfig { n_chains: 4, n_warmup: 500, n_draws_total: 4000, ..SamplerConfig::default() };
    let p = toy(0.5, PosteriorSource::Mcmc(cfg));
    for id in 0..4 {
        let (r, _) = run_one(&p, id, 21);
        assert_eq!(r.status, RunStatus::Ok);
        let y = p
            .simulate(
                r.true_model,
                &mut StreamKey::new(21, Purpose::ParameterDraw, id).stream(),
                &mut StreamKey::new(21, Purpose::Noise, id).stream(),
            )
            .unwrap();
        let exact = p.exact_posterior_h1(&y).unwrap();
        assert!((r.posterior_h1.unwrap() - exact).abs() < 0.02, "sim {id}: {} vs {exact}", r.posterior_h1.unwrap());
        assert!(r.fit_h1.as_ref().unwrap().mcmc.is_some());
    }
}

#[test]
fn mixed_model_record_schema() {
    let design = DesignSpec { n_subjects: 3, n_reps: 2, ..DesignSpec::d1() };
    let sampler = SamplerConfig { n_chains: 2, n_warmup: 150, n_draws_total: 400, ..SamplerConfig::default() };
    let p = LmmProblem::new(design, Priors::defaults(DesignId::D1), Effect::MeA, 0.5, sampler, BridgeConfig::default()).unwrap();
    let (r, t) = run_one(&p, 0, 4);
    assert_eq!(r.status, RunStatus::Ok);
    assert!(r.logml_h0.is_some() && r.logml_h1.is_some());
    assert_eq!(r.log_bf10, Some(r.logml_h1.unwrap() - r.logml_h0.unwrap()));
    let json = serde_json::to_value(&r).unwrap();
    for field in ["logml_h0", "logml_h1", "warning", "posterior_h1", "rhat_max", "seeds"] {
        assert!(json.get(field).is_some(), "{field}");
    }
    assert!(t.sample_h0 > 0.0 && t.sample_h1 > 0.0);
}

#[test]
fn constant_certain_forecasts_are_miscalibrated() {
    let p = toy(0.2, PosteriorSource::Exact { n_draws: 500 });
    let mut recs = run_sbc(&p, 400, 8, &BatchOptions::default()).unwrap();
    let h1_freq = recs.iter().filter(|r| r.true_model.is_h1()).count() as f64 / 400.0;
    recs.iter_mut().for_each(|r| r.posterior_h1 = Some(1.0));
    let s = marginal_check(&recs).unwrap();
    assert!((s.mean_deviation - (1.0 - h1_freq)).abs() < 1e-12);
    assert!(s.mean_deviation > 0.7 && !s.ci_contains_zero());
}

#[test]
fn both_strata_remain_calibrated() {
    let p = toy(0.5, PosteriorSource::Exact { n_draws: 1000 });
    let mut recs = run_sbc(&p, 600, 12, &BatchOptions::default()).unwrap();
    // Flag on a data-dependent rule: the sign of the estimated log Bayes factor.
    recs.iter_mut().for_each(|r| r.warning = r.log_bf10.unwrap() > 0.0);
    let (clean, warned) = partition_by_warning(&recs);
    assert_eq!(clean.len() + warned.len(), 600);
    for side in [&clean, &warned] {
        let s = marginal_check(side).unwrap();
        assert!(s.mean_deviation.abs() < 3.0 * s.se, "{s:?}");
    }
}
