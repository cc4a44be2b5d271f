use bfcal_core::bridge::{
    bridge_logml, estimate_logml, fit_proposal, split_draws, warp3_transform, BridgeConfig, BridgeMethod, Proposal, Warp3,
};
use bfcal_core::conjugate::ConjugateLinear;
use bfcal_core::linalg::Lower;
use bfcal_core::rng::stream_from_seed;
use bfcal_core::sampler::Draws;
use rand_distr::{Distribution, Exp1, StandardNormal};

fn config(method: BridgeMethod) -> BridgeConfig {
    BridgeConfig { method, ..BridgeConfig::default() }
}

#[test]
fn conjugate_models_of_dimension_one_to_three() {
    for d in 1..=3usize {
        let model = if d == 1 {
            ConjugateLinear::normal_mean(10, 0.5, 1.0, 1.0).unwrap()
        } else {
            ConjugateLinear::balanced(12, vec![0.3; d], vec![1.0; d], 0.8).unwrap()
        };
        let mut hits = 0;
        for r in 0..100u64 {
            let mut rng = stream_from_seed(1_000 * d as u64 + r);
            let theta = model.sample_prior(&mut rng);
            let y = model.simulate(&theta, &mut rng);
            let rows = model.sample_posterior(&y, 20_000, &mut rng).unwrap();
            let draws = Draws::from_rows(&rows, 4);
            let target = |x: &[f64]| model.log_joint(x, &y);
            let est = estimate_logml(&target, &draws, &config(BridgeMethod::Warp3), &mut rng).unwrap();
            assert!(est.converged && !est.warning);
            hits += usize::from((est.logml - model.log_evidence(&y).unwrap()).abs() < 0.01);
        }
        assert!(hits >= 95, "dimension {d}: {hits}/100");
    }
}

#[test]
fn fitted_proposal_recovers_moments() {
    let mut rng = stream_from_seed(5);
    let rows: Vec<Vec<f64>> = (0..10_000).map(|_| (0..3).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let p = fit_proposal(&refs).unwrap();
    assert!(!p.jittered);
    assert!(p.mean.iter().all(|m| m.abs() < 0.05));
    let cov = p.chol.gram();
    for i in 0..3 {
        for j in 0..3 {
            let target = if i == j { 1.0 } else { 0.0 };
            assert!((cov[i * 3 + j] - target).abs() < 0.05);
        }
    }
}

fn moments(x: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n;
    let s = x.iter().map(|a| (a - m).powi(3)).sum::<f64>() / n / v.powf(1.5);
    (m, v, s)
}

/// Skewed, correlated draws become centred and symmetric after warping.
#[test]
fn warped_draws_are_centred_and_symmetric() {
    let mut rng = stream_from_seed(6);
    let n = 10_000;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let a: f64 = Exp1.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            vec![a, 0.5 * a + b]
        })
        .collect();
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let raw_skew = moments(&rows.iter().map(|r| r[0]).collect::<Vec<_>>()).2;
    assert!(raw_skew > 1.5);
    let p = fit_proposal(&refs).unwrap();
    let eta = warp3_transform(&refs, &p, &mut rng);
    for j in 0..2 {
        let col: Vec<f64> = eta.iter().map(|e| e[j]).collect();
        let (m, v, s) = moments(&col);
        assert!(m.abs() < 4.0 * (v / n as f64).sqrt(), "coordinate {j}: mean {m}");
        assert!(s.abs() < 4.0 * (6.0 / n as f64).sqrt(), "coordinate {j}: skewness {s}");
    }
}

/// Trapezoid integral over a wide grid of the warped density of a skewed 1-D
/// target against the target's own integral.
#[test]
fn warp_preserves_the_normaliser() {
    // Gamma(3, 1) kernel x² e^{−x}, integral 2.
    let log_target = |x: &[f64]| if x[0] > 0.0 { 2.0 * x[0].ln() - x[0] } else { f64::NEG_INFINITY };
    let proposal = Proposal { mean: vec![3.0], chol: Lower::from_rows(1, vec![3f64.sqrt()]).unwrap(), jittered: false };
    let warp = Warp3 { log_target: &log_target, proposal: &proposal };
    let h = 1e-3;
    let integral = |f: &dyn Fn(f64) -> f64, a: f64, b: f64| {
        let n = ((b - a) / h) as usize;
        (0..=n).map(|i| if i == 0 || i == n { 0.5 } else { 1.0 } * f(a + i as f64 * h)).sum::<f64>() * h
    };
    let original = integral(&|x| log_target(&[x]).exp(), 0.0, 80.0);
    let warped = integral(&|e| warp.log_density(&[e]).exp(), -50.0, 50.0);
    assert!((original - 2.0).abs() < 1e-6);
    assert!((warped - original).abs() < 1e-6, "{warped} vs {original}");
}

#[test]
fn normalised_normal_target_has_zero_logml_under_both_methods() {
    let mut rng = stream_from_seed(7);
    let rows: Vec<Vec<f64>> = (0..20_000).map(|_| (0..2).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    let draws = Draws::from_rows(&rows, 4);
    let target = |x: &[f64]| -0.5 * x.iter().map(|v| v * v).sum::<f64>() - (2.0 * std::f64::consts::PI).ln();
    let plain = estimate_logml(&target, &draws, &config(BridgeMethod::Plain), &mut stream_from_seed(8)).unwrap();
    let warp = estimate_logml(&target, &draws, &config(BridgeMethod::Warp3), &mut stream_from_seed(8)).unwrap();
    assert!(plain.logml.abs() < 0.005 && warp.logml.abs() < 0.005, "{} {}", plain.logml, warp.logml);
}

#[test]
fn constant_factor_shifts_logml_exactly() {
    let model = ConjugateLinear::balanced(12, vec![0.0; 2], vec![1.0; 2], 1.0).unwrap();
    let mut rng = stream_from_seed(9);
    let y = model.simulate(&model.sample_prior(&mut rng), &mut rng);
    let rows = model.sample_posterior(&y, 4000, &mut rng).unwrap();
    let draws = Draws::from_rows(&rows, 4);
    let shift = 123.456;
    for method in [BridgeMethod::Plain, BridgeMethod::Warp3] {
        let a = estimate_logml(&|x: &[f64]| model.log_joint(x, &y), &draws, &config(method), &mut stream_from_seed(10)).unwrap();
        let b = estimate_logml(&|x: &[f64]| model.log_joint(x, &y) + shift, &draws, &config(method), &mut stream_from_seed(10))
            .unwrap();
        assert!((b.logml - a.logml - shift).abs() < 1e-9, "{method:?}");
    }
}

#[test]
fn inflated_proposal_forces_the_warning() {
    let d = 10;
    let model = ConjugateLinear::balanced(40, vec![0.0; d], vec![1.0; d], 1.0).unwrap();
    let mut rng = stream_from_seed(11);
    let y = model.simulate(&model.sample_prior(&mut rng), &mut rng);
    let rows = model.sample_posterior(&y, 4000, &mut rng).unwrap();
    let draws = Draws::from_rows(&rows, 4);
    let (fit, iter) = split_draws(&draws);
    let proposal = fit_proposal(&fit).unwrap();
    let target = |x: &[f64]| model.log_joint(x, &y);
    let cfg = BridgeConfig { maxiter: 1000, ..BridgeConfig::default() };
    let matched = bridge_logml(&target, &iter, &proposal, &cfg, &mut rng).unwrap();
    assert!(!matched.warning);
    let inflated = bridge_logml(&target, &iter, &proposal.with_scaled_covariance(100.0), &cfg, &mut rng).unwrap();
    assert!(inflated.warning);
}

#[test]
fn mostly_undefined_target_is_an_estimation_error() {
    let mut rng = stream_from_seed(12);
    let rows: Vec<Vec<f64>> = (0..2000).map(|_| vec![StandardNormal.sample(&mut rng)]).collect();
    let draws = Draws::from_rows(&rows, 4);
    let target = |x: &[f64]| if x[0] > 0.5 { f64::NAN } else { -0.5 * x[0] * x[0] };
    assert!(estimate_logml(&target, &draws, &BridgeConfig::default(), &mut rng).is_err());
}
