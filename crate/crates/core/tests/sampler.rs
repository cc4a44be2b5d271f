use bfcal_core::rng::{Purpose, StreamKey};
use bfcal_core::sampler::{leapfrog, mcse_mean, sample_with_key, split_rhat, SamplerConfig};
use bfcal_core::validation::{ks_pvalue, ks_statistic};
use bfcal_core::LogDensity;

struct Normal {
    dim: usize,
    sd: f64,
}

impl LogDensity for Normal {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density_gradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
        let v = self.sd * self.sd;
        for (gi, xi) in g.iter_mut().zip(x) {
            *gi = -xi / v;
        }
        -0.5 * x.iter().map(|t| t * t).sum::<f64>() / v
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    use statrs::function::erf::erfc;
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

#[test]
fn five_dimensional_standard_normal() {
    let target = Normal { dim: 5, sd: 1.0 };
    let config = SamplerConfig { seed: 3, ..SamplerConfig::default() };
    let (draws, diag) = sample_with_key(&target, &config, StreamKey::new(3, Purpose::FitH1, 0)).unwrap();
    assert_eq!(draws.n_draws(), 8000);
    assert_eq!(diag.n_divergent, 0);
    assert!(diag.rhat_max().unwrap() < 1.01);
    for j in 0..5 {
        let traces = draws.traces(j);
        let refs: Vec<&[f64]> = traces.iter().map(Vec::as_slice).collect();
        let all = traces.concat();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        assert!(mean.abs() < 3.0 * mcse_mean(&refs), "component {j}: {mean}");
        assert!(split_rhat(&refs).unwrap() < 1.01);
    }
}

#[test]
fn adapted_metric_tracks_scale() {
    let target = Normal { dim: 2, sd: 5.0 };
    let config = SamplerConfig { n_warmup: 1000, n_draws_total: 4000, seed: 22, ..SamplerConfig::default() };
    let (draws, _) = sample_with_key(&target, &config, StreamKey::new(22, Purpose::FitH1, 0)).unwrap();
    let sq = draws.map_chains(|r| r[0] * r[0]);
    let refs: Vec<&[f64]> = sq.iter().map(Vec::as_slice).collect();
    let all = sq.concat();
    let var = all.iter().sum::<f64>() / all.len() as f64;
    assert!((var - 25.0).abs() < 3.0 * mcse_mean(&refs), "{var}");
}

/// Energy error after integrating to time 10 with 100 steps of size 0.1, then
/// 200 of size 0.05: halving the step cuts the maximum error by about four.
#[test]
fn energy_error_is_second_order() {
    let target = Normal { dim: 2, sd: 1.0 };
    let grad = |x: &[f64], g: &mut [f64]| target.log_density_gradient(x, g);
    let energy = |q: &[f64], p: &[f64]| 0.5 * q.iter().chain(p).map(|v| v * v).sum::<f64>();
    let max_error = |h: f64, n: usize| {
        let (mut q, mut p) = (vec![1.0, -0.5], vec![0.3, 0.8]);
        let h0 = energy(&q, &p);
        let mut worst: f64 = 0.0;
        for _ in 0..n {
            let (nq, np, ok) = leapfrog(&q, &p, h, grad);
            assert!(ok);
            q = nq;
            p = np;
            worst = worst.max((energy(&q, &p) - h0).abs());
        }
        worst
    };
    let ratio = max_error(0.1, 100) / max_error(0.05, 200);
    assert!((3.6..4.4).contains(&ratio), "{ratio}");
}

#[test]
fn reversible_to_tight_tolerance() {
    let target = Normal { dim: 3, sd: 0.7 };
    let grad = |x: &[f64], g: &mut [f64]| target.log_density_gradient(x, g);
    let (q0, p0) = (vec![0.4, -1.1, 2.0], vec![1.0, 0.2, -0.6]);
    let (mut q, mut p) = (q0.clone(), p0.clone());
    for _ in 0..50 {
        (q, p, _) = leapfrog(&q, &p, 0.05, grad);
    }
    p.iter_mut().for_each(|v| *v = -*v);
    for _ in 0..50 {
        (q, p, _) = leapfrog(&q, &p, 0.05, grad);
    }
    for i in 0..3 {
        assert!((q[i] - q0[i]).abs() < 1e-10 && (p[i] + p0[i]).abs() < 1e-10);
    }
}

/// Stationary histogram of a long 1-D run against the target at the 1% level,
/// thinned to roughly independent draws.
#[test]
fn stationary_distribution_goodness_of_fit() {
    let target = Normal { dim: 1, sd: 1.0 };
    let config = SamplerConfig { n_chains: 4, n_warmup: 1000, n_draws_total: 100_000, seed: 23, ..SamplerConfig::default() };
    let (draws, diag) = sample_with_key(&target, &config, StreamKey::new(23, Purpose::FitH1, 0)).unwrap();
    assert_eq!(diag.n_divergent, 0);
    let thinned: Vec<f64> = draws.rows().step_by(4).map(|r| r[0]).collect();
    let d = ks_statistic(&thinned, std_normal_cdf);
    assert!(ks_pvalue(d, thinned.len()) > 0.01, "D = {d}");
}

#[test]
fn rhat_calibration() {
    use bfcal_core::rng::stream_from_seed;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = stream_from_seed(24);
    let chains: Vec<Vec<f64>> = (0..4).map(|_| (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
    let r = split_rhat(&refs).unwrap();
    assert!((0.999..=1.01).contains(&r), "{r}");
    let far: Vec<Vec<f64>> = vec![chains[0].iter().map(|v| v - 10.0).collect(), chains[1].iter().map(|v| v + 10.0).collect()];
    let refs: Vec<&[f64]> = far.iter().map(Vec::as_slice).collect();
    assert!(split_rhat(&refs).unwrap() > 1.1);
}
