use bfcal_core::analysis::{
    consistency_bands, evidence_vs_n, jzs_log_bf10, jzs_paired_bf, pav_reliability, sensitivity_curve, t_statistic,
    DEFAULT_SCALE,
};
use bfcal_core::rng::{stream_from_seed, Purpose, StreamKey};
use bfcal_core::validation::JZS_REFERENCE;
use rand::Rng;

#[test]
fn jzs_matches_double_quadrature_reference() {
    for &(t, n, scale, bf10) in JZS_REFERENCE.iter() {
        let got = jzs_log_bf10(t, n, scale).unwrap().exp();
        assert!((got / bf10 - 1.0).abs() < 1e-4, "t={t} n={n} r={scale}: {got} vs {bf10}");
    }
    let null = JZS_REFERENCE.iter().find(|r| r.0 == 0.0 && r.1 == 100 && r.2 == DEFAULT_SCALE).unwrap();
    assert!(null.3 < 1.0);
}

#[test]
fn vanishing_scale_gives_unit_bayes_factor() {
    for n in [20, 1000] {
        for t in [0.0, 3.0] {
            let bf = jzs_log_bf10(t, n, 1e-9).unwrap().exp();
            assert!((0.999..=1.001).contains(&bf), "{bf}");
        }
    }
}

#[test]
fn bayes_factor_increases_with_absolute_t() {
    for n in [10, 100, 1000] {
        let ts: Vec<f64> = (0..40).map(|i| i as f64 * 0.2).collect();
        let bfs: Vec<f64> = ts.iter().map(|&t| jzs_log_bf10(t, n, DEFAULT_SCALE).unwrap()).collect();
        assert!(bfs.windows(2).all(|w| w[1] > w[0]), "n = {n}");
        for &t in &ts {
            assert_eq!(jzs_log_bf10(t, n, 0.5).unwrap(), jzs_log_bf10(-t, n, 0.5).unwrap());
        }
    }
}

#[test]
fn paired_bayes_factor_ignores_the_unit_of_measurement() {
    let mut rng = stream_from_seed(1);
    let x: Vec<f64> = (0..50).map(|_| rng.random::<f64>() - 0.4).collect();
    let scaled: Vec<f64> = x.iter().map(|v| v * 37.5).collect();
    let a = jzs_paired_bf(&x, DEFAULT_SCALE).unwrap();
    let b = jzs_paired_bf(&scaled, DEFAULT_SCALE).unwrap();
    assert!((a / b - 1.0).abs() < 1e-10);
    assert!(t_statistic(&[0.3; 5]).is_err());
}

#[test]
fn sensitivity_curve_preserves_order_and_direct_values() {
    let mut rng = stream_from_seed(2);
    let x: Vec<f64> = (0..80).map(|_| rng.random::<f64>() - 0.5).collect();
    let one = sensitivity_curve(&x, &[0.3]).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(one[0].bf10, jzs_paired_bf(&x, 0.3).unwrap());
    let scales = [0.1, 0.2, DEFAULT_SCALE, 1.0, 1.4];
    let curve = sensitivity_curve(&x, &scales).unwrap();
    assert_eq!(curve.iter().map(|p| p.scale).collect::<Vec<_>>(), scales);
    assert_eq!(curve.iter().filter(|p| p.is_default).count(), 1);
}

/// Forecast uniform on [0, 1], outcome Bernoulli(forecast).
fn calibrated(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = stream_from_seed(seed);
    (0..n)
        .map(|_| {
            let p: f64 = rng.random();
            (p, if rng.random::<f64>() < p { 1.0 } else { 0.0 })
        })
        .unzip()
}

#[test]
fn calibrated_deviations_favour_the_null() {
    let (f, o) = calibrated(1000, 3);
    let d: Vec<f64> = f.iter().zip(&o).map(|(a, b)| a - b).collect();
    let bf01 = 1.0 / jzs_paired_bf(&d, DEFAULT_SCALE).unwrap();
    assert!(bf01 > 10.0, "{bf01}");
    let trend = evidence_vs_n(&d, DEFAULT_SCALE, 100).unwrap();
    assert_eq!(trend.last().unwrap().n, 1000);
    assert_eq!(trend.last().unwrap().bf01.unwrap(), bf01);
    assert!(trend[trend.len() - 1].bf01.unwrap() > trend[0].bf01.unwrap());
}

#[test]
fn biased_forecasts_are_detected_early() {
    let (f, o) = calibrated(200, 4);
    let d: Vec<f64> = f.iter().zip(&o).map(|(a, b)| (a + 0.2).min(1.0) - b).collect();
    let trend = evidence_vs_n(&d, DEFAULT_SCALE, 10).unwrap();
    let first = trend.iter().find(|p| p.bf01.is_some_and(|b| 1.0 / b > 3.0)).unwrap();
    assert!(first.n < 100, "BF10 > 3 first at n = {}", first.n);
}

#[test]
fn constant_prefix_has_no_bayes_factor() {
    let d = [0.1, 0.1, 0.1, -0.2, 0.3];
    let trend = evidence_vs_n(&d, DEFAULT_SCALE, 3).unwrap();
    assert_eq!(trend[0].n, 3);
    assert!(trend[0].bf01.is_none());
    assert!(trend[1].bf01.is_some());
}

#[test]
fn bands_are_degenerate_at_certain_forecasts() {
    let f = [0.0, 0.0, 0.3, 0.6, 1.0];
    let bands = consistency_bands(&f, 0.95, 200, StreamKey::new(1, Purpose::Analysis, 0)).unwrap();
    assert_eq!(bands[0], (0.0, 0.0));
    assert_eq!(bands[4], (1.0, 1.0));
}

#[test]
fn bands_cover_calibrated_fits() {
    let mut coverage = Vec::new();
    for rep in 0..100 {
        let (f, o) = calibrated(200, 100 + rep);
        let curve = pav_reliability(&f, &o).unwrap();
        let bands = consistency_bands(&f, 0.95, 400, StreamKey::new(rep, Purpose::Analysis, 0)).unwrap();
        let inside = curve.fitted.iter().zip(&bands).filter(|(v, b)| b.0 <= **v && **v <= b.1).count();
        coverage.push(inside as f64 / f.len() as f64);
    }
    let mean = coverage.iter().sum::<f64>() / coverage.len() as f64;
    assert!(mean >= 0.9, "{mean}");
}

#[test]
fn bands_widen_with_fewer_records() {
    let width = |n: usize| {
        let f: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let bands = consistency_bands(&f, 0.95, 500, StreamKey::new(7, Purpose::Analysis, n as u64)).unwrap();
        // Average width over the middle half of the forecast range.
        let mid: Vec<f64> = bands[n / 4..3 * n / 4].iter().map(|b| b.1 - b.0).collect();
        mid.iter().sum::<f64>() / mid.len() as f64
    };
    assert!(width(100) > 1.5 * width(1000));
}
