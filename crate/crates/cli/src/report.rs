//! `analyze`: summaries, sensitivity curves, reliability diagrams and
//! evidence-vs-n tables for a records file, as CSV and SVG.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bfcal_core::analysis::{
    default_scales, evidence_vs_n, pav_reliability, sensitivity_curve, with_bands, EvidencePoint, ReliabilityCurve,
    SensitivityPoint, DEFAULT_SCALE,
};
use bfcal_core::rng::{Purpose, StreamKey};
use bfcal_core::sbc::{marginal_check, partition_by_warning, read_records, SbcRunRecord, SbcSummary};

use crate::svg::{document, Panel, BAND, BLUE, GREY, RED};
use crate::{CliError, CliResult, EXIT_FAILURE};

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub stride: usize,
    pub n_resample: usize,
    pub level: f64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions { stride: 10, n_resample: 1000, level: 0.95 }
    }
}

struct Stratum {
    name: &'static str,
    records: Vec<SbcRunRecord>,
}

fn deviations(records: &[SbcRunRecord]) -> Vec<f64> {
    records.iter().filter_map(SbcRunRecord::deviation).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

/// Analyzes `records_path`, writing every output into `out`. Returns the
/// names of the files written.
pub fn cmd_analyze(records_path: &Path, out: &Path, options: &AnalyzeOptions) -> CliResult<Vec<PathBuf>> {
    let mut records = read_records(records_path)?;
    if records.is_empty() {
        return Err(CliError::new(EXIT_FAILURE, format!("{}: no records", records_path.display())));
    }
    records.sort_by_key(|r| r.sim_id);
    fs::create_dir_all(out)?;
    let base_seed = records[0].seeds.base_seed;
    let (clean, warned) = partition_by_warning(&records);
    let ok: Vec<SbcRunRecord> = records.iter().filter(|r| r.is_ok()).cloned().collect();
    let strata = [Stratum { name: "all", records: ok }, Stratum { name: "clean", records: clean }, Stratum { name: "warned", records: warned }];
    let mut written = Vec::new();
    let mut write = |name: &str, text: String| -> CliResult<()> {
        let p = out.join(name);
        fs::write(&p, text)?;
        written.push(p);
        Ok(())
    };

    let mut summary = String::from("stratum,n,mean_deviation,se,ci_low,ci_high,n_excluded\n");
    let mut sensitivity = String::from("stratum,scale,bf10,bf01,is_default\n");
    let mut evidence = String::from("stratum,n,bf01\n");
    let mut summaries: Vec<(&str, SbcSummary)> = Vec::new();
    let mut curves: Vec<(&str, Vec<SensitivityPoint>)> = Vec::new();
    let mut trends: Vec<(&str, Vec<EvidencePoint>)> = Vec::new();
    let excluded = records.len() - strata[0].records.len();
    for s in &strata {
        let n_excluded = if s.name == "all" { excluded } else { 0 };
        match marginal_check(&s.records) {
            Ok(m) => {
                let _ = writeln!(summary, "{},{},{},{},{},{},{}", s.name, m.n, m.mean_deviation, m.se, m.ci_low, m.ci_high, n_excluded);
                summaries.push((s.name, m));
            }
            Err(_) => {
                println!("stratum '{}' has {} usable records; summary omitted", s.name, s.records.len());
                continue;
            }
        }
        let d = deviations(&s.records);
        match sensitivity_curve(&d, &default_scales()) {
            Ok(c) => {
                for p in &c {
                    let _ = writeln!(sensitivity, "{},{},{},{},{}", s.name, p.scale, p.bf10, 1.0 / p.bf10, p.is_default);
                }
                curves.push((s.name, c));
            }
            Err(e) => println!("stratum '{}': sensitivity omitted ({e})", s.name),
        }
        if let Ok(e) = evidence_vs_n(&d, DEFAULT_SCALE, options.stride) {
            for p in &e {
                let _ = writeln!(evidence, "{},{},{}", s.name, p.n, opt(p.bf01));
            }
            trends.push((s.name, e));
        }
    }
    write("summary.csv", summary)?;
    write("sensitivity.csv", sensitivity)?;
    write("evidence.csv", evidence)?;
    write("deviation.svg", deviation_svg(&summaries))?;
    write("sensitivity.svg", sensitivity_svg(&curves))?;
    write("evidence.svg", evidence_svg(&trends))?;

    for (i, s) in strata.iter().enumerate().skip(1) {
        if s.records.is_empty() {
            println!("stratum '{}' is empty; reliability diagram omitted", s.name);
            continue;
        }
        let forecasts: Vec<f64> = s.records.iter().filter_map(|r| r.posterior_h1).collect();
        let outcomes: Vec<f64> = s.records.iter().filter(|r| r.posterior_h1.is_some()).map(|r| r.true_model.indicator()).collect();
        let curve = pav_reliability(&forecasts, &outcomes)?;
        let key = StreamKey::new(base_seed, Purpose::Analysis, i as u64);
        let curve = with_bands(curve, options.level, options.n_resample, key)?;
        write(&format!("reliability_{}.csv", s.name), reliability_csv(&curve))?;
        write(&format!("reliability_{}.svg", s.name), reliability_svg(&curve, s.name))?;
    }
    Ok(written)
}

fn reliability_csv(c: &ReliabilityCurve) -> String {
    let mut s = String::from("forecast,outcome,fitted,band_lower,band_upper\n");
    for i in 0..c.forecast.len() {
        let lo = c.band_lower.as_ref().map(|b| b[i]);
        let hi = c.band_upper.as_ref().map(|b| b[i]);
        let _ = writeln!(s, "{},{},{},{},{}", c.forecast[i], c.outcome[i], c.fitted[i], opt(lo), opt(hi));
    }
    s
}

fn stratum_color(name: &str) -> &'static str {
    match name {
        "clean" => BLUE,
        "warned" => RED,
        _ => "#333333",
    }
}

fn deviation_svg(summaries: &[(&str, SbcSummary)]) -> String {
    let span = summaries.iter().map(|(_, m)| m.ci_low.abs().max(m.ci_high.abs())).fold(0.05, f64::max) * 1.2;
    let mut p = Panel::new("Posterior minus prior", (0.0, 4.0), (-span, span)).labels("stratum", "mean deviation (95% CI)");
    p.hline(0.0, GREY);
    for (i, (name, m)) in summaries.iter().enumerate() {
        let x = match *name {
            "all" => 1.0,
            "clean" => 2.0,
            _ => 3.0,
        };
        p.point_with_interval(x, m.mean_deviation, m.ci_low, m.ci_high, stratum_color(name));
        p.text(x - 0.25, -span * (0.85 - 0.0 * i as f64), &format!("{name} (n={})", m.n));
    }
    document(&[p])
}

fn sensitivity_svg(curves: &[(&str, Vec<SensitivityPoint>)]) -> String {
    let (mut lo, mut hi) = (0.1f64, 10.0f64);
    for (_, c) in curves {
        for q in c {
            let bf01 = 1.0 / q.bf10;
            if bf01.is_finite() && bf01 > 0.0 {
                lo = lo.min(bf01);
                hi = hi.max(bf01);
            }
        }
    }
    let scales = default_scales();
    let mut p = Panel::new("Prior scale sensitivity", (scales[0], scales[scales.len() - 1]), (lo / 1.5, hi * 1.5))
        .labels("Cauchy prior scale", "BF01")
        .log_axes(true, true);
    p.vline(DEFAULT_SCALE, GREY);
    p.hline(1.0, GREY);
    for (name, c) in curves {
        let pts: Vec<(f64, f64)> = c.iter().map(|q| (q.scale, (1.0 / q.bf10).clamp(lo, hi))).collect();
        p.polyline(&pts, stratum_color(name), false);
    }
    document(&[p])
}

fn evidence_svg(trends: &[(&str, Vec<EvidencePoint>)]) -> String {
    let n_max = trends.iter().flat_map(|(_, e)| e.iter().map(|p| p.n)).max().unwrap_or(2).max(3) as f64;
    let (mut lo, mut hi) = (0.1f64, 10.0f64);
    for v in trends.iter().flat_map(|(_, e)| e.iter().filter_map(|p| p.bf01)) {
        if v.is_finite() && v > 0.0 {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let mut p = Panel::new("Evidence vs. number of simulations", (2.0, n_max), (lo / 1.5, hi * 1.5))
        .labels("simulations", "BF01 (default scale)")
        .log_axes(false, true);
    p.hline(1.0, GREY);
    for (name, e) in trends {
        let pts: Vec<(f64, f64)> = e.iter().filter_map(|q| q.bf01.map(|b| (q.n as f64, b.clamp(lo, hi)))).collect();
        p.polyline(&pts, stratum_color(name), false);
    }
    document(&[p])
}

fn reliability_svg(c: &ReliabilityCurve, stratum: &str) -> String {
    let mut p = Panel::new(&format!("Reliability ({stratum})"), (0.0, 1.0), (0.0, 1.0))
        .labels("posterior probability of H1", "observed frequency of H1");
    let bins: Vec<(f64, f64, usize)> = c.histogram.iter().map(|b| (b.lower, b.upper, b.count)).collect();
    p.histogram_strip(&bins, 0.15, GREY);
    if let (Some(lo), Some(hi)) = (&c.band_lower, &c.band_upper) {
        p.band(&c.forecast, lo, hi, BAND);
    }
    p.polyline(&[(0.0, 0.0), (1.0, 1.0)], GREY, true);
    let pts: Vec<(f64, f64)> = c.forecast.iter().copied().zip(c.fitted.iter().copied()).collect();
    p.steps(&pts, stratum_color(stratum));
    document(&[p])
}
