//! Batch runner and report generator for marginal SBC studies.

pub mod report;
pub mod svg;

use std::fmt;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use bfcal_core::config::{ConfigFile, Manifest, RunConfig};
use bfcal_core::sbc::{run_sbc, simulate_one, BatchOptions, RunStatus};
use bfcal_core::validation;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_HASH_MISMATCH: i32 = 3;

pub const RECORDS_FILE: &str = "records.jsonl";
pub const TIMINGS_FILE: &str = "timings.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Environment variable naming the worker thread count; `--jobs` takes precedence.
pub const THREADS_ENV: &str = "BFCAL_THREADS";

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<bfcal_core::Error> for CliError {
    fn from(e: bfcal_core::Error) -> Self {
        CliError::new(EXIT_FAILURE, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(EXIT_FAILURE, e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Reads and resolves a configuration file, applying a seed override.
pub fn load_config(path: &Path, seed: Option<u64>) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::new(EXIT_CONFIG, format!("{}: {e}", path.display())))?;
    let mut file = ConfigFile::parse(&text).map_err(|e| CliError::new(EXIT_CONFIG, format!("{}: {e}", path.display())))?;
    if let Some(s) = seed {
        file.sbc.base_seed = s;
    }
    file.resolve().map_err(|e| CliError::new(EXIT_CONFIG, format!("{}: {e}", path.display())))
}

/// `--jobs` if given, else a positive integer in `BFCAL_THREADS`.
pub fn resolve_jobs(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok())).filter(|&n| n > 0)
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub jobs: Option<usize>,
    pub resume: bool,
    pub seed: Option<u64>,
    pub dump_draws: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub total: usize,
    pub ok: usize,
    pub failed: usize,
    pub warned: usize,
}

fn write_manifest(path: &Path, value: &Manifest) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::new(EXIT_FAILURE, e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Runs (or resumes) the SBC batch described by `config_path` into `out`.
pub fn cmd_run(config_path: &Path, out: &Path, options: &RunOptions) -> CliResult<RunReport> {
    let config = load_config(config_path, options.seed)?;
    fs::create_dir_all(out)?;
    let manifest_path = out.join(MANIFEST_FILE);
    let records = out.join(RECORDS_FILE);
    let timings = out.join(TIMINGS_FILE);
    let manifest = Manifest::new(&config);
    if options.resume && manifest_path.exists() {
        let text = fs::read_to_string(&manifest_path)?;
        let previous: Manifest =
            serde_json::from_str(&text).map_err(|e| CliError::new(EXIT_FAILURE, format!("{}: {e}", manifest_path.display())))?;
        if previous.config_hash != manifest.config_hash {
            return Err(CliError::new(
                EXIT_HASH_MISMATCH,
                format!("configuration hash {} differs from the batch's {}", manifest.config_hash, previous.config_hash),
            ));
        }
    } else {
        for p in [&records, &timings] {
            if p.exists() {
                fs::remove_file(p)?;
            }
        }
    }
    write_manifest(&manifest_path, &manifest)?;
    let mut problem = config.problem().map_err(|e| CliError::new(EXIT_CONFIG, e.to_string()))?;
    if options.dump_draws {
        let dir = out.join("draws");
        fs::create_dir_all(&dir)?;
        problem.dump_draws = Some(dir);
    }
    let batch = BatchOptions { records: Some(records), timings: Some(timings), resume: options.resume, jobs: resolve_jobs(options.jobs) };
    let all = run_sbc(&problem, config.n_sims, config.base_seed, &batch)?;
    let ok = all.iter().filter(|r| r.status == RunStatus::Ok).count();
    Ok(RunReport { total: all.len(), ok, failed: all.len() - ok, warned: all.iter().filter(|r| r.is_ok() && r.warning).count() })
}

/// Writes each simulated dataset as `data_<sim>.csv` plus `truth.csv`.
pub fn cmd_simulate(config_path: &Path, out: &Path, seed: Option<u64>) -> CliResult<usize> {
    let config = load_config(config_path, seed)?;
    let problem = config.problem().map_err(|e| CliError::new(EXIT_CONFIG, e.to_string()))?;
    fs::create_dir_all(out)?;
    let mut truth = String::from("sim_id,true_model\n");
    for sim in 0..config.n_sims {
        let (h, data) = simulate_one(&problem, sim, config.base_seed)?;
        truth.push_str(&format!("{sim},{}\n", if h.is_h1() { "H1" } else { "H0" }));
        data.write_csv(BufWriter::new(fs::File::create(out.join(format!("data_{sim}.csv")))?))?;
    }
    fs::write(out.join("truth.csv"), truth)?;
    Ok(config.n_sims as usize)
}

/// Runs the analytic-oracle checks and prints a pass/fail table.
pub fn cmd_validate(logml_offset: f64) -> CliResult<Vec<validation::Check>> {
    let checks = validation::run_all(logml_offset);
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &checks {
        println!("{:<width$}  {}  {}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
    }
    if checks.iter().all(|c| c.passed) {
        Ok(checks)
    } else {
        Err(CliError::new(EXIT_FAILURE, "one or more oracle checks failed"))
    }
}

pub use report::{cmd_analyze, AnalyzeOptions};

/// Default output directory for a command.
pub fn default_out(name: &str) -> PathBuf {
    PathBuf::from(name)
}
