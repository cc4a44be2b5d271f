//! Batch configuration: TOML sections `[design]`, `[priors]`, `[sbc]`,
//! `[sampler]` and `[bridge]`, resolved against the per-design defaults.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bridge::BridgeConfig;
use crate::distributions::PriorFamily;
use crate::error::{Error, Result};
use crate::model::{DesignId, DesignSpec, Effect, Priors};
use crate::sampler::SamplerConfig;
use crate::sbc::LmmProblem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub id: DesignId,
    pub n_subjects: Option<usize>,
    pub n_items: Option<usize>,
    pub n_reps: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorsSection {
    pub intercept: Option<PriorFamily>,
    pub slopes: Option<PriorFamily>,
    pub sd_random: Option<PriorFamily>,
    pub sd_residual: Option<PriorFamily>,
    pub corr_random: Option<PriorFamily>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbcSection {
    /// Fixed effect removed under H0.
    pub effect: Effect,
    /// Defaults to 0.5 for D1 and 0.2 otherwise.
    pub prior_h1: Option<f64>,
    pub n_sims: u64,
    pub base_seed: u64,
}

/// The file as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub design: DesignSection,
    #[serde(default)]
    pub priors: PriorsSection,
    pub sbc: SbcSection,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub bridge: BridgeConfig,
}

/// A configuration with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub design: DesignSpec,
    pub priors: Priors,
    pub effect: Effect,
    pub prior_h1: f64,
    pub n_sims: u64,
    pub base_seed: u64,
    pub sampler: SamplerConfig,
    pub bridge: BridgeConfig,
}

pub fn default_prior_h1(id: DesignId) -> f64 {
    match id {
        DesignId::D1 => 0.5,
        DesignId::D2 | DesignId::D3 => 0.2,
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let d = &self.design;
        let mut design = DesignSpec::defaults(d.id);
        if let Some(v) = d.n_subjects {
            design.n_subjects = v;
        }
        if let Some(v) = d.n_items {
            design.n_items = v;
        }
        if let Some(v) = d.n_reps {
            design.n_reps = v;
        }
        let mut priors = Priors::defaults(d.id);
        let p = &self.priors;
        for (slot, over) in [
            (&mut priors.intercept, p.intercept),
            (&mut priors.slopes, p.slopes),
            (&mut priors.sd_random, p.sd_random),
            (&mut priors.sd_residual, p.sd_residual),
            (&mut priors.corr_random, p.corr_random),
        ] {
            if let Some(v) = over {
                *slot = v;
            }
        }
        let mut sampler = self.sampler.clone();
        sampler.seed = self.sbc.base_seed;
        let config = RunConfig {
            design,
            priors,
            effect: self.sbc.effect,
            prior_h1: self.sbc.prior_h1.unwrap_or_else(|| default_prior_h1(d.id)),
            n_sims: self.sbc.n_sims,
            base_seed: self.sbc.base_seed,
            sampler,
            bridge: self.bridge.clone(),
        };
        config.validate()?;
        Ok(config)
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        ConfigFile::parse(text)?.resolve()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sims == 0 {
            return Err(Error::Config("n_sims must be at least 1".into()));
        }
        self.problem().map(|_| ())
    }

    pub fn problem(&self) -> Result<LmmProblem> {
        LmmProblem::new(self.design.clone(), self.priors, self.effect, self.prior_h1, self.sampler.clone(), self.bridge.clone())
    }

    /// Canonical serialization: the resolved configuration as compact JSON.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of [`RunConfig::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

/// Provenance written next to a batch's records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub software: String,
    pub version: String,
    pub config_hash: String,
    pub config: RunConfig,
}

impl Manifest {
    pub fn new(config: &RunConfig) -> Self {
        Manifest {
            software: "bfcal".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config.hash(),
            config: config.clone(),
        }
    }
}
