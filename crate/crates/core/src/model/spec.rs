use serde::{Deserialize, Serialize};

use super::design::{DesignId, DesignSpec, Effect};
use crate::distributions::PriorFamily;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

impl Hypothesis {
    pub fn is_h1(self) -> bool {
        self == Hypothesis::H1
    }

    pub fn indicator(self) -> f64 {
        if self.is_h1() {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub intercept: PriorFamily,
    /// Shared by every non-intercept fixed effect.
    pub slopes: PriorFamily,
    /// Standard deviations of all random intercepts and slopes.
    pub sd_random: PriorFamily,
    pub sd_residual: PriorFamily,
    pub corr_random: PriorFamily,
}

impl Priors {
    pub fn defaults(id: DesignId) -> Self {
        let half = |sd| PriorFamily::TruncatedNormalAtZero { mean: 0.0, sd };
        match id {
            DesignId::D1 | DesignId::D3 => Priors {
                intercept: PriorFamily::Normal { mean: 0.7, sd: 0.1 },
                slopes: PriorFamily::Normal { mean: 0.0, sd: 0.1 },
                sd_random: half(0.1),
                sd_residual: half(0.1),
                corr_random: PriorFamily::Lkj { eta: 2.0 },
            },
            DesignId::D2 => Priors {
                intercept: PriorFamily::Normal { mean: 6.0, sd: 0.6 },
                slopes: PriorFamily::Normal { mean: 0.0, sd: 0.15 },
                sd_random: half(0.1),
                sd_residual: half(0.5),
                corr_random: PriorFamily::Lkj { eta: 2.0 },
            },
        }
    }

    pub fn for_effect(&self, effect: Effect) -> &PriorFamily {
        if effect == Effect::Intercept {
            &self.intercept
        } else {
            &self.slopes
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("intercept", &self.intercept), ("slopes", &self.slopes)] {
            p.validate()?;
            if !p.is_scalar() {
                return Err(Error::Config(format!("prior for {name} must be a scalar family")));
            }
        }
        for (name, p) in [("sd_random", &self.sd_random), ("sd_residual", &self.sd_residual)] {
            p.validate()?;
            if !matches!(p, PriorFamily::TruncatedNormalAtZero { .. }) {
                return Err(Error::Config(format!("prior for {name} must be a normal truncated at zero")));
            }
        }
        self.corr_random.validate()?;
        if self.corr_random.is_scalar() {
            return Err(Error::Config("corr_random must be an LKJ prior".into()));
        }
        Ok(())
    }
}

/// One hypothesis over a design: H1 when `zeroed_effect` is `None`, otherwise H0
/// with that fixed coefficient pinned at zero. Random-effect structure is shared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub design: DesignSpec,
    pub zeroed_effect: Option<Effect>,
    pub priors: Priors,
}

impl ModelSpec {
    pub fn new(design: DesignSpec, zeroed_effect: Option<Effect>, priors: Priors) -> Result<Self> {
        let m = ModelSpec { design, zeroed_effect, priors };
        m.validate()?;
        Ok(m)
    }

    /// `(H0, H1)` for testing `effect`.
    pub fn pair(design: DesignSpec, priors: Priors, effect: Effect) -> Result<(ModelSpec, ModelSpec)> {
        let h1 = ModelSpec::new(design.clone(), None, priors)?;
        let h0 = ModelSpec::new(design, Some(effect), priors)?;
        Ok((h0, h1))
    }

    pub fn hypothesis(&self) -> Hypothesis {
        if self.zeroed_effect.is_some() {
            Hypothesis::H0
        } else {
            Hypothesis::H1
        }
    }

    /// Whether `β_e` is a free parameter of this model.
    pub fn is_active(&self, effect: Effect) -> bool {
        Some(effect) != self.zeroed_effect
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        self.priors.validate()?;
        if let Some(e) = self.zeroed_effect {
            if e == Effect::Intercept {
                return Err(Error::Config("the intercept cannot be the zeroed effect".into()));
            }
            if self.design.effect_index(e).is_none() {
                return Err(Error::Config(format!("zeroed effect {e} is not part of the design")));
            }
        }
        Ok(())
    }
}
