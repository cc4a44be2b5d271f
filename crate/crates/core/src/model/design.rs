use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DesignId {
    /// 2×2 repeated measures, random effects for subjects only.
    D1,
    /// One two-level factor, crossed random effects for subjects and items.
    D2,
    /// 2×2 Latin square, crossed random effects for subjects and items.
    D3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Effect {
    #[serde(rename = "intercept", alias = "Intercept")]
    Intercept,
    #[serde(rename = "meA")]
    MeA,
    #[serde(rename = "meB")]
    MeB,
    #[serde(rename = "int")]
    Int,
    #[serde(rename = "X")]
    X,
}

impl Effect {
    pub fn label(self) -> &'static str {
        match self {
            Effect::Intercept => "intercept",
            Effect::MeA => "meA",
            Effect::MeB => "meB",
            Effect::Int => "int",
            Effect::X => "X",
        }
    }

    /// Sum-coded value of this effect's design column in a condition.
    /// For the 2×2 designs conditions are ordered (A,B) = (−,−), (−,+), (+,−), (+,+);
    /// for the one-factor design (X) = (−), (+).
    fn code(self, condition: usize) -> f64 {
        let a = if condition / 2 == 0 { -1.0 } else { 1.0 };
        let b = if condition % 2 == 0 { -1.0 } else { 1.0 };
        match self {
            Effect::Intercept => 1.0,
            Effect::MeA => a,
            Effect::MeB => b,
            Effect::Int => a * b,
            Effect::X => b,
        }
    }
}

impl std::fmt::Display for Effect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Likelihood {
    Normal,
    Lognormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub id: DesignId,
    pub n_subjects: usize,
    /// Items (D2, D3); zero for D1.
    pub n_items: usize,
    /// Repetitions (blocks) of every condition per subject; D1 only.
    pub n_reps: usize,
    pub effects: Vec<Effect>,
    pub likelihood: Likelihood,
    /// Correlated by-subject intercepts and slopes for every fixed effect.
    pub subject_effects: bool,
    /// Correlated by-item intercepts and slopes for every fixed effect.
    pub item_effects: bool,
}

impl DesignSpec {
    pub fn d1() -> Self {
        DesignSpec {
            id: DesignId::D1,
            n_subjects: 10,
            n_items: 0,
            n_reps: 5,
            effects: vec![Effect::Intercept, Effect::MeA, Effect::MeB, Effect::Int],
            likelihood: Likelihood::Normal,
            subject_effects: true,
            item_effects: false,
        }
    }

    pub fn d2() -> Self {
        DesignSpec {
            id: DesignId::D2,
            n_subjects: 42,
            n_items: 16,
            n_reps: 1,
            effects: vec![Effect::Intercept, Effect::X],
            likelihood: Likelihood::Lognormal,
            subject_effects: true,
            item_effects: true,
        }
    }

    pub fn d3() -> Self {
        DesignSpec {
            id: DesignId::D3,
            n_subjects: 16,
            n_items: 8,
            n_reps: 1,
            effects: vec![Effect::Intercept, Effect::MeA, Effect::MeB, Effect::Int],
            likelihood: Likelihood::Normal,
            subject_effects: true,
            item_effects: true,
        }
    }

    pub fn defaults(id: DesignId) -> Self {
        match id {
            DesignId::D1 => Self::d1(),
            DesignId::D2 => Self::d2(),
            DesignId::D3 => Self::d3(),
        }
    }

    pub fn n_conditions(&self) -> usize {
        match self.id {
            DesignId::D1 | DesignId::D3 => 4,
            DesignId::D2 => 2,
        }
    }

    pub fn n_rows(&self) -> usize {
        match self.id {
            DesignId::D1 => self.n_subjects * self.n_reps * 4,
            DesignId::D2 | DesignId::D3 => self.n_subjects * self.n_items,
        }
    }

    pub fn effect_index(&self, effect: Effect) -> Option<usize> {
        self.effects.iter().position(|&e| e == effect)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_subjects == 0 {
            return fail("n_subjects must be positive".into());
        }
        if self.effects.is_empty() {
            return fail("at least one fixed effect is required".into());
        }
        for (i, e) in self.effects.iter().enumerate() {
            if self.effects[..i].contains(e) {
                return fail(format!("duplicate fixed effect {e}"));
            }
            let allowed = match self.id {
                DesignId::D1 | DesignId::D3 => *e != Effect::X,
                DesignId::D2 => matches!(e, Effect::Intercept | Effect::X),
            };
            if !allowed {
                return fail(format!("effect {e} does not exist in design {:?}", self.id));
            }
        }
        match self.id {
            DesignId::D1 => {
                if self.n_reps == 0 {
                    return fail("D1 needs n_reps > 0".into());
                }
                if self.item_effects || self.n_items != 0 {
                    return fail("D1 has no items".into());
                }
            }
            DesignId::D2 | DesignId::D3 => {
                let c = self.n_conditions();
                if self.n_items == 0 || self.n_items % c != 0 {
                    return fail(format!(
                        "{:?} needs a positive item count divisible by {c} for a balanced Latin square, got {}",
                        self.id, self.n_items
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Balanced design table. Rows are ordered by (subject, item/rep, condition).
#[derive(Debug, Clone, PartialEq)]
pub struct DesignTable {
    pub effects: Vec<Effect>,
    pub subject: Vec<usize>,
    /// Item id (D2/D3) or block/repetition id (D1).
    pub item: Vec<usize>,
    pub condition: Vec<usize>,
    /// Row-major `n_rows × n_effects` sum-coded columns.
    pub codes: Vec<f64>,
    pub n_subjects: usize,
    /// Number of item groups carrying random effects (0 without item effects).
    pub n_item_groups: usize,
}

impl DesignTable {
    pub fn n_rows(&self) -> usize {
        self.subject.len()
    }

    pub fn n_effects(&self) -> usize {
        self.effects.len()
    }

    #[inline]
    pub fn row_codes(&self, row: usize) -> &[f64] {
        let k = self.effects.len();
        &self.codes[row * k..(row + 1) * k]
    }

    pub fn column(&self, effect_index: usize) -> impl Iterator<Item = f64> + '_ {
        let k = self.effects.len();
        self.codes.iter().skip(effect_index).step_by(k).copied()
    }
}

pub fn build_design(spec: &DesignSpec) -> Result<DesignTable> {
    spec.validate()?;
    let n_cond = spec.n_conditions();
    let mut subject = Vec::with_capacity(spec.n_rows());
    let mut item = Vec::with_capacity(spec.n_rows());
    let mut condition = Vec::with_capacity(spec.n_rows());
    match spec.id {
        DesignId::D1 => {
            for s in 0..spec.n_subjects {
                for r in 0..spec.n_reps {
                    for c in 0..n_cond {
                        subject.push(s);
                        item.push(r);
                        condition.push(c);
                    }
                }
            }
        }
        DesignId::D2 | DesignId::D3 => {
            // Latin square: subject group (s mod c) rotates the item → condition map.
            for s in 0..spec.n_subjects {
                for i in 0..spec.n_items {
                    subject.push(s);
                    item.push(i);
                    condition.push((i + s) % n_cond);
                }
            }
        }
    }
    let codes = condition
        .iter()
        .flat_map(|&c| spec.effects.iter().map(move |e| e.code(c)))
        .collect();
    Ok(DesignTable {
        effects: spec.effects.clone(),
        subject,
        item,
        condition,
        codes,
        n_subjects: spec.n_subjects,
        n_item_groups: if spec.item_effects { spec.n_items } else { 0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_row_counts() {
        assert_eq!(build_design(&DesignSpec::d1()).unwrap().n_rows(), 200);
        assert_eq!(build_design(&DesignSpec::d2()).unwrap().n_rows(), 672);
        assert_eq!(build_design(&DesignSpec::d3()).unwrap().n_rows(), 128);
    }

    #[test]
    fn columns_are_balanced_sum_codes() {
        for spec in [DesignSpec::d1(), DesignSpec::d2(), DesignSpec::d3()] {
            let t = build_design(&spec).unwrap();
            for (e, eff) in t.effects.iter().enumerate() {
                if *eff == Effect::Intercept {
                    assert!(t.column(e).all(|v| v == 1.0));
                    continue;
                }
                assert!(t.column(e).all(|v| v == 1.0 || v == -1.0));
                assert_eq!(t.column(e).sum::<f64>(), 0.0, "{eff} in {:?}", spec.id);
            }
        }
    }

    #[test]
    fn latin_square_is_balanced_within_subject() {
        let t = build_design(&DesignSpec::d3()).unwrap();
        for s in 0..16 {
            let mut counts = [0; 4];
            for r in (0..t.n_rows()).filter(|&r| t.subject[r] == s) {
                counts[t.condition[r]] += 1;
            }
            assert_eq!(counts, [2, 2, 2, 2]);
        }
    }

    #[test]
    fn unbalanced_configuration_rejected() {
        let mut spec = DesignSpec::d3();
        spec.n_items = 6;
        assert!(matches!(build_design(&spec), Err(Error::Config(_))));
        let mut spec = DesignSpec::d2();
        spec.effects.push(Effect::MeA);
        assert!(build_design(&spec).is_err());
    }

    #[test]
    fn build_is_deterministic_and_sorted() {
        let spec = DesignSpec::d1();
        let a = build_design(&spec).unwrap();
        assert_eq!(a, build_design(&spec).unwrap());
        let keys: Vec<_> = (0..a.n_rows()).map(|r| (a.subject[r], a.item[r], a.condition[r])).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }
}
