use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{MeraError, Result};
use crate::merag::{ExpertKind, GateMode};
use crate::rmf::Modality;

/// How the squared-error regularizer reduces over residues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

/// Model shape plus training hyperparameters. Serializes to TOML; every field
/// has a default so partial files are valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Residue embedding width; 0 means "take it from the data".
    pub dim: usize,
    /// Text token width; 0 means "take it from the data".
    pub text_dim: usize,
    pub head_hidden: usize,
    /// Gate MLP hidden width; 0 means `experts * dim / 2`.
    pub gate_hidden: usize,
    pub attn_dim: usize,
    pub gate_mode: GateMode,
    pub experts: Vec<ExpertKind>,
    pub modalities: Vec<Modality>,
    pub k: usize,
    pub intra_temperature: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub reliability_weight: f64,
    pub reliability_reduction: Reduction,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            dim: 0,
            text_dim: 0,
            head_hidden: 32,
            gate_hidden: 0,
            attn_dim: 64,
            gate_mode: GateMode::PerDimension,
            experts: ExpertKind::default_set(),
            modalities: Modality::ALL.to_vec(),
            k: 3,
            intra_temperature: 0.1,
            learning_rate: 1e-3,
            epochs: 100,
            reliability_weight: 1.0,
            reliability_reduction: Reduction::Mean,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config =
            toml::from_str(text).map_err(|e| MeraError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| MeraError::Config(format!("config: {e}")))
    }

    pub fn has(&self, m: Modality) -> bool {
        self.modalities.contains(&m)
    }

    pub fn gate_hidden_width(&self) -> usize {
        if self.gate_hidden > 0 {
            self.gate_hidden
        } else {
            (self.experts.len() * self.dim / 2).max(1)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MeraError::Config(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            ));
        }
        if i64::try_from(self.seed).is_err() {
            return bad(format!(
                "seed must be at most {}, got {}",
                i64::MAX,
                self.seed
            ));
        }
        if self.epochs < 1 {
            return bad("epochs must be at least 1".into());
        }
        if self.k < 1 {
            return bad("k must be at least 1".into());
        }
        if !(self.intra_temperature > 0.0 && self.intra_temperature.is_finite()) {
            return bad(format!(
                "intra_temperature must be positive, got {}",
                self.intra_temperature
            ));
        }
        if !(self.reliability_weight >= 0.0 && self.reliability_weight.is_finite()) {
            return bad(format!(
                "reliability_weight must be >= 0, got {}",
                self.reliability_weight
            ));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)".into());
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("adam_epsilon must be positive".into());
        }
        if self.head_hidden == 0 || self.attn_dim == 0 {
            return bad("hidden and attention widths must be at least 1".into());
        }
        if self.modalities.is_empty() {
            return bad("at least one modality must be active".into());
        }
        let mut seen = HashSet::new();
        if !self.modalities.iter().all(|m| seen.insert(*m)) {
            return bad("modality listed twice".into());
        }
        if self.has(Modality::Rag) && self.experts.is_empty() {
            return bad("the rag modality needs at least one expert".into());
        }
        let mut seen = HashSet::new();
        if !self.experts.iter().all(|e| seen.insert(e.clone())) {
            return bad("expert listed twice".into());
        }
        Ok(())
    }
}
