use serde::{Deserialize, Serialize};

use crate::ddcnn::{ArchConfig, Variant};
use crate::error::{invalid, Result};
use crate::nn::{AdamConfig, Precision};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Adam,
}

/// What the DA loss pairs target healthy windows against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DaPairing {
    /// Two target healthy batches (B against its copy E).
    #[default]
    TargetTarget,
    /// Target healthy against source healthy (B against D). Study option.
    TargetSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub dropout: f64,
    /// Weight of the DA loss.
    pub lambda: f64,
    pub seed: u64,
    pub variant: Variant,
    pub precision: Precision,
    pub da_pairing: DaPairing,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            learning_rate: 5e-4,
            epochs: 10,
            optimizer: Optimizer::Adam,
            dropout: 0.2,
            lambda: 0.1,
            seed: 0,
            variant: Variant::DdcnnDa,
            precision: Precision::F32,
            da_pairing: DaPairing::TargetTarget,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return invalid("batch size and epochs must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return invalid("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return invalid(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return invalid("lambda must be non-negative");
        }
        Ok(())
    }

    pub fn arch(&self) -> ArchConfig {
        ArchConfig {
            dropout: self.dropout,
            ..ArchConfig::default()
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }

    /// λ actually applied: zero unless the variant trains with DA.
    pub fn effective_lambda(&self) -> f64 {
        if self.variant.uses_da() {
            self.lambda
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_training_settings() {
        let c = TrainConfig::default();
        assert_eq!(c.batch_size, 128);
        assert_eq!(c.learning_rate, 5e-4);
        assert_eq!(c.epochs, 10);
        assert_eq!(c.optimizer, Optimizer::Adam);
        assert_eq!(c.dropout, 0.2);
        assert_eq!(c.lambda, 0.1);
        let a = c.adam();
        assert_eq!((a.beta1, a.beta2, a.epsilon), (0.9, 0.999, 1e-8));
    }

    #[test]
    fn lambda_only_for_da_variant() {
        let mut c = TrainConfig::default();
        assert_eq!(c.effective_lambda(), 0.1);
        c.variant = Variant::Ddcnn;
        assert_eq!(c.effective_lambda(), 0.0);
        c.lambda = -1.0;
        assert!(c.validate().is_err());
    }
}
