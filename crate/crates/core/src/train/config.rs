use serde::{Deserialize, Serialize};

use crate::data::AugmentPolicy;
use crate::error::{Error, Result};

use super::AdamConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr0: f64,
    pub plateau_patience: usize,
    pub lr_factor: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub val_fraction: f64,
    #[serde(default)]
    pub augment: AugmentPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            epochs: 80,
            lr0: 1e-3,
            plateau_patience: 3,
            lr_factor: 0.5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            val_fraction: 0.1,
            augment: AugmentPolicy { photometric: true, crop: true, flip: false },
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { beta1: self.adam_beta1, beta2: self.adam_beta2, eps: self.adam_eps }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Validation(m.into()));
        if self.batch_size == 0 {
            return fail("train.batch_size must be positive");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return fail("train.lr0 must be positive");
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return fail("train.lr_factor must lie strictly between 0 and 1");
        }
        if self.plateau_patience == 0 {
            return fail("train.plateau_patience must be at least 1");
        }
        if !((0.0..1.0).contains(&self.adam_beta1) && (0.0..1.0).contains(&self.adam_beta2) && self.adam_eps > 0.0) {
            return fail("train.adam_beta1/adam_beta2 must lie in [0, 1) and adam_eps must be positive");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return fail("train.val_fraction must lie strictly between 0 and 1");
        }
        Ok(())
    }
}
