use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NormMode;
use crate::net::{Hyper, DEFAULT_MODEL, MODEL_IDS};

/// Training settings. `Default` gives the published configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub slope: f64,
    pub norm_mode: NormMode,
    pub model_id: u8,
    pub k: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Apply LeakyReLU to the last layer too.
    pub final_activation: bool,
    /// Divides every hidden width of the registered model (1 = full width).
    pub width_divisor: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr: 0.001,
            weight_decay: 0.0005,
            dropout: 0.5,
            slope: 0.2,
            norm_mode: NormMode::RandomWalk,
            model_id: DEFAULT_MODEL,
            k: 2,
            alpha: 0.5,
            seed: 0,
            final_activation: false,
            width_divisor: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if !MODEL_IDS.contains(&self.model_id) {
            return Err(Error::UnknownModel(self.model_id));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.slope > 0.0 && self.slope < 1.0) {
            return bad("LeakyReLU slope must lie in (0, 1)");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if self.width_divisor == 0 {
            return bad("width divisor must be at least 1");
        }
        Ok(())
    }

    pub fn hyper(&self) -> Hyper {
        Hyper {
            lr: self.lr,
            weight_decay: self.weight_decay,
            dropout_rate: self.dropout,
            slope: self.slope,
            ..Hyper::default()
        }
    }
}
