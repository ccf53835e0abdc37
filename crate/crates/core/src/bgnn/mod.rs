//! Bayesian GraphSAGE classifier: a small dense kernel with reverse-mode
//! gradients, full-batch training, and Monte Carlo dropout inference.

mod checkpoint;
mod mc;
mod model;
pub mod tape;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use mc::{deterministic_predict, mc_predict, McPrediction};
pub use model::{forward, Architecture, Linear, ModelConfig, ModelParams, SageLayer};
pub use train::{
    balanced_class_weights, feature_matrix, gradient_check, loss_and_gradients, train, train_nodes,
    weighted_loss, AdamW, TrainOutcome,
};

#[derive(Debug, Error)]
pub enum BgnnError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite activation in layer {0}")]
    NonFiniteActivation(&'static str),
    #[error("non-finite parameters after epoch {0}")]
    NonFiniteParams(usize),
    #[error("labeled set is empty")]
    EmptyLabeledSet,
    #[error("labeled id {0} is not in the corpus")]
    UnknownId(String),
    #[error("labeled id {0} is not in the train split")]
    NotTrainPost(String),
    #[error("class index {0} out of range")]
    InvalidClass(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeights {
    /// Inverse label frequency over the labeled set, renormalized to mean 1.
    Balanced,
    Fixed([f64; 3]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Number of stochastic forward passes at inference.
    pub mc_samples: usize,
    pub class_weights: ClassWeights,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            epochs: 500,
            learning_rate: 1e-5,
            weight_decay: 1e-2,
            mc_samples: 10,
            class_weights: ClassWeights::Balanced,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), BgnnError> {
        let bad = |m: &str| Err(BgnnError::InvalidConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.mc_samples == 0 {
            return bad("mc_samples must be >= 1");
        }
        if self.model.hidden1 == 0 || self.model.hidden2 == 0 {
            return bad("hidden sizes must be positive");
        }
        if !(0.0..1.0).contains(&self.model.dropout_p) {
            return bad("dropout_p must lie in [0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if let ClassWeights::Fixed(w) = &self.class_weights {
            if w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return bad("class weights must be positive");
            }
        }
        Ok(())
    }
}

/// Mixes a base seed with a stream index (splitmix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
