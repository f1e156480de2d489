//! Contrastive order-embedding training.
//!
//! Positive query/target pairs must satisfy the partial ordering
//! `z_Q <= z_T` componentwise; the penalty measures the squared violation,
//! and negatives are pushed to a penalty of at least the margin. Training
//! follows a curriculum over graph size: it starts with the smallest
//! pharmacophores and admits one more node whenever the epoch loss stops
//! improving.

pub mod loss;
pub mod metrics;
pub mod pairs;
pub mod trainer;

pub use loss::{order_loss, order_loss_value, penalty_e};
pub use metrics::auroc;
pub use pairs::{pair_penalties, PairSet};
pub use trainer::{train, EpochRow, TrainOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("config error: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error(transparent)]
    Encoder(#[from] encoder::EncoderError),
    #[error(transparent)]
    Tensor(#[from] tensor_autodiff::TensorError),
    #[error(transparent)]
    Augment(#[from] augment::AugmentError),
    #[error(transparent)]
    Pharm(#[from] pharm_core::PharmError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Training hyperparameters; serde defaults allow partial config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Margin negatives must exceed in penalty.
    pub margin: f64,
    pub lr: f64,
    /// Tolerance radius used by the augmentations, in angstrom.
    pub r_t: f64,
    pub curriculum_start_size: usize,
    /// Epochs without relative loss improvement before the curriculum
    /// admits the next graph size.
    pub plateau_epochs: usize,
    pub plateau_rel_improve: f64,
    /// Fraction of ligands held out for validation.
    pub val_fraction: f64,
    pub seed: u64,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    /// Stop once the best validation AUROC reaches this value.
    pub early_stop_auroc: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 256,
            max_epochs: 500,
            margin: 100.0,
            lr: 1e-3,
            r_t: 1.5,
            curriculum_start_size: 4,
            plateau_epochs: 10,
            plateau_rel_improve: 0.01,
            val_fraction: 0.02,
            seed: 0,
            clip_norm: 1.0,
            early_stop_auroc: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin.is_finite() && self.margin > 0.0) {
            return Err(TrainError::Config(format!("margin must be positive, got {}", self.margin)));
        }
        if self.batch_size < 2 {
            return Err(TrainError::Config("batch_size must be >= 2".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(TrainError::Config(format!(
                "val_fraction {} outside (0,1)",
                self.val_fraction
            )));
        }
        if self.curriculum_start_size < 4 {
            return Err(TrainError::Config("curriculum_start_size must be >= 4".into()));
        }
        if self.plateau_epochs < 1 || self.max_epochs < 1 {
            return Err(TrainError::Config("epoch counts must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(TrainError::Config("lr must be positive".into()));
        }
        if !(self.r_t.is_finite() && self.r_t >= 0.0) {
            return Err(TrainError::Config("r_t must be non-negative".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_match_contract() {
        let tc = TrainConfig::default();
        assert_eq!(tc.batch_size, 256);
        assert_eq!(tc.max_epochs, 500);
        assert_eq!(tc.margin, 100.0);
        assert_eq!(tc.lr, 1e-3);
        assert_eq!(tc.r_t, 1.5);
        assert_eq!(tc.curriculum_start_size, 4);
        assert_eq!(tc.plateau_epochs, 10);
        assert_eq!(tc.plateau_rel_improve, 0.01);
        assert_eq!(tc.val_fraction, 0.02);
        assert!(tc.validate().is_ok());
    }

    #[test]
    fn config_rejects_bad_values() {
        let mut tc = TrainConfig { margin: 0.0, ..Default::default() };
        assert!(tc.validate().is_err());
        tc.margin = 100.0;
        tc.batch_size = 1;
        assert!(tc.validate().is_err());
        tc.batch_size = 2;
        tc.val_fraction = 1.0;
        assert!(tc.validate().is_err());
    }

    #[test]
    fn partial_json_config_uses_defaults() {
        let tc: TrainConfig = serde_json::from_str(r#"{"batch_size": 64, "seed": 9}"#).unwrap();
        assert_eq!(tc.batch_size, 64);
        assert_eq!(tc.seed, 9);
        assert_eq!(tc.margin, 100.0);
    }
}
