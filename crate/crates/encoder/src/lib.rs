//! Graph encoder mapping pharmacophore distance graphs to non-negative
//! embedding vectors.
//!
//! Pipeline: one-hot node types through a dense embedding layer, then
//! edge-conditioned convolutions over the complete graph (distance encoded
//! with radial basis functions), DenseNet-style skip concatenation, additive
//! pooling, and an MLP projection head whose final linear layer uses the
//! absolute values of its weights after a ReLU, making every output
//! coordinate non-negative by construction.

pub mod batch;
pub mod model;
pub mod rbf;

pub use batch::BatchedGraphs;
pub use model::{nnconv_layer, ConvLayerParams, EncoderModel};
pub use rbf::{rbf_centers, rbf_encode};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] tensor_autodiff::TensorError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, EncoderError>;

/// Skip-connection style between convolution blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkipKind {
    /// Concatenate each block's activation with its input (DenseNet style).
    Dense,
    /// Add each block's activation to its input.
    Residual,
    /// No skip connections.
    None,
}

/// Encoder hyperparameters. All fields have serde defaults, so a config
/// file may specify any subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    /// Number of convolution blocks.
    pub conv_layers: usize,
    /// Width of each convolution block output.
    pub conv_hidden: usize,
    /// Hidden width of the per-edge network producing convolution weights.
    pub edge_hidden: usize,
    /// Hidden width of the projection MLP.
    pub proj_hidden: usize,
    /// Output embedding dimension.
    pub embed_dim: usize,
    /// Number of radial basis functions for distance encoding.
    pub rbf_k: usize,
    /// Distance grid upper end in angstrom.
    pub rbf_cutoff: f64,
    /// RBF smoothing factor in 1/A^2.
    pub rbf_beta: f64,
    /// Dropout rate (training mode only).
    pub dropout: f64,
    pub skip: SkipKind,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            conv_layers: 3,
            conv_hidden: 64,
            edge_hidden: 16,
            proj_hidden: 1024,
            embed_dim: 512,
            rbf_k: 5,
            rbf_cutoff: 10.0,
            rbf_beta: 0.08,
            dropout: 0.2,
            skip: SkipKind::Dense,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim < 1 {
            return Err(EncoderError::Config("embed_dim must be >= 1".into()));
        }
        if self.rbf_k < 2 {
            return Err(EncoderError::Config("rbf_k must be >= 2".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(EncoderError::Config(format!("dropout {} outside [0,1)", self.dropout)));
        }
        if self.conv_layers < 1 || self.conv_hidden < 1 || self.proj_hidden < 1 || self.edge_hidden < 1 {
            return Err(EncoderError::Config("layer widths must be positive".into()));
        }
        if !(self.rbf_cutoff.is_finite() && self.rbf_cutoff > 0.0) {
            return Err(EncoderError::Config("rbf_cutoff must be positive".into()));
        }
        if !(self.rbf_beta.is_finite() && self.rbf_beta > 0.0) {
            return Err(EncoderError::Config("rbf_beta must be positive".into()));
        }
        Ok(())
    }
}

/// Non-negative embedding vector produced by the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub values: Vec<f64>,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_non_negative(&self) -> bool {
        self.values.iter().all(|v| *v >= 0.0)
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_round_trip_through_json() {
        let cfg = EncoderConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: EncoderConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
        // Partial configs fall back to defaults.
        let partial: EncoderConfig = serde_json::from_str(r#"{"embed_dim": 128}"#).unwrap();
        assert_eq!(partial.embed_dim, 128);
        assert_eq!(partial.conv_hidden, 64);
        assert_eq!(partial.skip, SkipKind::Dense);
    }

    #[test]
    fn config_validation_catches_bad_values() {
        let mut cfg = EncoderConfig::default();
        cfg.dropout = 1.0;
        assert!(cfg.validate().is_err());
        cfg.dropout = 0.2;
        cfg.rbf_k = 1;
        assert!(cfg.validate().is_err());
        cfg.rbf_k = 5;
        cfg.embed_dim = 0;
        assert!(cfg.validate().is_err());
    }
}
