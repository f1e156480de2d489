//! Minimal dense-tensor engine with reverse-mode automatic differentiation.
//!
//! Everything is 64-bit floats. A [`Tape`] records the forward pass; calling
//! [`Tape::backward`] walks the recorded ops in reverse and accumulates
//! gradients additively into a [`ParamSet`]. Independent passes may run on
//! separate threads; a single tape is not shared.
//!
//! The op set is exactly what an edge-conditioned graph encoder needs:
//! matmul, elementwise arithmetic, GELU/ReLU/abs/exp, batch-norm statistics,
//! segment reductions for pooling, and a fused scatter-outer-product for
//! message aggregation. Heavy matmuls go through a cache-blocked GEMM kernel
//! parallelized over row chunks, which keeps results bit-deterministic for
//! any thread count.

pub mod adam;
pub mod checkpoint;
pub mod gemm;
pub mod param;
pub mod tape;

pub use adam::{clip_grad_norm, Adam};
pub use checkpoint::{load_checkpoint_into, read_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use param::{Param, ParamSet};
pub use tape::{EdgeIndex, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TensorError>;
