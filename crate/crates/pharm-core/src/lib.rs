//! Pharmacophore data model: typed 3D feature points, complete distance
//! graphs, JSONL interchange, and a seeded synthetic generator.
//!
//! A pharmacophore is an attributed point cloud. Its screening-relevant
//! content is fully captured by node types plus the pairwise distance
//! matrix, which is what [`build_graph`] extracts; that representation is
//! invariant under rotation, translation, and reflection.

pub mod graph;
pub mod jsonl;
pub mod rng;
pub mod synth;
pub mod types;

pub use graph::{build_graph, PharmGraph};
pub use jsonl::{parse_pharmacophores, serialize_records};
pub use synth::{gen_synthetic, TypeWeights};
pub use types::{FeaturePoint, FeatureType, LigandRecord, Pharmacophore};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PharmError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PharmError>;
