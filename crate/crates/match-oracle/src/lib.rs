//! Ground-truth pharmacophore matching.
//!
//! Two modes with one decision semantics: a query matches a target when an
//! injective, type-preserving node map exists whose pairwise distances all
//! agree within twice the tolerance radius.
//!
//! * [`graph_match`] decides that relation directly on distance graphs via
//!   backtracking; [`brute_force_match`] is its exhaustive reference.
//! * [`align_match`] goes further and demands 3D realizability: candidate
//!   correspondences come from maximal cliques of the association graph,
//!   each candidate is rigidly aligned with [`kabsch_align`], and accepted
//!   only if every aligned query point lands inside the tolerance sphere
//!   of its target counterpart.

pub mod align;
pub mod graph_match;
pub mod kabsch;

pub use align::{align_match, alignment_score, phi_decision, AlignmentScore};
pub use graph_match::{brute_force_match, graph_match, BRUTE_FORCE_CAP};
pub use kabsch::kabsch_align;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("target size {size} exceeds brute-force cap {cap}")]
    SizeLimit { size: usize, cap: usize },
    #[error("degenerate point set: {0}")]
    DegenerateInput(String),
}

pub type Result<T> = std::result::Result<T, MatchError>;

/// Matching mode selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchMode {
    /// Distance-graph tolerance matching (alignment-free).
    GraphTolerance,
    /// Clique detection plus Kabsch alignment in 3D.
    Alignment3D,
}

/// Tolerance radius and mode for the matchers.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Tolerance sphere radius in angstrom.
    pub tolerance: f64,
    pub mode: MatchMode,
}

impl MatchConfig {
    pub const DEFAULT_TOLERANCE: f64 = 1.5;

    pub fn new(tolerance: f64) -> Result<Self> {
        if !(tolerance.is_finite() && tolerance >= 0.0) {
            return Err(MatchError::InvalidInput(format!(
                "tolerance must be finite and non-negative, got {tolerance}"
            )));
        }
        Ok(MatchConfig { tolerance, mode: MatchMode::GraphTolerance })
    }

    pub fn with_mode(mut self, mode: MatchMode) -> Self {
        self.mode = mode;
        self
    }
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig { tolerance: Self::DEFAULT_TOLERANCE, mode: MatchMode::GraphTolerance }
    }
}

/// Outcome of a matching attempt; `mapping[q]` is the target index
/// assigned to query node `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub matched: bool,
    pub mapping: Option<Vec<usize>>,
    pub rmsd: Option<f64>,
    pub score: Option<f64>,
}

impl MatchResult {
    pub fn no_match() -> Self {
        MatchResult { matched: false, mapping: None, rmsd: None, score: None }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_rejects_negative_tolerance() {
        assert!(MatchConfig::new(-0.1).is_err());
        assert!(MatchConfig::new(f64::NAN).is_err());
        assert_eq!(MatchConfig::default().tolerance, 1.5);
    }

    #[test]
    fn match_result_serializes_to_json() {
        let r = MatchResult {
            matched: true,
            mapping: Some(vec![2, 0, 1]),
            rmsd: Some(0.25),
            score: Some(3.75),
        };
        let json = serde_json::to_string(&r).unwrap();
        let back: MatchResult = serde_json::from_str(&json).unwrap();
        assert_eq!(r, back);
    }
}
