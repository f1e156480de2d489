//! Complete edge-labeled graph derived from a pharmacophore.

use crate::types::{FeatureType, Pharmacophore};
use crate::{PharmError, Result};

/// Complete graph over a pharmacophore's points: node labels plus the
/// symmetric matrix of pairwise Euclidean distances in angstrom.
///
/// Two pharmacophores related by any rigid motion or reflection produce
/// equal graphs, so all downstream matching is alignment-free.
#[derive(Debug, Clone, PartialEq)]
pub struct PharmGraph {
    pub node_labels: Vec<FeatureType>,
    dist: Vec<f64>,
}

impl PharmGraph {
    /// Number of nodes.
    pub fn size(&self) -> usize {
        self.node_labels.len()
    }

    /// Pairwise distance between nodes `i` and `j`.
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.size() + j]
    }

    /// Row-major |P| x |P| distance matrix.
    pub fn dist_matrix(&self) -> &[f64] {
        &self.dist
    }

    /// Largest absolute entry-wise difference to another graph of the
    /// same size and labels; `None` if sizes or labels differ.
    pub fn max_abs_diff(&self, other: &PharmGraph) -> Option<f64> {
        if self.node_labels != other.node_labels {
            return None;
        }
        Some(
            self.dist
                .iter()
                .zip(&other.dist)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        )
    }
}

/// Builds the complete distance graph of `p`.
pub fn build_graph(p: &Pharmacophore) -> Result<PharmGraph> {
    if p.is_empty() {
        return Err(PharmError::InvalidInput(format!(
            "pharmacophore `{}` has no points",
            p.id
        )));
    }
    let n = p.len();
    for (i, fp) in p.points.iter().enumerate() {
        if !fp.pos.iter().all(|v| v.is_finite()) {
            return Err(PharmError::InvalidInput(format!(
                "pharmacophore `{}` point {i} has non-finite coordinates",
                p.id
            )));
        }
    }
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let a = p.points[i].pos;
            let b = p.points[j].pos;
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    Ok(PharmGraph { node_labels: p.points.iter().map(|fp| fp.kind).collect(), dist })
}
