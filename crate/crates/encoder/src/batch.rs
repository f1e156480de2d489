//! Dense batched representation of a set of pharmacophore graphs.

use std::sync::Arc;

use pharm_core::{FeatureType, PharmGraph};
use tensor_autodiff::EdgeIndex;

use crate::rbf::{rbf_centers, rbf_encode_into};
use crate::{EncoderConfig, EncoderError, Result};

/// Node, edge and segment tables for a batch of complete graphs.
///
/// Edges are directed both ways and grouped by destination node, which is
/// the order the scatter ops rely on.
#[derive(Debug, Clone)]
pub struct BatchedGraphs {
    pub n_graphs: usize,
    pub n_nodes: usize,
    /// One-hot node types, n_nodes x 7.
    pub onehot: Vec<f64>,
    /// Graph id per node.
    pub node_graph: Arc<Vec<u32>>,
    pub edges: Arc<EdgeIndex>,
    /// RBF-encoded edge distances, n_edges x rbf_k.
    pub edge_rbf: Vec<f64>,
    /// Node count per graph.
    pub sizes: Vec<usize>,
}

impl BatchedGraphs {
    pub fn new(graphs: &[PharmGraph], cfg: &EncoderConfig) -> Result<Self> {
        if graphs.is_empty() {
            return Err(EncoderError::InvalidInput("empty graph batch".into()));
        }
        let n_graphs = graphs.len();
        let sizes: Vec<usize> = graphs.iter().map(|g| g.size()).collect();
        if sizes.iter().any(|s| *s == 0) {
            return Err(EncoderError::InvalidInput("graph with zero nodes".into()));
        }
        let n_nodes: usize = sizes.iter().sum();
        let n_edges: usize = sizes.iter().map(|s| s * (s - 1)).sum();

        let mut onehot = vec![0.0; n_nodes * FeatureType::COUNT];
        let mut node_graph = Vec::with_capacity(n_nodes);
        let mut src = Vec::with_capacity(n_edges);
        let mut dst = Vec::with_capacity(n_edges);
        let k = cfg.rbf_k;
        let centers = rbf_centers(cfg);
        let mut edge_rbf = vec![0.0; n_edges * k];

        let mut node_offset = 0usize;
        let mut edge_cursor = 0usize;
        for (gi, g) in graphs.iter().enumerate() {
            let n = g.size();
            for (i, label) in g.node_labels.iter().enumerate() {
                onehot[(node_offset + i) * FeatureType::COUNT + label.code()] = 1.0;
                node_graph.push(gi as u32);
            }
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    dst.push((node_offset + i) as u32);
                    src.push((node_offset + j) as u32);
                    rbf_encode_into(
                        g.dist(i, j),
                        &centers,
                        cfg.rbf_beta,
                        &mut edge_rbf[edge_cursor * k..(edge_cursor + 1) * k],
                    );
                    edge_cursor += 1;
                }
            }
            node_offset += n;
        }

        Ok(BatchedGraphs {
            n_graphs,
            n_nodes,
            onehot,
            node_graph: Arc::new(node_graph),
            edges: Arc::new(EdgeIndex::new(src, dst, n_nodes)),
            edge_rbf,
            sizes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pharm_core::{build_graph, FeaturePoint, Pharmacophore};

    #[test]
    fn tables_line_up() {
        let p1 = Pharmacophore::new(
            "a",
            vec![
                FeaturePoint::new(FeatureType::Hba, [0.0, 0.0, 0.0]),
                FeaturePoint::new(FeatureType::H, [3.0, 4.0, 0.0]),
            ],
        );
        let p2 = Pharmacophore::new("b", vec![FeaturePoint::new(FeatureType::Ar, [1.0, 1.0, 1.0])]);
        let cfg = EncoderConfig::default();
        let batch =
            BatchedGraphs::new(&[build_graph(&p1).unwrap(), build_graph(&p2).unwrap()], &cfg)
                .unwrap();
        assert_eq!(batch.n_graphs, 2);
        assert_eq!(batch.n_nodes, 3);
        assert_eq!(batch.edges.n_edges(), 2);
        assert_eq!(batch.node_graph.as_ref(), &vec![0, 0, 1]);
        // One-hot rows: HBA = code 1, H = code 5, AR = code 6.
        assert_eq!(batch.onehot[1], 1.0);
        assert_eq!(batch.onehot[7 + 5], 1.0);
        assert_eq!(batch.onehot[14 + 6], 1.0);
        // Both directed edges encode the same 5 A distance.
        let k = cfg.rbf_k;
        assert_eq!(batch.edge_rbf[..k], batch.edge_rbf[k..2 * k]);
        let expected = crate::rbf::rbf_encode(5.0, &cfg);
        assert_eq!(&batch.edge_rbf[..k], expected.as_slice());
    }
}
