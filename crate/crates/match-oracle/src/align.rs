//! 3D alignment matching: association-graph cliques + Kabsch verification.

use pharm_core::{build_graph, Pharmacophore};

use crate::kabsch::{apply_transform, kabsch_align};
use crate::{MatchConfig, MatchError, MatchResult, Result};

/// Alignment quality: matched-pair count plus a geometric bonus in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AlignmentScore {
    /// Number of matched feature pairs.
    pub s_mfp: usize,
    /// Mean of `1 - d_i / r_T` over the aligned pairs.
    pub s_geom: f64,
}

impl AlignmentScore {
    pub fn total(&self) -> f64 {
        self.s_mfp as f64 + self.s_geom
    }
}

/// Scores an accepted alignment; `aligned_dists` are the post-transform
/// query-to-target distances, all expected within the tolerance radius.
pub fn alignment_score(aligned_dists: &[f64], cfg: &MatchConfig) -> AlignmentScore {
    debug_assert!(aligned_dists.iter().all(|d| *d <= cfg.tolerance + 1e-12));
    let n = aligned_dists.len();
    let s_geom = if n == 0 || cfg.tolerance == 0.0 {
        if n == 0 {
            0.0
        } else {
            1.0 // all distances are exactly zero when r_T is zero
        }
    } else {
        aligned_dists.iter().map(|d| 1.0 - d / cfg.tolerance).sum::<f64>() / n as f64
    };
    AlignmentScore { s_mfp: n, s_geom }
}

/// Matching decision on an alignment score: accept when the score reaches
/// the query size.
pub fn phi_decision(score: &AlignmentScore, q_size: usize) -> bool {
    score.total() >= q_size as f64
}

struct AssociationGraph {
    /// Vertex k pairs query node `pairs[k].0` with target node `pairs[k].1`.
    pairs: Vec<(usize, usize)>,
    adj: Vec<Vec<bool>>,
}

fn association_graph(q: &pharm_core::PharmGraph, t: &pharm_core::PharmGraph, two_rt: f64) -> AssociationGraph {
    let mut pairs = Vec::new();
    for qi in 0..q.size() {
        for tj in 0..t.size() {
            if q.node_labels[qi] == t.node_labels[tj] {
                pairs.push((qi, tj));
            }
        }
    }
    let n = pairs.len();
    let mut adj = vec![vec![false; n]; n];
    for a in 0..n {
        for b in (a + 1)..n {
            let (qi, tj) = pairs[a];
            let (qk, tl) = pairs[b];
            if qi != qk && tj != tl && (q.dist(qi, qk) - t.dist(tj, tl)).abs() < two_rt {
                adj[a][b] = true;
                adj[b][a] = true;
            }
        }
    }
    AssociationGraph { pairs, adj }
}

/// Bron-Kerbosch with pivoting; collects maximal cliques of size `want`.
/// Vertex sets are ordered, so enumeration order is deterministic.
fn bron_kerbosch(
    adj: &[Vec<bool>],
    r: &mut Vec<usize>,
    p: Vec<usize>,
    x: Vec<usize>,
    want: usize,
    out: &mut Vec<Vec<usize>>,
) {
    if r.len() + p.len() < want {
        return;
    }
    if p.is_empty() && x.is_empty() {
        if r.len() == want {
            out.push(r.clone());
        }
        return;
    }
    // Pivot: vertex of P u X with the most neighbors in P (ties by index).
    let pivot = p
        .iter()
        .chain(x.iter())
        .copied()
        .max_by_key(|&u| (p.iter().filter(|&&v| adj[u][v]).count(), usize::MAX - u))
        .unwrap();
    let candidates: Vec<usize> = p.iter().copied().filter(|&v| !adj[pivot][v]).collect();
    let mut p = p;
    let mut x = x;
    for v in candidates {
        let new_p: Vec<usize> = p.iter().copied().filter(|&u| adj[v][u]).collect();
        let new_x: Vec<usize> = x.iter().copied().filter(|&u| adj[v][u]).collect();
        r.push(v);
        bron_kerbosch(adj, r, new_p, new_x, want, out);
        r.pop();
        p.retain(|&u| u != v);
        x.push(v);
    }
}

/// 3D alignment matching of `q` against `t`.
///
/// Candidate correspondences are maximal cliques of the type- and
/// distance-compatible association graph; each candidate is rigidly
/// aligned and accepted only if every aligned query point falls strictly
/// inside the tolerance sphere of its target point. Of the accepted
/// candidates the one with the highest alignment score wins.
pub fn align_match(
    q: &Pharmacophore,
    t: &Pharmacophore,
    cfg: &MatchConfig,
) -> Result<(MatchResult, Option<AlignmentScore>)> {
    if q.len() < 3 {
        return Err(MatchError::InvalidInput(format!(
            "alignment query needs at least 3 points, got {}",
            q.len()
        )));
    }
    let qg = build_graph(q).map_err(|e| MatchError::InvalidInput(e.to_string()))?;
    let tg = build_graph(t).map_err(|e| MatchError::InvalidInput(e.to_string()))?;
    if q.len() > t.len() {
        return Ok((MatchResult::no_match(), None));
    }

    let assoc = association_graph(&qg, &tg, 2.0 * cfg.tolerance);
    let mut cliques = Vec::new();
    let all: Vec<usize> = (0..assoc.pairs.len()).collect();
    bron_kerbosch(&assoc.adj, &mut Vec::new(), all, Vec::new(), q.len(), &mut cliques);

    let q_pts = q.positions();
    let t_pts = t.positions();
    let mut best: Option<(MatchResult, AlignmentScore)> = None;

    for clique in cliques {
        let mut mapping = vec![usize::MAX; q.len()];
        for &v in &clique {
            let (qi, tj) = assoc.pairs[v];
            mapping[qi] = tj;
        }
        let matched_t: Vec<[f64; 3]> = mapping.iter().map(|&tj| t_pts[tj]).collect();
        // Collinear candidate sets cannot anchor a rigid alignment; skip them.
        let Ok((rot, shift, rmsd)) = kabsch_align(&q_pts, &matched_t) else {
            continue;
        };
        let dists: Vec<f64> = q_pts
            .iter()
            .zip(&matched_t)
            .map(|(qp, tp)| {
                let m = apply_transform(&rot, &shift, qp);
                ((m[0] - tp[0]).powi(2) + (m[1] - tp[1]).powi(2) + (m[2] - tp[2]).powi(2)).sqrt()
            })
            .collect();
        if dists.iter().any(|d| *d >= cfg.tolerance) {
            continue;
        }
        let score = alignment_score(&dists, cfg);
        let result = MatchResult {
            matched: true,
            mapping: Some(mapping),
            rmsd: Some(rmsd),
            score: Some(score.total()),
        };
        let better = match &best {
            None => true,
            Some((_, cur)) => score.total() > cur.total(),
        };
        if better {
            best = Some((result, score));
        }
    }

    match best {
        Some((result, score)) => Ok((result, Some(score))),
        None => Ok((MatchResult::no_match(), None)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_match::graph_match;
    use pharm_core::{FeaturePoint, FeatureType, Pharmacophore};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pharm(rng: &mut ChaCha8Rng, n: usize, id: &str) -> Pharmacophore {
        Pharmacophore::new(
            id,
            (0..n)
                .map(|_| {
                    FeaturePoint::new(
                        FeatureType::from_code(rng.gen_range(0..4)).unwrap(),
                        [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)],
                    )
                })
                .collect(),
        )
    }

    fn jitter(rng: &mut ChaCha8Rng, p: &Pharmacophore, radius: f64) -> Pharmacophore {
        Pharmacophore::new(
            format!("{}-jit", p.id),
            p.points
                .iter()
                .map(|fp| {
                    // Random direction scaled to a random length below radius.
                    let dir: [f64; 3] = [
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    ];
                    let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt().max(1e-9);
                    let len = rng.gen_range(0.0..radius);
                    FeaturePoint::new(
                        fp.kind,
                        [
                            fp.pos[0] + dir[0] / norm * len,
                            fp.pos[1] + dir[1] / norm * len,
                            fp.pos[2] + dir[2] / norm * len,
                        ],
                    )
                })
                .collect(),
        )
    }

    #[test]
    fn small_displacement_still_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let cfg = MatchConfig::default();
        for _ in 0..50 {
            let t = random_pharm(&mut rng, 6, "t");
            let q = jitter(&mut rng, &t, cfg.tolerance / 2.0);
            let (res, score) = align_match(&q, &t, &cfg).unwrap();
            assert!(res.matched);
            assert_eq!(score.unwrap().s_mfp, 6);
        }
    }

    #[test]
    fn exact_subset_matches_with_full_geometry_bonus() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let t = random_pharm(&mut rng, 8, "t");
        let q = Pharmacophore::new("q", t.points[2..6].to_vec());
        let cfg = MatchConfig::default();
        let (res, score) = align_match(&q, &t, &cfg).unwrap();
        assert!(res.matched);
        let score = score.unwrap();
        assert_eq!(score.s_mfp, 4);
        assert!((score.s_geom - 1.0).abs() < 1e-9);
        assert!(res.rmsd.unwrap() < 1e-9);
    }

    #[test]
    fn alignment_implies_graph_tolerance_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let cfg = MatchConfig::default();
        let mut aligned = 0;
        for _ in 0..1000 {
            let t_size = rng.gen_range(4..8);
            let t = random_pharm(&mut rng, t_size, "t");
            let q = if rng.gen_bool(0.5) {
                let keep = rng.gen_range(3..=t.len().min(5));
                jitter(&mut rng, &Pharmacophore::new("q", t.points[..keep].to_vec()), 1.0)
            } else {
                let q_size = rng.gen_range(3..6);
                random_pharm(&mut rng, q_size, "q")
            };
            let (res, _) = align_match(&q, &t, &cfg).unwrap();
            if res.matched {
                aligned += 1;
                let qg = pharm_core::build_graph(&q).unwrap();
                let tg = pharm_core::build_graph(&t).unwrap();
                assert!(graph_match(&qg, &tg, &cfg).unwrap().matched);
            }
        }
        assert!(aligned > 100, "only {aligned}/1000 aligned; construction too weak");
    }

    #[test]
    fn no_type_compatible_mapping_means_no_match() {
        let t = Pharmacophore::new(
            "t",
            vec![
                FeaturePoint::new(FeatureType::H, [0.0, 0.0, 0.0]),
                FeaturePoint::new(FeatureType::H, [2.0, 0.0, 0.0]),
                FeaturePoint::new(FeatureType::H, [0.0, 2.0, 0.0]),
            ],
        );
        let q = Pharmacophore::new(
            "q",
            vec![
                FeaturePoint::new(FeatureType::Pi, [0.0, 0.0, 0.0]),
                FeaturePoint::new(FeatureType::H, [2.0, 0.0, 0.0]),
                FeaturePoint::new(FeatureType::H, [0.0, 2.0, 0.0]),
            ],
        );
        let (res, score) = align_match(&q, &t, &MatchConfig::default()).unwrap();
        assert!(!res.matched);
        assert!(score.is_none());
    }

    #[test]
    fn score_arithmetic_matches_worked_examples() {
        let cfg = MatchConfig::default();
        let s = alignment_score(&[0.0; 5], &cfg);
        assert_eq!(s.total(), 6.0);
        let s = alignment_score(&[1.5; 5], &cfg);
        assert_eq!(s.total(), 5.0);
        let s = alignment_score(&[0.0, 0.75, 0.75, 1.5], &cfg);
        assert!((s.s_geom - 0.5).abs() < 1e-12);
        assert!((s.total() - 4.5).abs() < 1e-12);
    }

    #[test]
    fn phi_threshold_is_inclusive() {
        assert!(phi_decision(&AlignmentScore { s_mfp: 6, s_geom: 0.0 }, 6));
        assert!(!phi_decision(&AlignmentScore { s_mfp: 5, s_geom: 0.9 }, 6));
        // A full-feature match always passes regardless of geometry.
        assert!(phi_decision(&AlignmentScore { s_mfp: 6, s_geom: 0.01 }, 6));
    }
}
