//! Tolerance-relaxed subgraph matching on distance graphs.

use pharm_core::PharmGraph;

use crate::{MatchConfig, MatchError, MatchResult, Result};

/// Largest target brute-force enumeration will accept.
pub const BRUTE_FORCE_CAP: usize = 10;

fn edge_compatible(q: &PharmGraph, t: &PharmGraph, qu: usize, qv: usize, tu: usize, tv: usize, two_rt: f64) -> bool {
    (q.dist(qu, qv) - t.dist(tu, tv)).abs() < two_rt
}

/// Decides whether `q` matches `t`: an injective, type-preserving node map
/// whose pairwise distances all differ by strictly less than `2 * r_T`.
///
/// Backtracking search; query nodes are processed rarest-candidate first
/// and target candidates in ascending index, so the returned mapping is
/// deterministic. A query larger than its target is simply no match.
pub fn graph_match(q: &PharmGraph, t: &PharmGraph, cfg: &MatchConfig) -> Result<MatchResult> {
    if q.size() == 0 {
        return Err(MatchError::InvalidInput("empty query graph".into()));
    }
    if q.size() > t.size() {
        return Ok(MatchResult::no_match());
    }
    let two_rt = 2.0 * cfg.tolerance;

    // Candidate targets per query node, filtered by type.
    let candidates: Vec<Vec<usize>> = q
        .node_labels
        .iter()
        .map(|ql| {
            (0..t.size()).filter(|&tj| t.node_labels[tj] == *ql).collect::<Vec<_>>()
        })
        .collect();
    if candidates.iter().any(|c| c.is_empty()) {
        return Ok(MatchResult::no_match());
    }

    let mut order: Vec<usize> = (0..q.size()).collect();
    order.sort_by_key(|&i| (candidates[i].len(), i));

    let mut assigned: Vec<Option<usize>> = vec![None; q.size()];
    let mut used = vec![false; t.size()];

    fn search(
        depth: usize,
        order: &[usize],
        candidates: &[Vec<usize>],
        q: &PharmGraph,
        t: &PharmGraph,
        two_rt: f64,
        assigned: &mut Vec<Option<usize>>,
        used: &mut Vec<bool>,
    ) -> bool {
        if depth == order.len() {
            return true;
        }
        let qi = order[depth];
        for &tj in &candidates[qi] {
            if used[tj] {
                continue;
            }
            let ok = order[..depth].iter().all(|&qk| {
                let tk = assigned[qk].unwrap();
                edge_compatible(q, t, qi, qk, tj, tk, two_rt)
            });
            if !ok {
                continue;
            }
            assigned[qi] = Some(tj);
            used[tj] = true;
            if search(depth + 1, order, candidates, q, t, two_rt, assigned, used) {
                return true;
            }
            assigned[qi] = None;
            used[tj] = false;
        }
        false
    }

    if search(0, &order, &candidates, q, t, two_rt, &mut assigned, &mut used) {
        Ok(MatchResult {
            matched: true,
            mapping: Some(assigned.into_iter().map(Option::unwrap).collect()),
            rmsd: None,
            score: None,
        })
    } else {
        Ok(MatchResult::no_match())
    }
}

/// Reference matcher: exhaustively enumerates every injective,
/// type-preserving assignment and tests the full pairwise condition only
/// on complete assignments. Same decision semantics as [`graph_match`],
/// guarded by a factorial-cost cap on the target size.
pub fn brute_force_match(q: &PharmGraph, t: &PharmGraph, cfg: &MatchConfig) -> Result<MatchResult> {
    brute_force_match_capped(q, t, cfg, BRUTE_FORCE_CAP)
}

/// [`brute_force_match`] with an explicit target-size cap.
pub fn brute_force_match_capped(
    q: &PharmGraph,
    t: &PharmGraph,
    cfg: &MatchConfig,
    cap: usize,
) -> Result<MatchResult> {
    if q.size() == 0 {
        return Err(MatchError::InvalidInput("empty query graph".into()));
    }
    if t.size() > cap {
        return Err(MatchError::SizeLimit { size: t.size(), cap });
    }
    if q.size() > t.size() {
        return Ok(MatchResult::no_match());
    }
    let two_rt = 2.0 * cfg.tolerance;
    let mut assignment = vec![0usize; q.size()];
    let mut used = vec![false; t.size()];

    fn enumerate(
        qi: usize,
        q: &PharmGraph,
        t: &PharmGraph,
        two_rt: f64,
        assignment: &mut Vec<usize>,
        used: &mut Vec<bool>,
    ) -> bool {
        if qi == q.size() {
            // Complete assignment: verify every query pair.
            for u in 0..q.size() {
                for v in (u + 1)..q.size() {
                    if !edge_compatible(q, t, u, v, assignment[u], assignment[v], two_rt) {
                        return false;
                    }
                }
            }
            return true;
        }
        for tj in 0..t.size() {
            if used[tj] || t.node_labels[tj] != q.node_labels[qi] {
                continue;
            }
            assignment[qi] = tj;
            used[tj] = true;
            if enumerate(qi + 1, q, t, two_rt, assignment, used) {
                return true;
            }
            used[tj] = false;
        }
        false
    }

    if enumerate(0, q, t, two_rt, &mut assignment, &mut used) {
        Ok(MatchResult { matched: true, mapping: Some(assignment), rmsd: None, score: None })
    } else {
        Ok(MatchResult::no_match())
    }
}

/// Test helper: checks that a mapping is injective, type-preserving and
/// distance-compatible.
pub fn mapping_is_valid(q: &PharmGraph, t: &PharmGraph, mapping: &[usize], r_t: f64) -> bool {
    if mapping.len() != q.size() {
        return false;
    }
    let mut seen = vec![false; t.size()];
    for (qi, &tj) in mapping.iter().enumerate() {
        if tj >= t.size() || seen[tj] || q.node_labels[qi] != t.node_labels[tj] {
            return false;
        }
        seen[tj] = true;
    }
    for u in 0..q.size() {
        for v in (u + 1)..q.size() {
            if (q.dist(u, v) - t.dist(mapping[u], mapping[v])).abs() >= 2.0 * r_t {
                return false;
            }
        }
    }
    true
}
