//! On-the-fly query/target pair generation for contrastive training.
//!
//! Positive pairs: delete some nodes (keeping at least three) and displace
//! the survivors inside the tolerance sphere; the reduced, jittered copy is
//! guaranteed to match its source under graph-tolerance matching because
//! per-point displacements below `r_T` change any pairwise distance by less
//! than `2 r_T`.
//!
//! Negative pairs come in three families: displacement of every point onto
//! the tolerance sphere surface (directed away from the centroid so shifts
//! cannot cancel), target-side node deletion (query no longer fits inside
//! the smaller target), and batch shuffling (query paired with an unrelated
//! target).

use rand::Rng;

use pharm_core::{FeaturePoint, Pharmacophore};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, AugmentError>;

/// Fewest points a query may keep after node deletion.
pub const MIN_QUERY_POINTS: usize = 3;

/// Tolerance radius and seed for pair generation.
#[derive(Debug, Clone, Copy)]
pub struct AugmentConfig {
    /// Tolerance sphere radius in angstrom.
    pub r_t: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { r_t: 1.5, seed: 0 }
    }
}

/// Which negative-generation strategy produced a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegativeKind {
    /// Every point pushed onto the tolerance sphere surface.
    SurfaceDisplacement,
    /// Target lost nodes; query only partially fits.
    TargetDeletion,
    /// Query paired with a different batch member.
    BatchShuffle,
}

/// A query/target pharmacophore pair.
pub type Pair = (Pharmacophore, Pharmacophore);

fn sample_ball_offset<R: Rng>(radius: f64, rng: &mut R) -> [f64; 3] {
    // Uniform in the ball: angles uniform on the sphere, radius ~ R*u^(1/3).
    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
    let cos_theta: f64 = rng.gen_range(-1.0..=1.0);
    let sin_theta = (1.0 - cos_theta * cos_theta).sqrt();
    let u: f64 = rng.gen_range(0.0..1.0);
    let r = radius * u.cbrt();
    [r * sin_theta * phi.cos(), r * sin_theta * phi.sin(), r * cos_theta]
}

fn sample_sphere_offset<R: Rng>(radius: f64, rng: &mut R) -> [f64; 3] {
    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
    let cos_theta: f64 = rng.gen_range(-1.0..=1.0);
    let sin_theta = (1.0 - cos_theta * cos_theta).sqrt();
    [radius * sin_theta * phi.cos(), radius * sin_theta * phi.sin(), radius * cos_theta]
}

fn displaced(p: &Pharmacophore, suffix: &str, offsets: impl Iterator<Item = [f64; 3]>) -> Pharmacophore {
    Pharmacophore::new(
        format!("{}{suffix}", p.id),
        p.points
            .iter()
            .zip(offsets)
            .map(|(fp, d)| {
                FeaturePoint::new(fp.kind, [fp.pos[0] + d[0], fp.pos[1] + d[1], fp.pos[2] + d[2]])
            })
            .collect(),
    )
}

/// Moves every point by an independent offset drawn uniformly from the
/// ball of the given radius.
pub fn displace_in_ball<R: Rng>(p: &Pharmacophore, radius: f64, rng: &mut R) -> Pharmacophore {
    displaced(p, "~ball", (0..p.len()).map(|_| sample_ball_offset(radius, rng)))
}

/// Moves every point by an independent offset of exactly the given length
/// in a uniformly random direction. Used by the positional-perception
/// sweep, where the displacement magnitude is the controlled variable.
pub fn displace_on_sphere<R: Rng>(p: &Pharmacophore, radius: f64, rng: &mut R) -> Pharmacophore {
    displaced(p, "~sph", (0..p.len()).map(|_| sample_sphere_offset(radius, rng)))
}

/// Moves every point by exactly `r_t` away from the centroid.
///
/// Deterministic; a point exactly at the centroid (measure-zero) is pushed
/// along +x.
pub fn displace_to_surface(p: &Pharmacophore, r_t: f64) -> Pharmacophore {
    let mu = p.centroid();
    let offsets: Vec<[f64; 3]> = p
        .points
        .iter()
        .map(|fp| {
            let d = [fp.pos[0] - mu[0], fp.pos[1] - mu[1], fp.pos[2] - mu[2]];
            let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if norm == 0.0 {
                [r_t, 0.0, 0.0]
            } else {
                [d[0] / norm * r_t, d[1] / norm * r_t, d[2] / norm * r_t]
            }
        })
        .collect();
    displaced(p, "~surf", offsets.into_iter())
}

/// Deletes `k` nodes, `k` uniform in `[1, |P| - 3]`; survivor order is
/// preserved.
pub fn delete_nodes<R: Rng>(p: &Pharmacophore, rng: &mut R) -> Result<Pharmacophore> {
    if p.len() < MIN_QUERY_POINTS + 1 {
        return Err(AugmentError::InvalidInput(format!(
            "need at least {} points to delete any, got {}",
            MIN_QUERY_POINTS + 1,
            p.len()
        )));
    }
    let k = rng.gen_range(1..=p.len() - MIN_QUERY_POINTS);
    // Partial Fisher-Yates over the index set picks k victims uniformly.
    let mut idx: Vec<usize> = (0..p.len()).collect();
    for i in 0..k {
        let j = rng.gen_range(i..idx.len());
        idx.swap(i, j);
    }
    let mut delete = vec![false; p.len()];
    for &victim in &idx[..k] {
        delete[victim] = true;
    }
    Ok(Pharmacophore::new(
        format!("{}~del", p.id),
        p.points
            .iter()
            .zip(&delete)
            .filter(|(_, del)| !**del)
            .map(|(fp, _)| fp.clone())
            .collect(),
    ))
}

/// Positive pair: reduced and jittered query against the full target.
pub fn make_positive<R: Rng>(p: &Pharmacophore, cfg: &AugmentConfig, rng: &mut R) -> Result<Pair> {
    let query = displace_in_ball(&delete_nodes(p, rng)?, cfg.r_t, rng);
    Ok((query, p.clone()))
}

/// Three negatives per batch member: surface displacement, target-side
/// deletion, and a batch derangement (every query mapped to a different
/// member's target).
pub fn make_negatives<R: Rng>(
    batch: &[Pharmacophore],
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<Vec<(Pharmacophore, Pharmacophore, NegativeKind)>> {
    if batch.len() < 2 {
        return Err(AugmentError::InvalidInput(format!(
            "batch shuffling needs at least 2 pharmacophores, got {}",
            batch.len()
        )));
    }
    let mut out = Vec::with_capacity(3 * batch.len());
    for p in batch {
        out.push((displace_to_surface(p, cfg.r_t), p.clone(), NegativeKind::SurfaceDisplacement));
    }
    for p in batch {
        let query = displace_in_ball(&delete_nodes(p, rng)?, cfg.r_t, rng);
        let target = delete_nodes(p, rng)?;
        out.push((query, target, NegativeKind::TargetDeletion));
    }
    // Sattolo's algorithm yields a uniformly random cyclic permutation,
    // which is always a derangement.
    let mut perm: Vec<usize> = (0..batch.len()).collect();
    for i in (1..perm.len()).rev() {
        let j = rng.gen_range(0..i);
        perm.swap(i, j);
    }
    for (i, p) in batch.iter().enumerate() {
        let query = displace_in_ball(&delete_nodes(p, rng)?, cfg.r_t, rng);
        out.push((query, batch[perm[i]].clone(), NegativeKind::BatchShuffle));
    }
    Ok(out)
}
