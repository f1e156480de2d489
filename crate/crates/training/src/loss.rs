//! Partial-ordering penalty and the max-margin objective.

use tensor_autodiff::{Tape, Var};

use crate::{Result, TrainError};

/// Squared violation of the partial ordering: `sum_i max(0, q_i - t_i)^2`.
///
/// Zero exactly when `q` is componentwise below `t`.
pub fn penalty_e(z_q: &[f64], z_t: &[f64]) -> Result<f64> {
    if z_q.len() != z_t.len() {
        return Err(TrainError::Shape(format!(
            "penalty dimensions differ: {} vs {}",
            z_q.len(),
            z_t.len()
        )));
    }
    Ok(z_q
        .iter()
        .zip(z_t)
        .map(|(q, t)| {
            let v = (q - t).max(0.0);
            v * v
        })
        .sum())
}

/// Differentiable max-margin objective over a batch of pairs.
///
/// `z_q` and `z_t` are P x D embedding matrices (row per pair); `positive`
/// flags which rows are positive pairs. Positives contribute their penalty,
/// negatives contribute `max(0, margin - penalty)`; the total is a sum, not
/// a mean.
pub fn order_loss(
    tape: &mut Tape,
    z_q: Var,
    z_t: Var,
    positive: &[bool],
    margin: f64,
) -> Result<Var> {
    let (pq, d) = tape.shape(z_q);
    let (pt, dt) = tape.shape(z_t);
    if (pq, d) != (pt, dt) {
        return Err(TrainError::Shape(format!(
            "order_loss embeddings: {pq}x{d} vs {pt}x{dt}"
        )));
    }
    if positive.len() != pq {
        return Err(TrainError::Shape(format!(
            "order_loss labels: {} for {pq} pairs",
            positive.len()
        )));
    }
    if pq == 0 {
        return Err(TrainError::Shape("order_loss needs at least one pair".into()));
    }
    let diff = tape.sub(z_q, z_t)?;
    let viol = tape.relu(diff)?;
    let sq = tape.mul(viol, viol)?;
    let e = tape.row_sum(sq)?;

    let pos_mask: Vec<f64> = positive.iter().map(|p| f64::from(*p)).collect();
    let neg_mask: Vec<f64> = positive.iter().map(|p| f64::from(!*p)).collect();
    let pos_mask = tape.constant(pq, 1, pos_mask);
    let neg_mask = tape.constant(pq, 1, neg_mask);

    let pos_terms = tape.mul(e, pos_mask)?;
    let pos_sum = tape.sum_all(pos_terms)?;

    let neg_e = tape.scale(e, -1.0)?;
    let shifted = tape.add_scalar(neg_e, margin)?;
    let hinge = tape.relu(shifted)?;
    let neg_terms = tape.mul(hinge, neg_mask)?;
    let neg_sum = tape.sum_all(neg_terms)?;

    Ok(tape.add(pos_sum, neg_sum)?)
}

/// Plain-value counterpart of [`order_loss`] over precomputed penalties.
pub fn order_loss_value(penalties: &[f64], positive: &[bool], margin: f64) -> f64 {
    penalties
        .iter()
        .zip(positive)
        .map(|(e, pos)| if *pos { *e } else { (margin - e).max(0.0) })
        .sum()
}
