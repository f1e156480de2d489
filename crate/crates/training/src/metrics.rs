//! Ranking metrics shared by validation and screening evaluation.

use crate::{Result, TrainError};

/// Area under the ROC curve of `scores` against binary `labels`
/// (higher score should mean positive). Ties receive average ranks.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(TrainError::Shape(format!(
            "auroc: {} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(TrainError::Metric("auroc needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("scores must be comparable"));

    // Average ranks over tied scores, 1-based.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_scores_give_one() {
        // All positives score higher than all negatives.
        let scores = vec![-0.1, -0.2, -3.0, -4.0];
        let labels = vec![true, true, false, false];
        assert_eq!(auroc(&scores, &labels).unwrap(), 1.0);
    }

    #[test]
    fn identical_scores_give_half() {
        let scores = vec![0.5; 6];
        let labels = vec![true, false, true, false, true, false];
        assert_eq!(auroc(&scores, &labels).unwrap(), 0.5);
    }

    #[test]
    fn hand_listed_ranking() {
        // Scores {-1,-2,-3,-4} with labels {1,1,0,0}: perfect ordering.
        let scores = vec![-1.0, -2.0, -3.0, -4.0];
        let labels = vec![true, true, false, false];
        assert_eq!(auroc(&scores, &labels).unwrap(), 1.0);
        // Reversed labels: worst ordering.
        let labels = vec![false, false, true, true];
        assert_eq!(auroc(&scores, &labels).unwrap(), 0.0);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(auroc(&[0.1, 0.4], &[true, true]).is_err());
        assert!(auroc(&[0.1, 0.4], &[false, false]).is_err());
    }

    #[test]
    fn partial_overlap_counts_inversions() {
        let scores = vec![4.0, 3.0, 2.0, 1.0];
        let labels = vec![true, false, true, false];
        // Pairs: (4>3 ok), (4>1 ok), (2<3 bad), (2>1 ok) -> 3/4.
        assert_eq!(auroc(&scores, &labels).unwrap(), 0.75);
    }
}
