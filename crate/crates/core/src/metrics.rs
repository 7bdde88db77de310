//! Recall against exact ground truth.

use std::collections::HashSet;

use crate::dataset::{Neighbor, VectorId};

/// `|result[..k] ∩ truth[..k]| / k`, by id membership.
pub fn recall_at_k(result: &[VectorId], truth: &[VectorId], k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let truth: HashSet<VectorId> = truth.iter().take(k).copied().collect();
    let hits = result.iter().take(k).filter(|id| truth.contains(id)).count();
    hits as f64 / k as f64
}

/// Tie-tolerant recall: a returned id that is not in `truth[..k]` still
/// counts when its distance equals the k-th true distance.
pub fn recall_at_k_with_ties(result: &[Neighbor], truth: &[Neighbor], k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let k_eff = k.min(truth.len());
    if k_eff == 0 {
        return 0.0;
    }
    let boundary = truth[k_eff - 1].dist;
    let ids: HashSet<VectorId> = truth[..k_eff].iter().map(|n| n.id).collect();
    let hits = result
        .iter()
        .take(k)
        .filter(|n| ids.contains(&n.id) || n.dist == boundary)
        .count()
        .min(k_eff);
    hits as f64 / k as f64
}
