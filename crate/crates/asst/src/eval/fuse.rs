//! Weighted score fusion across modalities.

use crate::error::{Error, Result};

/// Elementwise weighted sum of aligned score vectors.
pub fn fuse_scores(score_lists: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
    if score_lists.is_empty() {
        return Err(Error::contract("fuse_scores needs at least one list"));
    }
    if score_lists.len() != weights.len() {
        return Err(Error::contract(format!(
            "{} score lists but {} weights",
            score_lists.len(),
            weights.len()
        )));
    }
    let n = score_lists[0].len();
    if let Some(bad) = score_lists.iter().find(|l| l.len() != n) {
        return Err(Error::contract(format!(
            "score list length mismatch: {} vs {}",
            bad.len(),
            n
        )));
    }
    let mut fused = vec![0.0; n];
    for (list, w) in score_lists.iter().zip(weights) {
        for (f, s) in fused.iter_mut().zip(list) {
            *f += w * s;
        }
    }
    Ok(fused)
}
