//! Hard-example selection. The loss primitives themselves (softmax
//! cross-entropy, smooth-L1) are tape operations.

/// Mean online hard example mining: keep the examples whose classification
/// loss is at or above the batch mean. Never empty for a non-empty input.
pub fn mohem_select(cls_losses: &[f64]) -> Vec<usize> {
    if cls_losses.is_empty() {
        return Vec::new();
    }
    let mean = cls_losses.iter().sum::<f64>() / cls_losses.len() as f64;
    (0..cls_losses.len())
        .filter(|i| cls_losses[*i] >= mean)
        .collect()
}
