//! Evaluation stack: temporal IoU, NMS, Rank@k, mIoU, average precision,
//! sliding-window inference planning and modality score fusion.

mod ap;
mod fuse;
mod nms;
mod rank;
mod sliding;

pub use ap::{average_precision, mean_average_precision, ApFlavor, GroundTruth};
pub use fuse::fuse_scores;
pub use nms::{nms, priority as nms_priority};
pub use rank::{rank_at_k_classification, rank_at_k_detection};
pub use sliding::sliding_offsets;

use crate::clip::ClipWindow;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A candidate window with its confidence, as produced by inference or read
/// from a prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredWindow {
    pub video_id: String,
    /// Index of the description within the video, for videos with several
    /// query annotations.
    #[serde(default)]
    pub description_idx: usize,
    pub window: [f64; 2],
    pub score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_id: Option<usize>,
}

impl ScoredWindow {
    pub fn clip(&self) -> ClipWindow {
        ClipWindow {
            start: self.window[0],
            end: self.window[1],
        }
    }
}

/// Temporal intersection over union of two windows on the real line.
pub fn iou(a: &ClipWindow, b: &ClipWindow) -> f64 {
    let inter = (a.end.min(b.end) - a.start.max(b.start)).max(0.0);
    let union = a.length() + b.length() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Mean IoU between each pair's top-1 window and its ground truth; a missing
/// top-1 contributes zero.
pub fn miou(pairs: &[(Option<ClipWindow>, ClipWindow)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let total: f64 = pairs
        .iter()
        .map(|(top1, gt)| top1.map(|t| iou(&t, gt)).unwrap_or(0.0))
        .sum();
    total / pairs.len() as f64
}

/// Metric report emitted by evaluation, with fixed key names.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank5: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub miou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map: Option<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub per_class_ap: BTreeMap<String, f64>,
    /// Additional named rates, e.g. rank metrics at other IoU thresholds.
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub detail: BTreeMap<String, f64>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: f64, e: f64) -> ClipWindow {
        ClipWindow { start: s, end: e }
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&w(1.0, 3.0), &w(1.0, 3.0)), 1.0);
        assert_eq!(iou(&w(0.0, 1.0), &w(2.0, 3.0)), 0.0);
        assert!((iou(&w(0.0, 2.0), &w(1.0, 3.0)) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn iou_symmetric_and_idempotent_on_random_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let a = {
                let s = rng.gen_range(0.0..50.0);
                w(s, s + rng.gen_range(0.01..20.0))
            };
            let b = {
                let s = rng.gen_range(0.0..50.0);
                w(s, s + rng.gen_range(0.01..20.0))
            };
            let ab = iou(&a, &b);
            let ba = iou(&b, &a);
            assert!((ab - ba).abs() < 1e-15);
            assert!((0.0..=1.0).contains(&ab));
            assert_eq!(iou(&a, &a), 1.0);
        }
    }

    #[test]
    fn miou_examples() {
        let pairs = vec![
            (Some(w(0.0, 2.0)), w(0.0, 2.0)),
            (Some(w(0.0, 2.0)), w(1.0, 3.0)),
        ];
        assert!((miou(&pairs) - (1.0 + 1.0 / 3.0) / 2.0).abs() < 1e-12);
        let exact = vec![(Some(w(1.0, 2.0)), w(1.0, 2.0))];
        assert_eq!(miou(&exact), 1.0);
        let disjoint = vec![(Some(w(0.0, 1.0)), w(5.0, 6.0))];
        assert_eq!(miou(&disjoint), 0.0);
    }
}
