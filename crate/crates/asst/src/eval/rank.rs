//! Rank@k rates for both task framings.

use super::iou;
use crate::clip::ClipWindow;

/// Classification variant: a pair is a hit iff its ground-truth segment
/// index appears among the top-k ranked segment indices. Pairs are
/// (ranked segment indices, ground-truth index).
pub fn rank_at_k_classification(pairs: &[(Vec<usize>, usize)], k: usize) -> f64 {
    assert!(k >= 1, "rank@k needs k >= 1");
    if pairs.is_empty() {
        return 0.0;
    }
    let hits = pairs
        .iter()
        .filter(|(ranked, gt)| ranked.iter().take(k).any(|r| r == gt))
        .count();
    hits as f64 / pairs.len() as f64
}

/// Detection variant: a pair is a hit iff any of its top-k ranked windows
/// reaches `iou_thresh` with any ground truth of the pair. An empty ranking
/// counts as a miss.
pub fn rank_at_k_detection(
    pairs: &[(Vec<ClipWindow>, Vec<ClipWindow>)],
    k: usize,
    iou_thresh: f64,
) -> f64 {
    assert!(k >= 1, "rank@k needs k >= 1");
    if pairs.is_empty() {
        return 0.0;
    }
    let hits = pairs
        .iter()
        .filter(|(ranked, gts)| {
            ranked
                .iter()
                .take(k)
                .any(|w| gts.iter().any(|gt| iou(w, gt) >= iou_thresh))
        })
        .count();
    hits as f64 / pairs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_hits() {
        let pairs = vec![
            ((0..21).collect::<Vec<_>>(), 0), // top-1 equals gt
            ((0..21).collect::<Vec<_>>(), 4), // gt at rank 5
        ];
        assert_eq!(rank_at_k_classification(&pairs, 1), 0.5);
        assert_eq!(rank_at_k_classification(&pairs, 5), 1.0);
        assert_eq!(rank_at_k_classification(&pairs, 21), 1.0);
    }

    #[test]
    fn monotone_in_k() {
        let pairs = vec![
            (vec![3, 1, 2, 0], 0),
            (vec![2, 0, 1, 3], 3),
            (vec![1, 0, 2, 3], 1),
        ];
        let mut prev = 0.0;
        for k in 1..=4 {
            let r = rank_at_k_classification(&pairs, k);
            assert!(r >= prev);
            prev = r;
        }
        assert_eq!(prev, 1.0);
    }

    #[test]
    fn detection_iou_threshold() {
        let top1 = ClipWindow { start: 0.0, end: 10.0 };
        let gt = ClipWindow { start: 2.0, end: 10.0 };
        // IoU = 8/10 >= 0.5 -> hit.
        let pairs = vec![(vec![top1], vec![gt])];
        assert_eq!(rank_at_k_detection(&pairs, 1, 0.5), 1.0);
        assert_eq!(rank_at_k_detection(&pairs, 1, 0.9), 0.0);
    }

    #[test]
    fn empty_ranking_is_a_miss() {
        let gt = ClipWindow { start: 0.0, end: 1.0 };
        let pairs = vec![(vec![], vec![gt])];
        assert_eq!(rank_at_k_detection(&pairs, 5, 0.5), 0.0);
    }
}
