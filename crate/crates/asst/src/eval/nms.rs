//! Greedy non-maximum suppression over scored temporal windows.

use super::{iou, ScoredWindow};
use std::cmp::Ordering;

/// Priority order: higher score first; ties broken by earlier start, then by
/// longer window.
pub fn priority(a: &ScoredWindow, b: &ScoredWindow) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.window[0].partial_cmp(&b.window[0]).unwrap_or(Ordering::Equal))
        .then_with(|| {
            let la = a.window[1] - a.window[0];
            let lb = b.window[1] - b.window[0];
            lb.partial_cmp(&la).unwrap_or(Ordering::Equal)
        })
}

fn same_class(a: &ScoredWindow, b: &ScoredWindow) -> bool {
    a.class_id == b.class_id
}

/// Keep windows greedily by descending score, suppressing any remaining
/// same-class window whose IoU with a kept one exceeds `thresh`.
pub fn nms(windows: &[ScoredWindow], thresh: f64) -> Vec<ScoredWindow> {
    let mut sorted: Vec<&ScoredWindow> = windows.iter().collect();
    sorted.sort_by(|a, b| priority(a, b));
    let mut kept: Vec<ScoredWindow> = Vec::new();
    let mut suppressed = vec![false; sorted.len()];
    for i in 0..sorted.len() {
        if suppressed[i] {
            continue;
        }
        kept.push(sorted[i].clone());
        for j in i + 1..sorted.len() {
            if suppressed[j] || !same_class(sorted[i], sorted[j]) {
                continue;
            }
            if iou(&sorted[i].clip(), &sorted[j].clip()) > thresh {
                suppressed[j] = true;
            }
        }
    }
    kept
}
