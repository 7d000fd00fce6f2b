//! Average precision over scored temporal windows.

use super::nms::priority;
use super::{iou, ScoredWindow};
use crate::clip::ClipWindow;
use std::collections::BTreeMap;

/// Interpolation flavor for the precision-recall area.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApFlavor {
    /// Every-point interpolation: exact area under the precision envelope.
    EveryPoint,
    /// Mean of the precision envelope at recalls {0.0, 0.1, ..., 1.0}.
    ElevenPoint,
}

/// A ground-truth window keyed by the (video, description) pair it belongs to.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub video_id: String,
    pub description_idx: usize,
    pub window: ClipWindow,
}

/// Average precision for one class. Predictions are matched greedily in
/// score order to the unmatched ground truth of maximal IoU >= `iou_thresh`
/// within the same (video, description) pair. Returns None when there are no
/// ground truths, so the class can be excluded from the mAP mean.
pub fn average_precision(
    preds: &[ScoredWindow],
    gts: &[GroundTruth],
    iou_thresh: f64,
    flavor: ApFlavor,
) -> Option<f64> {
    if gts.is_empty() {
        return None;
    }
    let n_gt = gts.len();
    let mut order: Vec<&ScoredWindow> = preds.iter().collect();
    order.sort_by(|a, b| priority(a, b));

    let mut matched = vec![false; n_gt];
    let mut tp_flags = Vec::with_capacity(order.len());
    for p in &order {
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if matched[gi]
                || gt.video_id != p.video_id
                || gt.description_idx != p.description_idx
            {
                continue;
            }
            let v = iou(&p.clip(), &gt.window);
            if v >= iou_thresh && best.map(|(_, bv)| v > bv).unwrap_or(true) {
                best = Some((gi, v));
            }
        }
        match best {
            Some((gi, _)) => {
                matched[gi] = true;
                tp_flags.push(true);
            }
            None => tp_flags.push(false),
        }
    }

    let mut precisions = Vec::with_capacity(tp_flags.len());
    let mut recalls = Vec::with_capacity(tp_flags.len());
    let mut tp = 0usize;
    for (i, is_tp) in tp_flags.iter().enumerate() {
        if *is_tp {
            tp += 1;
        }
        precisions.push(tp as f64 / (i + 1) as f64);
        recalls.push(tp as f64 / n_gt as f64);
    }
    // Precision envelope: max precision at or beyond each position.
    let mut envelope = precisions.clone();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }

    let ap = match flavor {
        ApFlavor::EveryPoint => {
            let mut area = 0.0;
            let mut prev_recall = 0.0;
            for i in 0..tp_flags.len() {
                if tp_flags[i] {
                    area += (recalls[i] - prev_recall) * envelope[i];
                    prev_recall = recalls[i];
                }
            }
            area
        }
        ApFlavor::ElevenPoint => {
            let mut total = 0.0;
            for j in 0..=10 {
                let r = j as f64 / 10.0;
                let p = (0..tp_flags.len())
                    .filter(|i| recalls[*i] >= r - 1e-12)
                    .map(|i| envelope[i])
                    .fold(0.0_f64, f64::max);
                total += p;
            }
            total / 11.0
        }
    };
    Some(ap)
}

/// Unweighted mean of per-class APs; classes without ground truths are
/// excluded. Predictions with no class id fall into class 0.
pub fn mean_average_precision(
    preds: &[ScoredWindow],
    gts: &[(usize, GroundTruth)],
    iou_thresh: f64,
    flavor: ApFlavor,
) -> (Option<f64>, BTreeMap<usize, f64>) {
    let mut by_class: BTreeMap<usize, (Vec<ScoredWindow>, Vec<GroundTruth>)> = BTreeMap::new();
    for (class, gt) in gts {
        by_class.entry(*class).or_default().1.push(gt.clone());
    }
    for p in preds {
        let class = p.class_id.unwrap_or(0);
        if let Some(slot) = by_class.get_mut(&class) {
            slot.0.push(p.clone());
        }
    }
    let mut per_class = BTreeMap::new();
    for (class, (ps, gs)) in &by_class {
        if let Some(ap) = average_precision(ps, gs, iou_thresh, flavor) {
            per_class.insert(*class, ap);
        }
    }
    let map = if per_class.is_empty() {
        None
    } else {
        Some(per_class.values().sum::<f64>() / per_class.len() as f64)
    };
    (map, per_class)
}
