//! Clip sampling: enumerated segments for the classification model and the
//! anchor grid plus regression for the detection model, both scored by a
//! weight-shared head over RoI-pooled slices of the representation sequence.

use crate::autograd::{Padding, Tape, Var};
use crate::error::{Error, Result};
use crate::eval::iou;
use crate::nn::{Conv1dLayer, Ctx, Linear, ParamStore};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Elements sampled from the representation sequence per clip.
pub const ROI_SAMPLES: usize = 7;

/// Which clip-sampling regime a model (or dataset) uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskMode {
    /// Score every enumerated segment; trained with a softmax over all of
    /// them.
    Classification,
    /// Anchor grid with confidence plus window regression.
    Detection,
}

impl std::str::FromStr for TaskMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(TaskMode::Classification),
            "detection" => Ok(TaskMode::Detection),
            other => Err(Error::config(format!(
                "unknown mode {other:?} (classification|detection)"
            ))),
        }
    }
}

impl std::fmt::Display for TaskMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskMode::Classification => "classification",
            TaskMode::Detection => "detection",
        })
    }
}

/// Number of anchor groups; group i holds clips of length tau / 2^i.
pub const ANCHOR_GROUPS: usize = 6;

/// Temporal interval in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipWindow {
    pub start: f64,
    pub end: f64,
}

impl ClipWindow {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start >= 0.0 && start < end) {
            return Err(Error::contract(format!(
                "clip window needs 0 <= start < end, got [{start}, {end}]"
            )));
        }
        Ok(ClipWindow { start, end })
    }

    pub fn from_center(center: f64, length: f64) -> Self {
        ClipWindow {
            start: center - 0.5 * length,
            end: center + 0.5 * length,
        }
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.start + self.end)
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn shifted(&self, offset: f64) -> Self {
        ClipWindow {
            start: self.start + offset,
            end: self.end + offset,
        }
    }

    /// Clamp into [0, tau], keeping a sliver at the nearest boundary if the
    /// window falls entirely outside.
    pub fn clipped(&self, tau: f64) -> Self {
        let sliver = 1e-9_f64.min(tau * 0.5);
        let start = self.start.clamp(0.0, tau);
        let end = self.end.clamp(0.0, tau);
        if end - start > 0.0 {
            ClipWindow { start, end }
        } else if self.center() <= 0.0 {
            ClipWindow {
                start: 0.0,
                end: sliver,
            }
        } else {
            ClipWindow {
                start: tau - sliver,
                end: tau,
            }
        }
    }
}

/// Fixed candidate window of the detection sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub group: usize,
    pub center: f64,
    pub length: f64,
}

impl Anchor {
    pub fn window(&self) -> ClipWindow {
        ClipWindow::from_center(self.center, self.length)
    }
}

/// Count of samplers in group i: 2^(i+2) - 3.
pub fn anchors_in_group(group: usize) -> usize {
    (1usize << (group + 2)) - 3
}

/// The six anchor groups over [0, tau]: group i holds windows of length
/// tau / 2^i spaced length/4 apart, the first centered at length/2 and the
/// last at tau - length/2.
pub fn anchor_grid(tau: f64) -> Vec<Anchor> {
    assert!(tau > 0.0, "anchor grid needs a positive duration");
    let mut anchors = Vec::new();
    for group in 0..ANCHOR_GROUPS {
        let length = tau / (1 << group) as f64;
        let step = length / 4.0;
        let count = anchors_in_group(group);
        for k in 0..count {
            anchors.push(Anchor {
                group,
                center: length / 2.0 + step * k as f64,
                length,
            });
        }
    }
    anchors
}

/// All contiguous spans of `n_seg` fixed-length segments, ordered
/// lexicographically by (first, last).
#[derive(Debug, Clone)]
pub struct SegmentEnumeration {
    pub spans: Vec<(usize, usize)>,
    pub seg_len: f64,
}

impl SegmentEnumeration {
    pub fn new(n_seg: usize, seg_len: f64) -> Result<Self> {
        if n_seg < 1 || seg_len <= 0.0 {
            return Err(Error::config("segment enumeration needs n_seg >= 1 and seg_len > 0"));
        }
        let mut spans = Vec::with_capacity(n_seg * (n_seg + 1) / 2);
        for a in 0..n_seg {
            for b in a..n_seg {
                spans.push((a, b));
            }
        }
        Ok(SegmentEnumeration { spans, seg_len })
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn window(&self, idx: usize) -> ClipWindow {
        let (a, b) = self.spans[idx];
        ClipWindow {
            start: a as f64 * self.seg_len,
            end: (b + 1) as f64 * self.seg_len,
        }
    }

    pub fn windows(&self) -> Vec<ClipWindow> {
        (0..self.len()).map(|i| self.window(i)).collect()
    }

    /// Index of the span covering segments [a, b], if valid.
    pub fn index_of(&self, a: usize, b: usize) -> Option<usize> {
        self.spans.iter().position(|s| *s == (a, b))
    }

    /// Index of the span whose window matches within tolerance.
    pub fn index_of_window(&self, w: &ClipWindow, tol: f64) -> Option<usize> {
        (0..self.len()).find(|i| {
            let c = self.window(*i);
            (c.start - w.start).abs() <= tol && (c.end - w.end).abs() <= tol
        })
    }
}

/// Temporal endpoint feature: normalized (start, end) of a candidate window.
pub fn tef(w: &ClipWindow, tau: f64) -> (f64, f64) {
    (w.start / tau, w.end / tau)
}

/// Where the temporal endpoint feature enters the model, if at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TefMode {
    Off,
    /// Appended to each of the RoI-pooled vectors (default).
    PerPooledVector,
    /// Appended to every frame of the final representation before pooling.
    PerFrame,
}

impl std::str::FromStr for TefMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(TefMode::Off),
            "per_pooled" => Ok(TefMode::PerPooledVector),
            "per_frame" => Ok(TefMode::PerFrame),
            other => Err(Error::config(format!(
                "unknown tef mode {other:?} (off|per_pooled|per_frame)"
            ))),
        }
    }
}

impl std::fmt::Display for TefMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TefMode::Off => "off",
            TefMode::PerPooledVector => "per_pooled",
            TefMode::PerFrame => "per_frame",
        })
    }
}

/// Sample ROI_SAMPLES elements of rep[m×C] evenly across the window by
/// linear interpolation. Window seconds map to fractional frame coordinates
/// with the full duration spanning [0, m-1].
pub fn roi_pool(tape: &mut Tape, rep: Var, w: &ClipWindow, tau: f64) -> Result<Var> {
    if !(w.length() > 0.0) {
        return Err(Error::contract("roi_pool needs a window of positive length"));
    }
    if w.end < 0.0 || w.start > tau {
        return Err(Error::contract(format!(
            "window [{}, {}] does not intersect [0, {tau}]",
            w.start, w.end
        )));
    }
    let m = tape.shape(rep)[0];
    let to_coord = |t: f64| (t / tau) * (m - 1) as f64;
    let step = w.length() / (ROI_SAMPLES - 1) as f64;
    let coords: Vec<f64> = (0..ROI_SAMPLES)
        .map(|k| to_coord(w.start + step * k as f64))
        .collect();
    tape.interp_rows(rep, &coords)
}

/// Decode a predicted window from anchor deltas (center shift in units of
/// the anchor length, log length ratio), clipped to [0, tau].
pub fn decode_window(anchor: &Anchor, d_c: f64, d_l: f64, tau: f64) -> ClipWindow {
    let center = anchor.center + d_c * anchor.length;
    let length = d_l.exp() * anchor.length;
    ClipWindow::from_center(center, length).clipped(tau)
}

/// Regression targets whose decoding reproduces `gt` exactly (before any
/// clipping).
pub fn encode_targets(anchor: &Anchor, gt: &ClipWindow) -> (f64, f64) {
    let d_c = (gt.center() - anchor.center) / anchor.length;
    let d_l = (gt.length() / anchor.length).ln();
    (d_c, d_l)
}

/// Per-anchor assignment: positives point at their matched ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnchorLabel {
    Negative,
    /// Index into the ground-truth list.
    Positive(usize),
}

/// An anchor is positive iff its best IoU over ground truths reaches
/// `thresh`; the match is the argmax (ties to the earlier ground truth).
pub fn assign_positives(anchors: &[Anchor], gts: &[ClipWindow], thresh: f64) -> Vec<AnchorLabel> {
    anchors
        .iter()
        .map(|a| {
            let w = a.window();
            let mut best = (0.0, None);
            for (gi, gt) in gts.iter().enumerate() {
                let v = iou(&w, gt);
                if v > best.0 {
                    best = (v, Some(gi));
                }
            }
            match best {
                (v, Some(gi)) if v >= thresh => AnchorLabel::Positive(gi),
                _ => AnchorLabel::Negative,
            }
        })
        .collect()
}

/// Head output for one candidate window.
pub struct HeadOutput {
    /// [1×K] score logits: K=1 for the classification model, K=classes+1
    /// for the detection model.
    pub logits: Var,
    /// [1×2] regression deltas (d_c, d_l), detection model only.
    pub regression: Option<Var>,
}

/// The shared clip-sampler head: two valid kernel-3 convolutions
/// (7 → 5 → 3 positions), a global average, and linear score/regression
/// maps. One instance scores every candidate, so weights are shared.
pub struct ClipHead {
    conv1: Conv1dLayer,
    conv2: Conv1dLayer,
    score: Linear,
    regression: Option<Linear>,
}

impl ClipHead {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_mid: usize,
        score_outputs: usize,
        with_regression: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let conv1 = Conv1dLayer::new(store, &format!("{name}.conv1"), 3, c_in, c_mid, 1, 1, Padding::Valid, rng);
        let conv2 = Conv1dLayer::new(store, &format!("{name}.conv2"), 3, c_mid, c_mid, 1, 1, Padding::Valid, rng);
        let score = Linear::new(store, &format!("{name}.score"), c_mid, score_outputs, rng);
        let regression =
            with_regression.then(|| Linear::new(store, &format!("{name}.reg"), c_mid, 2, rng));
        ClipHead {
            conv1,
            conv2,
            score,
            regression,
        }
    }

    pub fn forward(&self, ctx: &mut Ctx, pooled: Var) -> Result<HeadOutput> {
        let h = self.conv1.forward(ctx, pooled)?;
        let h = ctx.tape.relu(h);
        let h = self.conv2.forward(ctx, h)?;
        let h = ctx.tape.relu(h);
        let h = ctx.tape.mean_rows(h)?;
        let logits = self.score.forward(ctx, h)?;
        let regression = match &self.regression {
            Some(reg) => Some(reg.forward(ctx, h)?),
            None => None,
        };
        Ok(HeadOutput { logits, regression })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn segment_enumeration_counts_and_order() {
        let e = SegmentEnumeration::new(6, 5.0).unwrap();
        assert_eq!(e.len(), 21);
        assert_eq!(e.spans[0], (0, 0));
        assert_eq!(e.window(0), ClipWindow { start: 0.0, end: 5.0 });
        assert_eq!(*e.spans.last().unwrap(), (5, 5));
        assert_eq!(e.window(20), ClipWindow { start: 25.0, end: 30.0 });

        assert_eq!(SegmentEnumeration::new(1, 5.0).unwrap().len(), 1);
        assert_eq!(SegmentEnumeration::new(3, 5.0).unwrap().len(), 6);
    }

    #[test]
    fn tef_examples() {
        let tau = 30.0;
        let (s, e) = tef(&ClipWindow::new(0.0, 30.0).unwrap(), tau);
        assert_eq!((s, e), (0.0, 1.0));
        let (s, e) = tef(&ClipWindow::new(5.0, 10.0).unwrap(), tau);
        assert!((s - 1.0 / 6.0).abs() < 1e-12 && (e - 1.0 / 3.0).abs() < 1e-12);
        let (s, e) = tef(&ClipWindow::new(0.0, 5.0).unwrap(), tau);
        assert!(s == 0.0 && (e - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn anchor_grid_counts_and_bounds() {
        let tau = 30.0;
        let anchors = anchor_grid(tau);
        assert_eq!(anchors.len(), 234);
        for (i, expect) in [(0usize, 1usize), (1, 5), (2, 13), (3, 29), (4, 61), (5, 125)] {
            assert_eq!(anchors.iter().filter(|a| a.group == i).count(), expect);
            assert_eq!(anchors_in_group(i), expect);
        }
        // Group 0 covers the whole span; every anchor lies inside [0, tau].
        let g0 = anchors.iter().find(|a| a.group == 0).unwrap();
        assert_eq!(g0.window(), ClipWindow { start: 0.0, end: tau });
        for a in &anchors {
            let w = a.window();
            assert!(w.start >= -1e-9 && w.end <= tau + 1e-9, "{a:?}");
        }
        // First and last anchors of each group touch the ends.
        for g in 0..ANCHOR_GROUPS {
            let of_group: Vec<_> = anchors.iter().filter(|a| a.group == g).collect();
            let l = of_group[0].length;
            assert!((of_group[0].center - l / 2.0).abs() < 1e-9);
            assert!((of_group.last().unwrap().center - (tau - l / 2.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn decode_examples() {
        let tau = 100.0;
        let a = Anchor {
            group: 0,
            center: 10.0,
            length: 4.0,
        };
        let w = decode_window(&a, 0.0, 0.0, tau);
        assert!((w.start - 8.0).abs() < 1e-12 && (w.end - 12.0).abs() < 1e-12);

        let w = decode_window(&a, 0.5, 2.0_f64.ln(), tau);
        assert!((w.start - 8.0).abs() < 1e-12 && (w.end - 16.0).abs() < 1e-12);

        let w = decode_window(&a, 0.0, -(4.0_f64.ln()), tau);
        assert!((w.length() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn encode_decode_round_trip() {
        let a = Anchor {
            group: 2,
            center: 10.0,
            length: 4.0,
        };
        assert_eq!(encode_targets(&a, &a.window()), (0.0, 0.0));
        let gt = ClipWindow::from_center(12.0, 8.0);
        let (d_c, d_l) = encode_targets(&a, &gt);
        assert!((d_c - 0.5).abs() < 1e-12 && (d_l - 2.0_f64.ln()).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let tau = 64.0;
        for _ in 0..1000 {
            let anchor = Anchor {
                group: rng.gen_range(0..6),
                center: rng.gen_range(1.0..tau - 1.0),
                length: rng.gen_range(0.5..tau / 2.0),
            };
            let s = rng.gen_range(0.0..tau - 1.0);
            let e = rng.gen_range(s + 0.1..tau);
            let gt = ClipWindow::new(s, e).unwrap();
            let (d_c, d_l) = encode_targets(&anchor, &gt);
            let back = decode_window(&anchor, d_c, d_l, tau);
            assert!((back.start - gt.start).abs() < 1e-9);
            assert!((back.end - gt.end).abs() < 1e-9);
        }
    }

    #[test]
    fn assignment_follows_iou_threshold() {
        let anchors = vec![
            Anchor { group: 0, center: 1.0, length: 2.0 },
            Anchor { group: 0, center: 2.0, length: 4.0 },
        ];
        // anchor [0,2] vs gt [1,3]: IoU 1/3 -> negative;
        // anchor [0,4] vs gt [1,4]: IoU 3/4 -> positive.
        let gts = vec![ClipWindow::new(1.0, 3.0).unwrap(), ClipWindow::new(1.0, 4.0).unwrap()];
        let labels = assign_positives(&anchors, &gts, 0.5);
        assert_eq!(labels[0], AnchorLabel::Negative);
        assert_eq!(labels[1], AnchorLabel::Positive(1));

        let self_match = assign_positives(
            &[anchors[0]],
            &[anchors[0].window()],
            0.5,
        );
        assert_eq!(self_match[0], AnchorLabel::Positive(0));
    }

    fn pool_ctx() -> (ParamStore, ChaCha8Rng) {
        (ParamStore::new(), ChaCha8Rng::seed_from_u64(0))
    }

    #[test]
    fn roi_pool_reads_exact_frames_on_grid() {
        let (store, rng) = pool_ctx();
        let mut ctx = Ctx::new(&store, false, rng);
        let vals: Vec<f64> = (0..14).map(|i| i as f64).collect();
        let rep = ctx.tape.constant(vec![7, 2], vals.clone()).unwrap();
        let w = ClipWindow::new(0.0, 6.0).unwrap();
        let pooled = roi_pool(&mut ctx.tape, rep, &w, 6.0).unwrap();
        assert_eq!(ctx.tape.values(pooled), vals.as_slice());
    }

    #[test]
    fn roi_pool_constant_field_and_ramp() {
        let (store, rng) = pool_ctx();
        let mut ctx = Ctx::new(&store, false, rng);
        let rep = ctx.tape.constant(vec![9, 1], vec![3.5; 9]).unwrap();
        let w = ClipWindow::new(1.3, 4.9).unwrap();
        let pooled = roi_pool(&mut ctx.tape, rep, &w, 9.0).unwrap();
        assert!(ctx.tape.values(pooled).iter().all(|v| (v - 3.5).abs() < 1e-12));

        let ramp: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let rep = ctx.tape.constant(vec![10, 1], ramp).unwrap();
        let w = ClipWindow::new(0.0, 10.0).unwrap();
        let pooled = roi_pool(&mut ctx.tape, rep, &w, 10.0).unwrap();
        let expect = [0.0, 1.5, 3.0, 4.5, 6.0, 7.5, 9.0];
        for (a, b) in ctx.tape.values(pooled).iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn roi_pool_rejects_degenerate_windows() {
        let (store, rng) = pool_ctx();
        let mut ctx = Ctx::new(&store, false, rng);
        let rep = ctx.tape.constant(vec![4, 1], vec![0.0; 4]).unwrap();
        let w = ClipWindow { start: 2.0, end: 2.0 };
        assert!(roi_pool(&mut ctx.tape, rep, &w, 4.0).is_err());
    }

    #[test]
    fn zero_weight_head_outputs_zeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let head = ClipHead::new(&mut store, "head", 3, 4, 2, true, &mut rng);
        for id in store.trainable_ids() {
            store.get_mut(id).values_mut().fill(0.0);
        }
        let mut ctx = Ctx::new(&store, false, ChaCha8Rng::seed_from_u64(0));
        let pooled = ctx
            .tape
            .constant(vec![7, 3], (0..21).map(|i| i as f64 * 0.1).collect())
            .unwrap();
        let out = head.forward(&mut ctx, pooled).unwrap();
        assert_eq!(ctx.tape.values(out.logits), &[0.0, 0.0]);
        assert_eq!(ctx.tape.values(out.regression.unwrap()), &[0.0, 0.0]);
    }

    #[test]
    fn shared_head_is_pure_in_evaluation_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let head = ClipHead::new(&mut store, "head", 2, 4, 1, false, &mut rng);
        let windows: Vec<Vec<f64>> = (0..5)
            .map(|k| (0..14).map(|i| ((i + k) as f64 * 0.37).sin()).collect())
            .collect();
        let score_in_order = |order: &[usize]| -> Vec<f64> {
            let mut ctx = Ctx::new(&store, false, ChaCha8Rng::seed_from_u64(0));
            let mut scores = vec![0.0; windows.len()];
            for &k in order {
                let pooled = ctx.tape.constant(vec![7, 2], windows[k].clone()).unwrap();
                let out = head.forward(&mut ctx, pooled).unwrap();
                scores[k] = ctx.tape.value_scalar(out.logits);
            }
            scores
        };
        let fwd = score_in_order(&[0, 1, 2, 3, 4]);
        let rev = score_in_order(&[4, 3, 2, 1, 0]);
        assert_eq!(fwd, rev);
    }
}
