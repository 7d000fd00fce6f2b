//! The evaluation toolkit on hand-built windows: IoU, NMS, Rank@k, mIoU,
//! average precision and score fusion.

use asst::clip::ClipWindow;
use asst::eval::{
    average_precision, fuse_scores, iou, miou, nms, rank_at_k_detection, ApFlavor, GroundTruth,
    ScoredWindow,
};

fn sw(s: f64, e: f64, score: f64) -> ScoredWindow {
    ScoredWindow {
        video_id: "v0".into(),
        description_idx: 0,
        window: [s, e],
        score,
        class_id: None,
    }
}

fn main() {
    let a = ClipWindow::new(0.0, 2.0).unwrap();
    let b = ClipWindow::new(1.0, 3.0).unwrap();
    println!("iou([0,2],[1,3]) = {:.4}", iou(&a, &b));

    // Greedy suppression keeps the strongest of each overlapping cluster.
    let windows = vec![
        sw(0.0, 10.0, 0.9),
        sw(1.0, 11.0, 0.8),
        sw(20.0, 30.0, 0.7),
        sw(21.0, 29.0, 0.65),
    ];
    let kept = nms(&windows, 0.3);
    println!("nms kept {} of {} windows:", kept.len(), windows.len());
    for k in &kept {
        println!("  [{:.0}, {:.0}] @ {:.2}", k.window[0], k.window[1], k.score);
    }

    // Rank@1 at IoU 0.5 over two (prediction list, ground truth) pairs.
    let pairs = vec![
        (
            vec![ClipWindow::new(0.0, 10.0).unwrap()],
            vec![ClipWindow::new(2.0, 10.0).unwrap()],
        ),
        (
            vec![ClipWindow::new(5.0, 6.0).unwrap()],
            vec![ClipWindow::new(20.0, 25.0).unwrap()],
        ),
    ];
    println!("rank1@0.5 = {}", rank_at_k_detection(&pairs, 1, 0.5));

    let m = miou(&[
        (Some(a), a),
        (Some(a), b),
    ]);
    println!("miou = {m:.4}");

    // The classic PR fixture: TP, FP, TP over two ground truths -> 5/6.
    let preds = vec![sw(0.0, 1.0, 0.9), sw(40.0, 41.0, 0.8), sw(4.0, 5.0, 0.7)];
    let gts = vec![
        GroundTruth {
            video_id: "v0".into(),
            description_idx: 0,
            window: ClipWindow::new(0.0, 1.0).unwrap(),
        },
        GroundTruth {
            video_id: "v0".into(),
            description_idx: 0,
            window: ClipWindow::new(4.0, 5.0).unwrap(),
        },
    ];
    let ap = average_precision(&preds, &gts, 0.5, ApFlavor::EveryPoint).unwrap();
    println!("ap fixture = {ap:.4} (exactly 5/6 = {:.4})", 5.0 / 6.0);

    // Fusing two modality score lists with a 1:2 weight.
    let fused = fuse_scores(&[vec![1.0, 0.0, 0.4], vec![0.0, 1.0, 0.4]], &[1.0, 2.0]).unwrap();
    println!("fused scores = {fused:?}");
}
