//! End-to-end detection: anchor-based training with stretch/crop
//! augmentation, then sliding-window inference and mAP on held-out videos.

use asst::cli::{cmd_eval, cmd_train, EvalArgs, TrainArgs};
use asst::clip::TaskMode;
use asst::data::{generate_synthetic, SyntheticSpec};

fn main() -> asst::Result<()> {
    let root = std::env::temp_dir().join("asst_example_detection");
    let _ = std::fs::remove_dir_all(&root);

    // Videos longer than the 64-frame model window, so both the crop
    // augmentation and sliding inference have room to move.
    let base = SyntheticSpec {
        n_videos: 120,
        frames: 96,
        mode: TaskMode::Detection,
        ..SyntheticSpec::default()
    };
    generate_synthetic(&SyntheticSpec { seed: 3, ..base.clone() }, root.join("train"))?;
    generate_synthetic(
        &SyntheticSpec {
            seed: 4,
            n_videos: 40,
            ..base
        },
        root.join("test"),
    )?;

    let outcome = cmd_train(&TrainArgs {
        config: None,
        data: root.join("train"),
        mode: TaskMode::Detection,
        out: root.join("run"),
        seed: 9,
        embeddings: None,
        resume: None,
        steps: Some(700),
        threads: None,
    })?;
    println!(
        "final training loss: {:.4} (cls {:.4}, reg {:.4})",
        outcome.last_stats.loss, outcome.last_stats.cls, outcome.last_stats.reg
    );

    let report = cmd_eval(&EvalArgs {
        config: None,
        ckpt: Some(outcome.final_checkpoint),
        preds: None,
        fuse: None,
        data: root.join("test"),
        metrics: None,
        iou: Some("0.5,0.7".into()),
        nms: None,
        stride: None,
        out: None,
        threads: None,
    })?;
    println!(
        "held-out: rank1@0.5 {:.3}, map@0.5 {:.3}",
        report.rank1.unwrap_or(0.0),
        report.map.unwrap_or(0.0)
    );
    Ok(())
}
