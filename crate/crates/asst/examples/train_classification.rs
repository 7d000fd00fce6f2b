//! End-to-end classification: generate train/test splits, fit the model for
//! a few hundred steps, report Rank@1/Rank@5/mIoU on held-out videos.
//!
//! Run with --release unless you enjoy waiting.

use asst::cli::{cmd_eval, cmd_train, EvalArgs, TrainArgs};
use asst::clip::TaskMode;
use asst::data::{generate_synthetic, SyntheticSpec};

fn main() -> asst::Result<()> {
    let root = std::env::temp_dir().join("asst_example_classification");
    let _ = std::fs::remove_dir_all(&root);

    let base = SyntheticSpec {
        n_videos: 120,
        ..SyntheticSpec::default()
    };
    generate_synthetic(&SyntheticSpec { seed: 1, ..base.clone() }, root.join("train"))?;
    generate_synthetic(
        &SyntheticSpec {
            seed: 2,
            n_videos: 40,
            ..base
        },
        root.join("test"),
    )?;

    let outcome = cmd_train(&TrainArgs {
        config: None,
        data: root.join("train"),
        mode: TaskMode::Classification,
        out: root.join("run"),
        seed: 7,
        embeddings: None,
        resume: None,
        steps: Some(400),
        threads: None,
    })?;
    println!("final training loss: {:.4}", outcome.last_stats.loss);

    let report = cmd_eval(&EvalArgs {
        config: None,
        ckpt: Some(outcome.final_checkpoint),
        preds: None,
        fuse: None,
        data: root.join("test"),
        metrics: None,
        iou: None,
        nms: None,
        stride: None,
        out: Some(root.join("report.json")),
        threads: None,
    })?;
    println!(
        "held-out: rank1 {:.3}, rank5 {:.3}, miou {:.3}",
        report.rank1.unwrap_or(0.0),
        report.rank5.unwrap_or(0.0),
        report.miou.unwrap_or(0.0)
    );
    Ok(())
}
