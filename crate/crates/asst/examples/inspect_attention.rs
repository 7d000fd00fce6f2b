//! Train briefly, then dump the word-to-frame attention matrix of every fed
//! layer for one video.

use asst::cli::{cmd_inspect_attention, cmd_train, InspectArgs, TrainArgs};
use asst::clip::TaskMode;
use asst::data::{generate_synthetic, SyntheticSpec};

fn main() -> asst::Result<()> {
    let root = std::env::temp_dir().join("asst_example_attention");
    let _ = std::fs::remove_dir_all(&root);

    generate_synthetic(
        &SyntheticSpec {
            n_videos: 24,
            seed: 5,
            ..SyntheticSpec::default()
        },
        root.join("data"),
    )?;
    let outcome = cmd_train(&TrainArgs {
        config: None,
        data: root.join("data"),
        mode: TaskMode::Classification,
        out: root.join("run"),
        seed: 3,
        embeddings: None,
        resume: None,
        steps: Some(60),
        threads: None,
    })?;

    let dump_path = root.join("attention.json");
    let layers = cmd_inspect_attention(&InspectArgs {
        ckpt: outcome.final_checkpoint,
        data: root.join("data"),
        video: "video_000003".into(),
        query: "2 9".into(),
        out: dump_path.clone(),
    })?;
    println!("{layers} attention matrices dumped");

    let dump: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&dump_path)?)?;
    for layer in dump["layers"].as_array().unwrap().iter().take(2) {
        println!(
            "layer {} ({} words x {} frames)",
            layer["layer"], layer["words"], layer["frames"]
        );
        let row = &layer["matrix"][0];
        let vals: Vec<f64> = row
            .as_array()
            .unwrap()
            .iter()
            .take(8)
            .map(|v| v.as_f64().unwrap())
            .collect();
        println!("  word 0, first frames: {vals:.2?}...");
    }
    Ok(())
}
