//! Generate a small planted-signal dataset on disk and poke at its files.

use asst::data::{generate_synthetic, read_features, LoadedDataset, SyntheticSpec};

fn main() -> asst::Result<()> {
    let dir = std::env::temp_dir().join("asst_example_dataset");
    let _ = std::fs::remove_dir_all(&dir);

    let spec = SyntheticSpec {
        n_videos: 8,
        n_distractors: 1,
        seed: 42,
        ..SyntheticSpec::default()
    };
    let manifest = generate_synthetic(&spec, &dir)?;
    println!(
        "generated {} videos, vocab size {}, {} hashed files",
        manifest.n_videos,
        manifest.vocab_size,
        manifest.files.len()
    );

    // The binary feature format round-trips bit-exactly.
    let seq = read_features(dir.join("features/video_000000.feat"))?;
    println!(
        "video_000000: {} frames x {} channels, {:.1} s at {:.3} fps",
        seq.frames(),
        seq.channels(),
        seq.duration,
        seq.frame_rate
    );

    let ds = LoadedDataset::load(&dir)?;
    for v in ds.annotations.videos.iter().take(3) {
        let d = &v.descriptions[0];
        println!(
            "{}: tokens {:?} clip {:?} segment {:?}",
            v.video_id, d.tokens, d.clips[0], d.segment_index
        );
    }
    Ok(())
}
