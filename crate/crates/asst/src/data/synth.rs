//! Synthetic planted-signal dataset generator.
//!
//! Each video is Gaussian noise with one pattern's signature vector added
//! inside a ground-truth window; the query names that pattern by token id.
//! Signatures are orthonormal (scaled by the amplitude), so distinct queries
//! are linearly separable and the tasks are solvable by construction.
//! Optional distractor patterns are planted in windows disjoint from the
//! ground truth, making the query content necessary for localization.

use super::annotations::{
    sha256_hex, AnnotationSet, DescriptionRecord, Manifest, Token, VideoAnnotation,
};
use super::features::{write_features, FeatureSequence};
use crate::clip::{ClipWindow, SegmentEnumeration, TaskMode};
use crate::error::{Error, Result};
use crate::eval::iou;
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Filler-token vocabulary appended after the pattern tokens; fillers carry
/// no localization signal.
pub const FILLER_TOKENS: usize = 4;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_videos: usize,
    /// Frames per video.
    pub frames: usize,
    pub d_v: usize,
    pub n_patterns: usize,
    pub noise_std: f64,
    pub pattern_amplitude: f64,
    pub mode: TaskMode,
    pub seed: u64,
    /// Seed of the pattern-signature dictionary. Kept separate from `seed`
    /// so train and test splits drawn with different seeds still plant the
    /// same signatures.
    pub signature_seed: u64,
    /// Classification geometry; duration = n_segments * segment_len.
    pub n_segments: usize,
    pub segment_len: f64,
    /// Detection mode sets the clock directly; classification derives it
    /// from frames and duration.
    pub frame_rate: f64,
    /// Distractor patterns planted per video in windows disjoint from the
    /// ground truth.
    pub n_distractors: usize,
    /// Filler tokens appended to each query.
    pub query_pad_tokens: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_videos: 50,
            frames: 64,
            d_v: 16,
            n_patterns: 8,
            noise_std: 0.2,
            pattern_amplitude: 2.5,
            mode: TaskMode::Classification,
            seed: 7,
            signature_seed: 0,
            n_segments: 6,
            segment_len: 5.0,
            frame_rate: 64.0 / 30.0,
            n_distractors: 0,
            query_pad_tokens: 2,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_videos < 1 {
            return Err(Error::config("n_videos must be >= 1"));
        }
        if self.frames < 2 || self.d_v < 1 {
            return Err(Error::config("frames must be >= 2 and d_v >= 1"));
        }
        if self.n_patterns < 2 {
            return Err(Error::config("n_patterns must be >= 2"));
        }
        if self.n_patterns > self.d_v {
            return Err(Error::config(format!(
                "{} orthogonal patterns cannot fit in {} channels",
                self.n_patterns, self.d_v
            )));
        }
        if !(self.pattern_amplitude >= 0.0) || !(self.noise_std >= 0.0) {
            return Err(Error::config("amplitude and noise_std must be non-negative"));
        }
        if self.n_segments < 1 || self.segment_len <= 0.0 {
            return Err(Error::config("segment geometry must be positive"));
        }
        if !(self.frame_rate > 0.0) {
            return Err(Error::config("frame_rate must be positive"));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        match self.mode {
            TaskMode::Classification => self.n_segments as f64 * self.segment_len,
            TaskMode::Detection => self.frames as f64 / self.frame_rate,
        }
    }

    pub fn effective_frame_rate(&self) -> f64 {
        match self.mode {
            TaskMode::Classification => self.frames as f64 / self.duration(),
            TaskMode::Detection => self.frame_rate,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.n_patterns + FILLER_TOKENS
    }
}

/// One generated video with its annotation.
pub struct SyntheticVideo {
    pub video_id: String,
    pub features: FeatureSequence,
    pub annotation: VideoAnnotation,
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Orthonormal signature vectors via Gram-Schmidt on seeded Gaussians.
pub fn pattern_signatures(n_patterns: usize, d_v: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    assert!(n_patterns <= d_v);
    let mut sigs: Vec<Vec<f64>> = Vec::with_capacity(n_patterns);
    while sigs.len() < n_patterns {
        let mut v: Vec<f64> = (0..d_v).map(|_| gaussian(rng)).collect();
        for s in &sigs {
            let dot: f64 = v.iter().zip(s).map(|(a, b)| a * b).sum();
            for (vi, si) in v.iter_mut().zip(s) {
                *vi -= dot * si;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        sigs.push(v);
    }
    sigs
}

fn plant(features: &mut [f64], d_v: usize, fr: f64, w: &ClipWindow, sig: &[f64], amp: f64, m: usize) {
    for j in 0..m {
        let center = (j as f64 + 0.5) / fr;
        if center >= w.start && center < w.end {
            for (c, s) in sig.iter().enumerate() {
                features[j * d_v + c] += amp * s;
            }
        }
    }
}

fn disjoint_window(
    rng: &mut ChaCha8Rng,
    gt: &ClipWindow,
    candidates: &mut dyn FnMut(&mut ChaCha8Rng) -> ClipWindow,
) -> Option<ClipWindow> {
    for _ in 0..64 {
        let w = candidates(rng);
        if iou(&w, gt) == 0.0 {
            return Some(w);
        }
    }
    None
}

/// Generate every video of the dataset, in order, deterministically from the
/// seed.
pub fn generate_videos(spec: &SyntheticSpec) -> Result<Vec<SyntheticVideo>> {
    spec.validate()?;
    let mut sig_rng = ChaCha8Rng::seed_from_u64(spec.signature_seed);
    let sigs = pattern_signatures(spec.n_patterns, spec.d_v, &mut sig_rng);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let enumeration = SegmentEnumeration::new(spec.n_segments, spec.segment_len)?;
    let duration = spec.duration();
    let fr = spec.effective_frame_rate();
    let (m, d_v) = (spec.frames, spec.d_v);

    let mut out = Vec::with_capacity(spec.n_videos);
    for vi in 0..spec.n_videos {
        let mut values: Vec<f64> = (0..m * d_v)
            .map(|_| spec.noise_std * gaussian(&mut rng))
            .collect();
        let pattern = rng.gen_range(0..spec.n_patterns);
        let (window, segment_index) = match spec.mode {
            TaskMode::Classification => {
                let idx = rng.gen_range(0..enumeration.len());
                (enumeration.window(idx), Some(idx))
            }
            TaskMode::Detection => {
                let len = rng.gen_range(duration / 8.0..duration / 2.0);
                let start = rng.gen_range(0.0..duration - len);
                (ClipWindow::new(start, start + len)?, None)
            }
        };
        plant(&mut values, d_v, fr, &window, &sigs[pattern], spec.pattern_amplitude, m);

        // Distractors: other patterns in windows disjoint from the truth.
        let mut used = vec![pattern];
        for _ in 0..spec.n_distractors {
            if used.len() >= spec.n_patterns {
                break;
            }
            let q = loop {
                let q = rng.gen_range(0..spec.n_patterns);
                if !used.contains(&q) {
                    break q;
                }
            };
            used.push(q);
            let mut sample: Box<dyn FnMut(&mut ChaCha8Rng) -> ClipWindow> = match spec.mode {
                TaskMode::Classification => {
                    let e = enumeration.clone();
                    Box::new(move |rng| e.window(rng.gen_range(0..e.len())))
                }
                TaskMode::Detection => Box::new(move |rng| {
                    let len = rng.gen_range(duration / 8.0..duration / 2.0);
                    let start = rng.gen_range(0.0..duration - len);
                    ClipWindow {
                        start,
                        end: start + len,
                    }
                }),
            };
            if let Some(w) = disjoint_window(&mut rng, &window, &mut sample) {
                plant(&mut values, d_v, fr, &w, &sigs[q], spec.pattern_amplitude, m);
            }
        }

        let mut tokens = vec![Token::Id(pattern)];
        for _ in 0..spec.query_pad_tokens {
            tokens.push(Token::Id(spec.n_patterns + rng.gen_range(0..FILLER_TOKENS)));
        }

        let video_id = format!("video_{vi:06}");
        let features = FeatureSequence::new(Tensor::new(vec![m, d_v], values)?, duration, fr)?;
        let annotation = VideoAnnotation {
            video_id: video_id.clone(),
            duration,
            descriptions: vec![DescriptionRecord {
                tokens,
                clips: vec![[window.start, window.end]],
                segment_index,
                class_id: Some(pattern),
            }],
        };
        out.push(SyntheticVideo {
            video_id,
            features,
            annotation,
        });
    }
    Ok(out)
}

/// Generate and write a dataset directory: features/, annotations.json and a
/// manifest with content hashes.
pub fn generate_synthetic(spec: &SyntheticSpec, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir.join("features"))?;
    let videos = generate_videos(spec)?;

    let mut files = BTreeMap::new();
    let mut annotations = AnnotationSet {
        vocab_size: Some(spec.vocab_size()),
        videos: Vec::with_capacity(videos.len()),
    };
    for v in &videos {
        let rel = format!("features/{}.feat", v.video_id);
        let path = out_dir.join(&rel);
        write_features(&path, &v.features)?;
        files.insert(rel, sha256_hex(&std::fs::read(&path)?));
        annotations.videos.push(v.annotation.clone());
    }
    let ann_path = out_dir.join("annotations.json");
    annotations.save(&ann_path)?;
    files.insert(
        "annotations.json".to_string(),
        sha256_hex(&std::fs::read(&ann_path)?),
    );

    let manifest = Manifest {
        seed: spec.seed,
        mode: spec.mode.to_string(),
        n_videos: spec.n_videos,
        vocab_size: spec.vocab_size(),
        generator: serde_json::to_value(spec)?,
        files,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    manifest.save(out_dir.join("manifest.json"))?;
    Ok(manifest)
}
