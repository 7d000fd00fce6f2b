//! Annotation, prediction and manifest file schemas (JSON on disk).

use crate::clip::ClipWindow;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// A query token: either a raw embedding-row id (synthetic datasets) or a
/// word resolved through a vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Token {
    Id(usize),
    Word(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DescriptionRecord {
    pub tokens: Vec<Token>,
    /// Ground-truth windows in seconds.
    pub clips: Vec<[f64; 2]>,
    /// Classification mode: index into the segment enumeration.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segment_index: Option<usize>,
    /// Detection mode with classes: foreground class of the clips.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_id: Option<usize>,
}

impl DescriptionRecord {
    pub fn clip_windows(&self) -> Result<Vec<ClipWindow>> {
        self.clips
            .iter()
            .map(|c| ClipWindow::new(c[0], c[1]))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VideoAnnotation {
    pub video_id: String,
    pub duration: f64,
    pub descriptions: Vec<DescriptionRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationSet {
    /// Embedding-row count for datasets that use raw token ids.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocab_size: Option<usize>,
    pub videos: Vec<VideoAnnotation>,
}

impl AnnotationSet {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let set: AnnotationSet = serde_json::from_str(&text)?;
        set.validate()?;
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for v in &self.videos {
            if !(v.duration > 0.0) {
                return Err(Error::format(format!(
                    "video {}: non-positive duration",
                    v.video_id
                )));
            }
            for (di, d) in v.descriptions.iter().enumerate() {
                for c in &d.clips {
                    if !(c[0] >= -1e-9 && c[0] < c[1] && c[1] <= v.duration + 1e-9) {
                        return Err(Error::format(format!(
                            "video {} description {di}: clip [{}, {}] outside [0, {}]",
                            v.video_id, c[0], c[1], v.duration
                        )));
                    }
                }
                if d.tokens.is_empty() {
                    return Err(Error::format(format!(
                        "video {} description {di}: empty token list",
                        v.video_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn find_video(&self, video_id: &str) -> Option<&VideoAnnotation> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }

    /// Every (video index, description index) pair.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (vi, v) in self.videos.iter().enumerate() {
            for di in 0..v.descriptions.len() {
                out.push((vi, di));
            }
        }
        out
    }
}

/// Dataset manifest: generation parameters plus content hashes of every file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub mode: String,
    pub n_videos: usize,
    pub vocab_size: usize,
    pub generator: serde_json::Value,
    /// Relative path -> sha256 hex digest.
    pub files: BTreeMap<String, String>,
    pub tool_version: String,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_accept_ids_and_words() {
        let json = r#"{
            "videos": [{
                "video_id": "v0", "duration": 30.0,
                "descriptions": [
                    {"tokens": [3, 9], "clips": [[5.0, 10.0]], "segment_index": 7},
                    {"tokens": ["a", "dog"], "clips": [[0.0, 30.0]]}
                ]
            }]
        }"#;
        let set: AnnotationSet = serde_json::from_str(json).unwrap();
        set.validate().unwrap();
        assert_eq!(set.videos[0].descriptions[0].tokens[0], Token::Id(3));
        assert_eq!(
            set.videos[0].descriptions[1].tokens[1],
            Token::Word("dog".into())
        );
        assert_eq!(set.pairs().len(), 2);
    }

    #[test]
    fn clip_outside_duration_rejected() {
        let set = AnnotationSet {
            vocab_size: None,
            videos: vec![VideoAnnotation {
                video_id: "v".into(),
                duration: 10.0,
                descriptions: vec![DescriptionRecord {
                    tokens: vec![Token::Id(0)],
                    clips: vec![[5.0, 12.0]],
                    segment_index: None,
                    class_id: None,
                }],
            }],
        };
        assert!(set.validate().is_err());
    }
}
