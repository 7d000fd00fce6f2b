//! Loading a dataset directory (features + annotations + manifest) into
//! memory.

use super::annotations::{sha256_hex, AnnotationSet, Manifest, Token};
use super::features::{read_features, FeatureSequence};
use crate::error::{Error, Result};
use std::path::{Path, PathBuf};

pub struct LoadedDataset {
    pub root: PathBuf,
    pub annotations: AnnotationSet,
    /// One entry per annotated video, index-aligned with
    /// `annotations.videos`.
    pub features: Vec<FeatureSequence>,
    pub manifest: Option<Manifest>,
}

impl LoadedDataset {
    /// Read every annotated video's features. When a manifest is present its
    /// content hashes are verified.
    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let annotations = AnnotationSet::load(root.join("annotations.json"))?;
        let manifest_path = root.join("manifest.json");
        let manifest = manifest_path
            .exists()
            .then(|| Manifest::load(&manifest_path))
            .transpose()?;
        if let Some(m) = &manifest {
            for (rel, digest) in &m.files {
                let bytes = std::fs::read(root.join(rel)).map_err(|e| {
                    Error::format(format!("manifest file {rel} unreadable: {e}"))
                })?;
                let actual = sha256_hex(&bytes);
                if actual != *digest {
                    return Err(Error::format(format!(
                        "manifest hash mismatch for {rel}: expected {digest}, got {actual}"
                    )));
                }
            }
        }
        let mut features = Vec::with_capacity(annotations.videos.len());
        for v in &annotations.videos {
            let path = root.join("features").join(format!("{}.feat", v.video_id));
            let seq = read_features(&path)?;
            if (seq.duration - v.duration).abs() > 1e-6 {
                return Err(Error::format(format!(
                    "video {}: feature duration {} disagrees with annotation {}",
                    v.video_id, seq.duration, v.duration
                )));
            }
            features.push(seq);
        }
        Ok(LoadedDataset {
            root,
            annotations,
            features,
            manifest,
        })
    }

    pub fn len(&self) -> usize {
        self.annotations.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.annotations.videos.is_empty()
    }

    pub fn video_index(&self, video_id: &str) -> Option<usize> {
        self.annotations
            .videos
            .iter()
            .position(|v| v.video_id == video_id)
    }

    /// Resolve a description's tokens to embedding-row ids. Raw ids must fit
    /// the declared vocabulary; words require a vocabulary lookup function.
    pub fn resolve_tokens(
        &self,
        tokens: &[Token],
        lookup: Option<&dyn Fn(&str) -> usize>,
    ) -> Result<Vec<usize>> {
        let vocab_size = self.annotations.vocab_size;
        tokens
            .iter()
            .map(|t| match t {
                Token::Id(id) => {
                    if let Some(v) = vocab_size {
                        if *id >= v {
                            return Err(Error::format(format!(
                                "token id {id} exceeds declared vocabulary size {v}"
                            )));
                        }
                    }
                    Ok(*id)
                }
                Token::Word(w) => lookup
                    .map(|f| f(w))
                    .ok_or_else(|| {
                        Error::config(format!(
                            "dataset uses word tokens ({w:?}) but no embedding vocabulary was provided"
                        ))
                    }),
            })
            .collect()
    }
}
