//! Binary on-disk format for per-video feature sequences.
//!
//! Layout: magic "ASST" (4 bytes), version u32, m u32, d_v u32,
//! frame_rate f64, duration f64, then m·d_v little-endian f64 values in
//! row-major order. Values stay f64 so gradient-check fixtures survive a
//! round trip bit-exactly.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::io::{Read, Write};
use std::path::Path;

pub const FEATURE_MAGIC: &[u8; 4] = b"ASST";
pub const FEATURE_VERSION: u32 = 1;

/// Per-video input: m frames × d_v channels plus its clock.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub features: Tensor,
    pub duration: f64,
    pub frame_rate: f64,
}

impl FeatureSequence {
    pub fn new(features: Tensor, duration: f64, frame_rate: f64) -> Result<Self> {
        if features.shape().len() != 2 || features.shape()[0] == 0 {
            return Err(Error::contract(
                "feature sequence must be [m×d_v] with m >= 1",
            ));
        }
        if !(duration > 0.0) || !(frame_rate > 0.0) {
            return Err(Error::contract("duration and frame rate must be positive"));
        }
        let m = features.shape()[0] as f64;
        if (m - duration * frame_rate).abs() > 1.0 + 1e-9 {
            return Err(Error::contract(format!(
                "frame count {m} inconsistent with duration {duration} s at {frame_rate} fps"
            )));
        }
        Ok(FeatureSequence {
            features,
            duration,
            frame_rate,
        })
    }

    pub fn frames(&self) -> usize {
        self.features.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.features.shape()[1]
    }
}

pub fn write_features(path: impl AsRef<Path>, seq: &FeatureSequence) -> Result<()> {
    let mut buf = Vec::with_capacity(32 + seq.features.numel() * 8);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(seq.frames() as u32).to_le_bytes());
    buf.extend_from_slice(&(seq.channels() as u32).to_le_bytes());
    buf.extend_from_slice(&seq.frame_rate.to_le_bytes());
    buf.extend_from_slice(&seq.duration.to_le_bytes());
    for v in seq.features.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_features(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_features(bytes: &[u8]) -> Result<FeatureSequence> {
    if bytes.len() < 32 {
        return Err(Error::format(format!(
            "header truncated: expected at least 32 bytes, got {}",
            bytes.len()
        )));
    }
    if &bytes[0..4] != FEATURE_MAGIC {
        return Err(Error::format(format!(
            "bad magic {:?}, expected {:?}",
            &bytes[0..4],
            FEATURE_MAGIC
        )));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != FEATURE_VERSION {
        return Err(Error::format(format!(
            "unsupported version {version}, expected {FEATURE_VERSION}"
        )));
    }
    let m = u32_at(8) as usize;
    let d_v = u32_at(12) as usize;
    if m == 0 || d_v == 0 {
        return Err(Error::format("m and d_v must be >= 1"));
    }
    let frame_rate = f64_at(16);
    let duration = f64_at(24);
    let expected = 32 + m * d_v * 8;
    if bytes.len() != expected {
        return Err(Error::format(format!(
            "payload truncated: expected {expected} bytes total, got {}",
            bytes.len()
        )));
    }
    let values: Vec<f64> = (0..m * d_v).map(|i| f64_at(32 + i * 8)).collect();
    FeatureSequence::new(Tensor::new(vec![m, d_v], values)?, duration, frame_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_value_round_trip_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.feat");
        let seq = FeatureSequence::new(
            Tensor::new(vec![1, 1], vec![3.14]).unwrap(),
            0.5,
            2.0,
        )
        .unwrap();
        write_features(&path, &seq).unwrap();
        assert_eq!(read_features(&path).unwrap(), seq);
    }

    #[test]
    fn random_files_round_trip_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let dir = tempfile::tempdir().unwrap();
        for i in 0..100 {
            let m = rng.gen_range(1..30);
            let d = rng.gen_range(1..10);
            let vals: Vec<f64> = (0..m * d).map(|_| rng.gen_range(-1e6..1e6)).collect();
            let fr = rng.gen_range(0.5..30.0);
            let seq = FeatureSequence::new(
                Tensor::new(vec![m, d], vals).unwrap(),
                m as f64 / fr,
                fr,
            )
            .unwrap();
            let path = dir.path().join(format!("f{i}.feat"));
            write_features(&path, &seq).unwrap();
            let back = read_features(&path).unwrap();
            assert_eq!(back.features.values(), seq.features.values());
            assert_eq!(back.duration.to_bits(), seq.duration.to_bits());
            assert_eq!(back.frame_rate.to_bits(), seq.frame_rate.to_bits());
        }
    }

    #[test]
    fn corrupted_magic_rejected() {
        let seq = FeatureSequence::new(Tensor::new(vec![1, 1], vec![1.0]).unwrap(), 1.0, 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.feat");
        write_features(&path, &seq).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[3] = b'X';
        assert!(matches!(parse_features(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_payload_reports_byte_counts() {
        let seq = FeatureSequence::new(
            Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            1.0,
            2.0,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.feat");
        write_features(&path, &seq).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let err = parse_features(&bytes[..bytes.len() - 8]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("expected 64") && msg.contains("got 56"), "{msg}");
    }

    #[test]
    fn zero_frames_rejected() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(FEATURE_MAGIC);
        bytes.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        bytes.extend_from_slice(&0u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1.0f64.to_le_bytes());
        bytes.extend_from_slice(&1.0f64.to_le_bytes());
        assert!(matches!(parse_features(&bytes), Err(Error::Format(_))));
    }
}
