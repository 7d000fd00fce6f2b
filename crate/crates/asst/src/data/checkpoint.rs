//! Checkpoint format: named f64 arrays with shapes plus a JSON metadata
//! block (model configuration, step counter, seed, optimizer state).

use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ASCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    /// Arbitrary JSON metadata; the model layer stores its configuration,
    /// step, seed and optimizer descriptor here.
    pub meta: serde_json::Value,
    pub arrays: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn array(&self, name: &str) -> Option<&NamedArray> {
        self.arrays.iter().find(|a| a.name == name)
    }
}

pub fn write_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let meta = serde_json::to_vec(&ckpt.meta)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    buf.extend_from_slice(&meta);
    buf.extend_from_slice(&(ckpt.arrays.len() as u32).to_le_bytes());
    for a in &ckpt.arrays {
        let name = a.name.as_bytes();
        if name.len() > u16::MAX as usize {
            return Err(Error::contract("parameter name too long"));
        }
        if a.shape.iter().product::<usize>() != a.values.len() {
            return Err(Error::contract(format!(
                "array {} shape/value mismatch",
                a.name
            )));
        }
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name);
        buf.push(a.shape.len() as u8);
        for d in &a.shape {
            buf.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in &a.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path.as_ref())?.read_to_end(&mut bytes)?;
    let mut at = 0usize;
    let need = |at: usize, n: usize, len: usize| -> Result<()> {
        if at + n > len {
            Err(Error::format("checkpoint truncated"))
        } else {
            Ok(())
        }
    };
    need(at, 12, bytes.len())?;
    if &bytes[0..4] != CHECKPOINT_MAGIC {
        return Err(Error::format("bad checkpoint magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(format!("unsupported checkpoint version {version}")));
    }
    let meta_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    at = 12;
    need(at, meta_len, bytes.len())?;
    let meta: serde_json::Value = serde_json::from_slice(&bytes[at..at + meta_len])?;
    at += meta_len;
    need(at, 4, bytes.len())?;
    let n_arrays = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    at += 4;
    let mut arrays = Vec::with_capacity(n_arrays);
    for _ in 0..n_arrays {
        need(at, 2, bytes.len())?;
        let name_len = u16::from_le_bytes(bytes[at..at + 2].try_into().unwrap()) as usize;
        at += 2;
        need(at, name_len + 1, bytes.len())?;
        let name = String::from_utf8(bytes[at..at + name_len].to_vec())
            .map_err(|_| Error::format("non-utf8 parameter name"))?;
        at += name_len;
        let ndim = bytes[at] as usize;
        at += 1;
        need(at, ndim * 4, bytes.len())?;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize);
            at += 4;
        }
        let numel: usize = shape.iter().product();
        need(at, numel * 8, bytes.len())?;
        let values: Vec<f64> = (0..numel)
            .map(|i| f64::from_le_bytes(bytes[at + i * 8..at + i * 8 + 8].try_into().unwrap()))
            .collect();
        at += numel * 8;
        arrays.push(NamedArray { name, shape, values });
    }
    if at != bytes.len() {
        return Err(Error::format("trailing bytes after checkpoint payload"));
    }
    Ok(Checkpoint { meta, arrays })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn round_trip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let ckpt = Checkpoint {
            meta: json!({"step": 42, "seed": 7}),
            arrays: vec![
                NamedArray {
                    name: "w".into(),
                    shape: vec![2, 3],
                    values: vec![0.1, -0.2, 1e-300, f64::MAX, 3.0, 4.0],
                },
                NamedArray {
                    name: "b".into(),
                    shape: vec![3],
                    values: vec![0.0, -0.0, 5.5],
                },
            ],
        };
        write_checkpoint(&path, &ckpt).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back.meta["step"], 42);
        for (a, b) in ckpt.arrays.iter().zip(&back.arrays) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.shape, b.shape);
            let bits_a: Vec<u64> = a.values.iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.values.iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn corrupt_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(read_checkpoint(&path).is_err());
    }
}
