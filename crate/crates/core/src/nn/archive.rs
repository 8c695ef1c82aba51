//! Bit-exact weight archive.
//!
//! Layout: the magic `FGW1`, a little-endian `u32` descriptor length, the
//! UTF-8 descriptor, then every entry's values as little-endian `f32` in
//! descriptor order. The descriptor is line oriented:
//!
//! ```text
//! kind generator
//! raw/stage0/conv/weight f32 64x3x3x3
//! raw/stage0/conv/bias f32 1x64x1x1
//! ```

use std::path::Path;

use thiserror::Error;

use crate::tensor::{Real, Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"FGW1";

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("not a weight archive (bad magic bytes)")]
    BadMagic,
    #[error("corrupt archive header: {0}")]
    CorruptHeader(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("archive has {0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("archive holds a {found} but a {expected} was requested")]
    WrongKind { expected: String, found: String },
    #[error("archive is missing entry `{0}`")]
    MissingEntry(String),
    #[error("entry `{name}` has shape {found:?}, architecture expects {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightArchive {
    pub kind: String,
    pub entries: Vec<Entry>,
}

impl WeightArchive {
    pub fn new(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            entries: Vec::new(),
        }
    }

    pub fn push<T: Real>(&mut self, name: &str, t: &Tensor<T>) {
        self.entries.push(Entry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|v| v.as_f64() as f32).collect(),
        });
    }

    pub fn push_vec<T: Real>(&mut self, name: &str, v: &[T]) {
        self.entries.push(Entry {
            name: name.to_string(),
            shape: vec![v.len()],
            data: v.iter().map(|x| x.as_f64() as f32).collect(),
        });
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Total number of stored scalars.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.data.len()).sum()
    }

    pub(crate) fn expect_kind(&self, kind: &str) -> Result<(), ArchiveError> {
        if self.kind != kind {
            return Err(ArchiveError::WrongKind {
                expected: kind.to_string(),
                found: self.kind.clone(),
            });
        }
        Ok(())
    }

    fn entry(&self, name: &str, expected: &[usize]) -> Result<&Entry, ArchiveError> {
        let e = self
            .get(name)
            .ok_or_else(|| ArchiveError::MissingEntry(name.to_string()))?;
        if e.shape != expected {
            return Err(ArchiveError::ShapeMismatch {
                name: name.to_string(),
                expected: expected.to_vec(),
                found: e.shape.clone(),
            });
        }
        Ok(e)
    }

    pub fn tensor<T: Real>(&self, name: &str, shape: Shape) -> Result<Tensor<T>, ArchiveError> {
        let e = self.entry(name, &shape)?;
        let data = e.data.iter().map(|&v| T::of(v as f64)).collect();
        Ok(Tensor::new(shape, data).expect("shape checked"))
    }

    pub fn vector<T: Real>(&self, name: &str, len: usize) -> Result<Vec<T>, ArchiveError> {
        let e = self.entry(name, &[len])?;
        Ok(e.data.iter().map(|&v| T::of(v as f64)).collect())
    }

    fn descriptor(&self) -> String {
        let mut s = format!("kind {}\n", self.kind);
        for e in &self.entries {
            let dims: Vec<String> = e.shape.iter().map(|d| d.to_string()).collect();
            s.push_str(&format!("{} f32 {}\n", e.name, dims.join("x")));
        }
        s
    }

    /// Bytes before the first payload value.
    pub fn header_len(&self) -> usize {
        8 + self.descriptor().len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let desc = self.descriptor();
        let mut out = Vec::with_capacity(8 + desc.len() + 4 * self.scalar_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(desc.len() as u32).to_le_bytes());
        out.extend_from_slice(desc.as_bytes());
        for e in &self.entries {
            for v in &e.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ArchiveError> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(ArchiveError::BadMagic);
        }
        if bytes.len() < 8 {
            return Err(ArchiveError::CorruptHeader("missing descriptor length".into()));
        }
        let len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let desc = bytes
            .get(8..8 + len)
            .ok_or_else(|| ArchiveError::CorruptHeader(format!("descriptor length {len} exceeds file")))?;
        let desc = std::str::from_utf8(desc)
            .map_err(|_| ArchiveError::CorruptHeader("descriptor is not UTF-8".into()))?;
        let mut lines = desc.lines();
        let kind = lines
            .next()
            .and_then(|l| l.strip_prefix("kind "))
            .ok_or_else(|| ArchiveError::CorruptHeader("missing kind line".into()))?
            .to_string();
        let mut specs = Vec::new();
        for line in lines {
            let mut parts = line.split(' ');
            let (Some(name), Some(dtype), Some(dims), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(ArchiveError::CorruptHeader(format!("bad entry line `{line}`")));
            };
            if dtype != "f32" {
                return Err(ArchiveError::CorruptHeader(format!("unsupported dtype `{dtype}`")));
            }
            let shape = dims
                .split('x')
                .map(|d| d.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| ArchiveError::CorruptHeader(format!("bad shape `{dims}`")))?;
            specs.push((name.to_string(), shape));
        }
        let expected: usize = specs.iter().map(|(_, s)| 4 * s.iter().product::<usize>()).sum();
        let payload = &bytes[8 + len..];
        if payload.len() < expected {
            return Err(ArchiveError::Truncated {
                expected,
                found: payload.len(),
            });
        }
        if payload.len() > expected {
            return Err(ArchiveError::TrailingBytes(payload.len() - expected));
        }
        let mut offset = 0;
        let entries = specs
            .into_iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let data = payload[offset..offset + 4 * n]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect();
                offset += 4 * n;
                Entry { name, shape, data }
            })
            .collect();
        Ok(Self { kind, entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ArchiveError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ArchiveError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
