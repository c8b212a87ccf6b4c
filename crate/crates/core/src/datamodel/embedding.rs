//! Labelled representation vectors and their binary container.
//!
//! Layout (little-endian): magic `PEMB`, version `u16`, `dim u32`,
//! `class_count u32`, then three splits each as `tag u8`, `count u64` and
//! `count` records of `label u32` followed by `dim` `f32` values, then a
//! `u64` length and that many bytes of JSON metadata.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PEMB";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitKind {
    Train,
    Dev,
    Test,
}

impl SplitKind {
    pub const ALL: [SplitKind; 3] = [SplitKind::Train, SplitKind::Dev, SplitKind::Test];

    pub fn tag(self) -> u8 {
        match self {
            SplitKind::Train => 0,
            SplitKind::Dev => 1,
            SplitKind::Test => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Dev => "dev",
            SplitKind::Test => "test",
        }
    }

    fn from_tag(tag: u8) -> Option<SplitKind> {
        SplitKind::ALL.into_iter().find(|s| s.tag() == tag)
    }
}

/// Vectors of one split, stored row-major.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub vectors: Vec<f32>,
    pub labels: Vec<u32>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn vector(&self, i: usize, dim: usize) -> &[f32] {
        &self.vectors[i * dim..(i + 1) * dim]
    }

    pub fn push(&mut self, vector: &[f32], label: u32) {
        self.vectors.extend_from_slice(vector);
        self.labels.push(label);
    }

    pub fn class_counts(&self, class_count: usize) -> Vec<usize> {
        let mut counts = vec![0; class_count];
        for &l in &self.labels {
            if let Some(c) = counts.get_mut(l as usize) {
                *c += 1;
            }
        }
        counts
    }

    /// Keeps the given rows, in the given order.
    pub fn subset(&self, rows: &[usize], dim: usize) -> Split {
        let mut out = Split::default();
        for &i in rows {
            out.push(self.vector(i, dim), self.labels[i]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingMetadata {
    pub probing_task: String,
    pub layer: u32,
    pub model_id: String,
    pub samples_per_class: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    pub dim: usize,
    pub class_count: usize,
    pub train: Split,
    pub dev: Split,
    pub test: Split,
    pub metadata: EmbeddingMetadata,
}

impl EmbeddingDataset {
    pub fn split(&self, kind: SplitKind) -> &Split {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Dev => &self.dev,
            SplitKind::Test => &self.test,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        if self.class_count < 2 {
            return Err(Error::DegenerateData(format!("{} classes", self.class_count)));
        }
        for kind in SplitKind::ALL {
            let s = self.split(kind);
            if s.vectors.len() != s.labels.len() * self.dim {
                return Err(Error::DimensionMismatch {
                    expected: s.labels.len() * self.dim,
                    actual: s.vectors.len(),
                });
            }
            if let Some(&l) = s.labels.iter().find(|&&l| l as usize >= self.class_count) {
                return Err(Error::InvalidArgument(format!(
                    "label {l} in {} split exceeds class count {}",
                    kind.name(),
                    self.class_count
                )));
            }
            if s.vectors.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("embedding vectors"));
            }
        }
        let counts = self.train.class_counts(self.class_count);
        if let Some(missing) = counts.iter().position(|&c| c == 0) {
            return Err(Error::DegenerateData(format!("class {missing} absent from train split")));
        }
        Ok(())
    }
}

pub fn write_embeddings<W: Write>(ds: &EmbeddingDataset, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(ds.dim as u32).to_le_bytes())?;
    w.write_all(&(ds.class_count as u32).to_le_bytes())?;
    for kind in SplitKind::ALL {
        let s = ds.split(kind);
        w.write_all(&[kind.tag()])?;
        w.write_all(&(s.len() as u64).to_le_bytes())?;
        for i in 0..s.len() {
            w.write_all(&s.labels[i].to_le_bytes())?;
            for v in s.vector(i, ds.dim) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    let meta = serde_json::to_vec(&ds.metadata).expect("serialisable");
    w.write_all(&(meta.len() as u64).to_le_bytes())?;
    w.write_all(&meta)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::malformed("<embedding>", format!("truncated at byte {}", self.pos))),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_embeddings<R: Read>(mut r: R) -> Result<EmbeddingDataset> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let bad = |msg: String| Error::malformed("<embedding>", msg);
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = c.u16()?;
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let dim = c.u32()? as usize;
    let class_count = c.u32()? as usize;
    let mut splits: [Option<Split>; 3] = [None, None, None];
    for _ in 0..3 {
        let tag = c.u8()?;
        let kind = SplitKind::from_tag(tag).ok_or_else(|| bad(format!("unknown split tag {tag}")))?;
        if splits[tag as usize].is_some() {
            return Err(bad(format!("split `{}` repeated", kind.name())));
        }
        let count = c.u64()? as usize;
        let record = 4 + 4 * dim;
        if count.checked_mul(record).is_none_or(|n| n > buf.len()) {
            return Err(bad(format!("split `{}` declares {count} records", kind.name())));
        }
        let mut split = Split {
            vectors: Vec::with_capacity(count * dim),
            labels: Vec::with_capacity(count),
        };
        for _ in 0..count {
            split.labels.push(c.u32()?);
            for chunk in c.take(4 * dim)?.chunks_exact(4) {
                split.vectors.push(f32::from_le_bytes(chunk.try_into().unwrap()));
            }
        }
        splits[tag as usize] = Some(split);
    }
    let meta_len = c.u64()? as usize;
    let metadata: EmbeddingMetadata =
        serde_json::from_slice(c.take(meta_len)?).map_err(|e| bad(format!("metadata: {e}")))?;
    if c.pos != buf.len() {
        return Err(bad("trailing bytes after metadata".into()));
    }
    let [train, dev, test] = splits.map(|s| s.expect("three distinct tags read"));
    let ds = EmbeddingDataset {
        dim,
        class_count,
        train,
        dev,
        test,
        metadata,
    };
    ds.validate()?;
    Ok(ds)
}
