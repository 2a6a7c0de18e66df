//! SEMB1: little-endian container for per-author post-embedding matrices.
//!
//! ```text
//! "SEMB"            4 bytes magic
//! version   u32     = 1
//! d         u32     embedding width
//! count     u32     number of authors
//! repeated count times:
//!   id_len  u32
//!   id      id_len bytes, UTF-8
//!   n       u32     number of posts
//!   values  n*d f32, row-major
//! ```
//! Records are packed without padding; trailing bytes are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SEMB_MAGIC: &[u8; 4] = b"SEMB";
pub const SEMB_VERSION: u32 = 1;

/// One author's n×d matrix in single precision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    pub rows: usize,
    pub values: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct PrecomputedEmbeddingStore {
    dim: usize,
    matrices: BTreeMap<String, EmbeddingMatrix>,
}

impl PrecomputedEmbeddingStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding width must be positive".into()));
        }
        Ok(PrecomputedEmbeddingStore {
            dim,
            matrices: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.matrices.keys().map(String::as_str)
    }

    pub fn insert(&mut self, author_id: impl Into<String>, rows: usize, values: Vec<f32>) -> Result<()> {
        if rows == 0 || values.len() != rows * self.dim {
            return Err(Error::dim("embedding store insert", &[rows, self.dim], &[values.len()]));
        }
        self.matrices
            .insert(author_id.into(), EmbeddingMatrix { rows, values });
        Ok(())
    }

    /// Stores an n×d tensor, rounding to single precision.
    pub fn insert_tensor(&mut self, author_id: impl Into<String>, hp: &Tensor) -> Result<()> {
        let (rows, cols) = hp.dims2();
        if hp.rank() != 2 || cols != self.dim {
            return Err(Error::dim("embedding store insert", hp.shape(), &[self.dim]));
        }
        self.insert(author_id, rows, hp.data().iter().map(|&v| v as f32).collect())
    }

    pub fn matrix(&self, author_id: &str) -> Option<&EmbeddingMatrix> {
        self.matrices.get(author_id)
    }

    /// The stored matrix widened to f64, or a lookup error.
    pub fn get(&self, author_id: &str) -> Result<Tensor> {
        let m = self
            .matrices
            .get(author_id)
            .ok_or_else(|| Error::Lookup(format!("no embeddings stored for author {author_id}")))?;
        Tensor::new(
            vec![m.rows, self.dim],
            m.values.iter().map(|&v| f64::from(v)).collect(),
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(SEMB_MAGIC);
        out.extend_from_slice(&SEMB_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.matrices.len() as u32).to_le_bytes());
        for (id, m) in &self.matrices {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            out.extend_from_slice(&(m.rows as u32).to_le_bytes());
            for v in &m.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let magic = r.take(4)?;
        if magic != SEMB_MAGIC {
            return Err(Error::format(0, format!("bad magic {magic:?}, expected \"SEMB\"")));
        }
        let version = r.u32()?;
        if version != SEMB_VERSION {
            return Err(Error::format(4, format!("unsupported version {version}")));
        }
        let dim = r.u32()? as usize;
        if dim == 0 {
            return Err(Error::format(8, "embedding width is zero"));
        }
        let count = r.u32()?;
        let mut store = PrecomputedEmbeddingStore::new(dim)?;
        for _ in 0..count {
            let id_at = r.offset();
            let id_len = r.u32()? as usize;
            let id = std::str::from_utf8(r.take(id_len)?)
                .map_err(|_| Error::format(id_at + 4, "author id is not UTF-8"))?
                .to_owned();
            let rows_at = r.offset();
            let rows = r.u32()? as usize;
            if rows == 0 {
                return Err(Error::format(rows_at, format!("author {id} has zero rows")));
            }
            let values = r.f32s(rows, dim)?;
            if store.matrices.contains_key(&id) {
                return Err(Error::format(id_at, format!("duplicate author id {id}")));
            }
            store.matrices.insert(id, EmbeddingMatrix { rows, values });
        }
        if r.remaining() != 0 {
            return Err(Error::format(
                r.offset(),
                format!("{} trailing bytes after last record", r.remaining()),
            ));
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Bounds-checked little-endian cursor. Every failure reports the offset at
/// which the read was attempted.
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf, pos: 0 }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::format(
                self.offset(),
                format!("truncated: need {n} bytes, {} left", self.remaining()),
            ));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn f32s(&mut self, rows: usize, cols: usize) -> Result<Vec<f32>> {
        let at = self.offset();
        let bytes = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::format(at, "matrix size overflows"))?;
        let raw = self.take(bytes)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}
