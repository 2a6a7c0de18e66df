//! Single-file model snapshots.
//!
//! ```text
//! "PBND"              4 bytes magic
//! version     u32     = 1
//! header_len  u32
//! header      header_len bytes of UTF-8 JSON (BundleHeader)
//! param_count u32
//! repeated param_count times:
//!   name_len  u32
//!   name      name_len bytes, UTF-8
//!   rank      u32
//!   dims      rank × u32
//!   values    product(dims) f32, row-major
//! ```
//! All integers and floats are little-endian; trailing bytes are rejected.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::encoder::ByteReader;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::tensor::Tensor;

pub const BUNDLE_MAGIC: &[u8; 4] = b"PBND";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleHeader {
    pub model: ModelConfig,
    pub vocab: Option<Vocabulary>,
    /// Validation fold this model was trained for; `None` for a model trained
    /// on the whole corpus.
    pub fold: Option<usize>,
    pub seed: u64,
    /// Whether the encoder weights were left untouched during training.
    pub freeze_encoder: bool,
}

/// A trained model with everything needed to rebuild it. Parameter values are
/// kept in single precision.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub header: BundleHeader,
    params: Vec<(String, Vec<usize>, Vec<f32>)>,
}

impl ModelBundle {
    pub fn from_model(model: &Model, fold: Option<usize>, seed: u64, freeze_encoder: bool) -> Self {
        let params = model
            .store
            .iter()
            .map(|p| {
                (
                    p.name.clone(),
                    p.value.shape().to_vec(),
                    p.value.data().iter().map(|&v| v as f32).collect(),
                )
            })
            .collect();
        ModelBundle {
            header: BundleHeader {
                model: model.config().clone(),
                vocab: model.vocab().cloned(),
                fold,
                seed,
                freeze_encoder,
            },
            params,
        }
    }

    /// Short identifier used in reports.
    pub fn id(&self) -> String {
        match self.header.fold {
            Some(f) => format!("fold{f}-seed{}", self.header.seed),
            None => format!("full-seed{}", self.header.seed),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn to_model(&self) -> Result<Model> {
        let mut model = Model::new(
            self.header.model.clone(),
            self.header.vocab.clone(),
            &mut ChaCha8Rng::seed_from_u64(0),
        )?;
        let values = self
            .params
            .iter()
            .map(|(name, shape, data)| {
                Tensor::new(shape.clone(), data.iter().map(|&v| f64::from(v)).collect()).map(|t| (name.clone(), t))
            })
            .collect::<Result<Vec<_>>>()?;
        model.load_values(&values)?;
        Ok(model)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::new();
        out.extend_from_slice(BUNDLE_MAGIC);
        put_u32(&mut out, BUNDLE_VERSION);
        put_u32(&mut out, header.len() as u32);
        out.extend_from_slice(&header);
        put_u32(&mut out, self.params.len() as u32);
        for (name, shape, data) in &self.params {
            put_u32(&mut out, name.len() as u32);
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, shape.len() as u32);
            for &d in shape {
                put_u32(&mut out, d as u32);
            }
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let magic = r.take(4)?;
        if magic != BUNDLE_MAGIC {
            return Err(Error::format(0, format!("bad magic {magic:?}, expected \"PBND\"")));
        }
        let version = r.u32()?;
        if version != BUNDLE_VERSION {
            return Err(Error::format(4, format!("unsupported bundle version {version}")));
        }
        let header_len = r.u32()? as usize;
        let header_at = r.offset();
        let header: BundleHeader = serde_json::from_slice(r.take(header_len)?)
            .map_err(|e| Error::format(header_at, format!("bad header: {e}")))?;
        let count = r.u32()?;
        let mut params = Vec::new();
        for _ in 0..count {
            let at = r.offset();
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::format(at + 4, "parameter name is not UTF-8"))?
                .to_owned();
            let rank_at = r.offset();
            let rank = r.u32()? as usize;
            if !(1..=3).contains(&rank) {
                return Err(Error::format(rank_at, format!("parameter {name} has rank {rank}")));
            }
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let numel = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
            let numel = numel
                .filter(|&n| n > 0)
                .ok_or_else(|| Error::format(rank_at, format!("parameter {name} has bad shape {shape:?}")))?;
            let values = r.f32s(numel, 1)?;
            params.push((name, shape, values));
        }
        if r.remaining() != 0 {
            return Err(Error::format(
                r.offset(),
                format!("{} trailing bytes after last parameter", r.remaining()),
            ));
        }
        Ok(ModelBundle { header, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}
