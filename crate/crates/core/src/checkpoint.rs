//! Single-file model container.
//!
//! Layout: the 8-byte magic `AMRGENCK`, a little-endian `u32` format
//! version, a `u64` header length, the JSON header (configs, vocabularies,
//! parameter names and shapes), every parameter value as little-endian
//! `f64` in header order, and a SHA-256 digest of all preceding bytes.

use std::path::Path;

use amrgen_autodiff::Tensor;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ModelConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::model::{Model, Vocabs};
use crate::vocab::Vocab;

pub const MAGIC: &[u8; 8] = b"AMRGENCK";
pub const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    rows: usize,
    cols: usize,
    frozen: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    train: TrainConfig,
    words: Vec<String>,
    labels: Vec<String>,
    chars: Vec<String>,
    params: Vec<ParamEntry>,
}

/// A model together with the training settings it was produced with.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub train: TrainConfig,
}

fn specials_stripped(v: &Vocab) -> Vec<String> {
    v.tokens()[4..].to_vec()
}

pub fn to_bytes(model: &Model, train: &TrainConfig) -> Result<Vec<u8>> {
    let header = Header {
        model: model.net.config.clone(),
        train: train.clone(),
        words: specials_stripped(&model.net.vocabs.words),
        labels: specials_stripped(&model.net.vocabs.labels),
        chars: specials_stripped(&model.net.vocabs.chars),
        params: model
            .store
            .iter()
            .map(|(_, p)| ParamEntry {
                name: p.name.clone(),
                rows: p.value.rows(),
                cols: p.value.cols(),
                frozen: p.frozen,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, p) in model.store.iter() {
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() + 12 + DIGEST_LEN || &bytes[..8] != MAGIC {
        return Err(corrupt("not a checkpoint file"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt("checksum mismatch"));
    }
    let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}, expected {VERSION}")));
    }
    let hlen = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")) as usize;
    let json = body.get(20..20 + hlen).ok_or_else(|| corrupt("truncated header"))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| corrupt(format!("header: {e}")))?;
    let mut payload = &body[20 + hlen..];

    let vocabs = Vocabs {
        words: Vocab::from_tokens(header.words),
        labels: Vocab::from_tokens(header.labels),
        chars: Vocab::from_tokens(header.chars),
    };
    let mut model = Model::new(header.model, vocabs, None, 0)?;
    if model.store.len() != header.params.len() {
        return Err(corrupt(format!(
            "{} parameters stored, model has {}",
            header.params.len(),
            model.store.len()
        )));
    }
    let mut values = Vec::with_capacity(header.params.len());
    for entry in &header.params {
        let id = model
            .store
            .id(&entry.name)
            .map_err(|_| corrupt(format!("unknown parameter {}", entry.name)))?;
        let want = model.store.value(id).shape();
        if want != (entry.rows, entry.cols) {
            return Err(corrupt(format!(
                "shape mismatch for {}: stored {:?}, model {:?}",
                entry.name,
                (entry.rows, entry.cols),
                want
            )));
        }
        let n = entry.rows * entry.cols * 8;
        if payload.len() < n {
            return Err(corrupt("truncated parameter data"));
        }
        let data = payload[..n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        payload = &payload[n..];
        values.push((id, entry.frozen, Tensor::from_vec(entry.rows, entry.cols, data)?));
    }
    if !payload.is_empty() {
        return Err(corrupt("trailing bytes after parameter data"));
    }
    for (id, frozen, value) in values {
        let p = model.store.get_mut(id);
        p.value = value;
        p.frozen = frozen;
    }
    Ok(Checkpoint {
        model,
        train: header.train,
    })
}

pub fn save(path: impl AsRef<Path>, model: &Model, train: &TrainConfig) -> Result<()> {
    let bytes = to_bytes(model, train)?;
    std::fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    from_bytes(&bytes)
}
