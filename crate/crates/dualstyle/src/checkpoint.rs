//! Binary parameter container.
//!
//! Layout (little endian): magic `DSCKPT01`, `u32` metadata length, metadata
//! JSON, `u32` tensor count, then per tensor `u32` name length, name,
//! `u64` rows, `u64` cols and the row-major `f64` values.

use std::fs;
use std::path::Path;

use dualstyle_core::classifier::{Classifier, ClassifierConfig};
use dualstyle_core::corpus::{Direction, Vocabulary};
use dualstyle_core::numerics::{Array, ParamSet};
use dualstyle_core::seq2seq::{Seq2Seq, Seq2SeqConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, IoContext, Result};
use crate::io::write_atomic;

const MAGIC: &[u8; 8] = b"DSCKPT01";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// `f`, `g`, `cls`, or an optimizer tag such as `adam.f`.
    pub tag: String,
    pub vocab_hash: String,
    pub vocab_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub extra: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).at(path)?))
}

/// Hash of the id-ordered token list.
pub fn vocab_hash(vocab: &Vocabulary) -> String {
    sha256_hex(vocab.tokens().join("\n").as_bytes())
}

pub fn encode(meta: &CheckpointMeta, params: &ParamSet) -> Result<Vec<u8>> {
    let meta = serde_json::to_vec(meta)?;
    let mut out = Vec::with_capacity(16 + meta.len() + params.num_scalars() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (_, name, v) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(v.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(v.cols() as u64).to_le_bytes());
        for x in v.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<(CheckpointMeta, ParamSet), String> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8) != Some(MAGIC.as_slice()) {
        return Err("not a dualstyle checkpoint".into());
    }
    let truncated = || "truncated checkpoint".to_string();
    let n = r.u32().ok_or_else(truncated)? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(n).ok_or_else(truncated)?).map_err(|e| e.to_string())?;
    let count = r.u32().ok_or_else(truncated)?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let n = r.u32().ok_or_else(truncated)? as usize;
        let name = std::str::from_utf8(r.take(n).ok_or_else(truncated)?).map_err(|e| e.to_string())?.to_string();
        let rows = r.u64().ok_or_else(truncated)? as usize;
        let cols = r.u64().ok_or_else(truncated)? as usize;
        let len = rows.checked_mul(cols).ok_or_else(truncated)?;
        let raw = r.take(len.checked_mul(8).ok_or_else(truncated)?).ok_or_else(truncated)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        params.add(&name, Array::from_vec(rows, cols, data).map_err(|e| e.to_string())?);
    }
    if r.pos != bytes.len() {
        return Err("trailing bytes after checkpoint".into());
    }
    Ok((meta, params))
}

pub fn save(path: &Path, meta: &CheckpointMeta, params: &ParamSet) -> Result<()> {
    write_atomic(path, &encode(meta, params)?)
}

pub fn load(path: &Path) -> Result<(CheckpointMeta, ParamSet)> {
    let bytes = fs::read(path).at(path)?;
    decode(&bytes).map_err(|message| Error::Checkpoint {
        path: path.to_path_buf(),
        message,
    })
}

fn check_meta(path: &Path, meta: &CheckpointMeta, tag: &str, vocab: &str) -> Result<()> {
    let bad = |message: String| {
        Err(Error::Checkpoint {
            path: path.to_path_buf(),
            message,
        })
    };
    if meta.tag != tag {
        return bad(format!("expected tag {tag}, found {}", meta.tag));
    }
    if meta.vocab_hash != vocab {
        return bad("vocabulary hash does not match this run".into());
    }
    Ok(())
}

pub fn model_tag(d: Direction) -> &'static str {
    d.tag()
}

pub fn save_model(path: &Path, model: &Seq2Seq, vocab_hash: &str) -> Result<()> {
    let meta = CheckpointMeta {
        tag: model_tag(model.direction).into(),
        vocab_hash: vocab_hash.into(),
        vocab_size: model.config.vocab_size,
        embed_dim: Some(model.config.embed_dim),
        hidden_dim: Some(model.config.hidden_dim),
        extra: serde_json::to_value(model.config)?,
    };
    save(path, &meta, &model.params)
}

pub fn load_model(path: &Path, direction: Direction, vocab_hash: &str) -> Result<Seq2Seq> {
    let (meta, params) = load(path)?;
    check_meta(path, &meta, model_tag(direction), vocab_hash)?;
    let config: Seq2SeqConfig = serde_json::from_value(meta.extra)?;
    Ok(Seq2Seq::from_params(config, direction, params)?)
}

pub fn save_classifier(path: &Path, clf: &Classifier, vocab_hash: &str) -> Result<()> {
    let meta = CheckpointMeta {
        tag: "cls".into(),
        vocab_hash: vocab_hash.into(),
        vocab_size: clf.config.vocab_size,
        embed_dim: Some(clf.config.embed_dim),
        hidden_dim: None,
        extra: serde_json::to_value(&clf.config)?,
    };
    save(path, &meta, &clf.params)
}

/// Loads a classifier; it comes back frozen.
pub fn load_classifier(path: &Path, vocab_hash: &str) -> Result<Classifier> {
    let (meta, params) = load(path)?;
    check_meta(path, &meta, "cls", vocab_hash)?;
    let config: ClassifierConfig = serde_json::from_value(meta.extra)?;
    Ok(Classifier::from_params(config, params, true)?)
}
