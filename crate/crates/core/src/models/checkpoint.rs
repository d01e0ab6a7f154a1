//! Flat binary checkpoint: named, shape-tagged `f64` arrays plus a JSON
//! metadata block.
//!
//! ```text
//! magic "ICEGNNCK" | version u32 | meta_len u32 | meta JSON
//! count u32 | { name_len u32 | name | rows u32 | cols u32 | rows*cols f64 } ...
//! ```
//!
//! All integers and floats are little-endian. Normalization statistics are
//! stored as arrays under the `stats.` prefix.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ModelKind};
use crate::error::{Error, Result};
use crate::graph::{NormalizationStats, FEATURES};
use crate::nn::Module;
use crate::rng::seeded;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"ICEGNNCK";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Meta {
    kind: ModelKind,
    config: ModelConfig,
    #[serde(default)]
    extra: BTreeMap<String, String>,
}

/// A model with the statistics it was trained under.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub stats: NormalizationStats,
    /// Free-form provenance such as trial seed or split hash.
    pub extra: BTreeMap<String, String>,
}

fn stats_arrays(s: &NormalizationStats) -> Vec<(String, usize, usize, Vec<f64>)> {
    let d = s.target_mean.len();
    vec![
        (
            "stats.feature_mean".into(),
            1,
            FEATURES,
            s.feature_mean.to_vec(),
        ),
        (
            "stats.feature_std".into(),
            1,
            FEATURES,
            s.feature_std.to_vec(),
        ),
        ("stats.target_mean".into(), 1, d, s.target_mean.clone()),
        ("stats.target_std".into(), 1, d, s.target_std.clone()),
        (
            "stats.adjacency_range".into(),
            1,
            2,
            vec![s.adjacency_raw_min, s.adjacency_raw_max],
        ),
        ("stats.epsilon_offset".into(), 1, 1, vec![s.epsilon_offset]),
    ]
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>> {
    let meta = Meta {
        kind: ck.model.kind(),
        config: ck.model.config().clone(),
        extra: ck.extra.clone(),
    };
    let meta = serde_json::to_vec(&meta).map_err(|e| Error::invalid(e.to_string()))?;

    let mut arrays: Vec<(String, usize, usize, Vec<f64>)> = ck
        .model
        .parameters()
        .into_iter()
        .map(|p| {
            let (r, c) = p.shape();
            (p.name().to_string(), r, c, p.tensor().data().to_vec())
        })
        .collect();
    arrays.extend(stats_arrays(&ck.stats));

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for (name, r, c, data) in &arrays {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(*r as u32).to_le_bytes());
        out.extend_from_slice(&(*c as u32).to_le_bytes());
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Parse {
                offset: self.pos as u64,
                reason: format!("truncated {what}"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<Checkpoint> {
    let mut rd = Reader { buf, pos: 0 };
    if rd.take(8, "magic")? != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            reason: "not a checkpoint file".into(),
        });
    }
    let version = rd.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Parse {
            offset: 8,
            reason: format!("unsupported checkpoint version {version}"),
        });
    }
    let meta_len = rd.u32("metadata length")? as usize;
    let meta_at = rd.pos as u64;
    let meta: Meta =
        serde_json::from_slice(rd.take(meta_len, "metadata")?).map_err(|e| Error::Parse {
            offset: meta_at,
            reason: format!("metadata: {e}"),
        })?;

    let count = rd.u32("array count")?;
    let mut arrays = BTreeMap::new();
    for _ in 0..count {
        let at = rd.pos as u64;
        let len = rd.u32("name length")? as usize;
        let name = std::str::from_utf8(rd.take(len, "name")?)
            .map_err(|_| Error::Parse {
                offset: at,
                reason: "array name is not UTF-8".into(),
            })?
            .to_string();
        let r = rd.u32("rows")? as usize;
        let c = rd.u32("cols")? as usize;
        let bytes = rd.take(r * c * 8, "array data")?;
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if arrays.insert(name.clone(), ((r, c), data)).is_some() {
            return Err(Error::Parse {
                offset: at,
                reason: format!("duplicate array '{name}'"),
            });
        }
    }
    if rd.pos != buf.len() {
        return Err(Error::Parse {
            offset: rd.pos as u64,
            reason: "trailing bytes".into(),
        });
    }

    let mut take = |name: &str, shape: (usize, usize)| -> Result<Vec<f64>> {
        let (s, data) = arrays
            .remove(name)
            .ok_or_else(|| Error::Corruption(format!("checkpoint lacks '{name}'")))?;
        if s != shape {
            return Err(Error::Corruption(format!(
                "'{name}' has shape {s:?}, expected {shape:?}"
            )));
        }
        Ok(data)
    };

    let mut model = Model::new(meta.kind, meta.config.clone(), &mut seeded(0))?;
    for p in model.parameters_mut() {
        let data = take(p.name(), p.shape())?;
        p.assign(&data)?;
    }
    let d = meta.config.outputs;
    let fm = take("stats.feature_mean", (1, FEATURES))?;
    let fs = take("stats.feature_std", (1, FEATURES))?;
    let range = take("stats.adjacency_range", (1, 2))?;
    let stats = NormalizationStats {
        feature_mean: fm.try_into().unwrap(),
        feature_std: fs.try_into().unwrap(),
        target_mean: take("stats.target_mean", (1, d))?,
        target_std: take("stats.target_std", (1, d))?,
        adjacency_raw_min: range[0],
        adjacency_raw_max: range[1],
        epsilon_offset: take("stats.epsilon_offset", (1, 1))?[0],
    };
    if let Some(name) = arrays.keys().next() {
        return Err(Error::Corruption(format!("unexpected array '{name}'")));
    }
    Ok(Checkpoint {
        model,
        stats,
        extra: meta.extra,
    })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let bytes = encode_checkpoint(ck)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
