//! Binary dataset container and its JSON manifest.
//!
//! ```text
//! magic "ICEGNNDS" | version u32 | count u64
//! { payload_len u64 | payload } * count
//! sha256 of every record byte (length prefixes included), 32 bytes
//! ```
//!
//! A payload is `id_len u32 | id | n_cols u32 | n_tops u32` followed by
//! `lat f64 | lon f64 | n_tops × top f64` per column, all little-endian.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::record::EchogramRecord;
use crate::error::{Error, Result};
use crate::graph::GeoPoint;

pub const CONTAINER_VERSION: u32 = 1;
pub const MANIFEST_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"ICEGNNDS";
const HEADER_LEN: usize = 8 + 4 + 8;
const HASH_LEN: usize = 32;

/// How layers are counted in `layer_count`.
pub const LAYER_CONVENTION: &str = "layer_count = thickness values per column = labeled tops - 1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accepted,
    Rejected,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub layer_count: Option<usize>,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Byte offset of the record's length prefix in the container.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<u64>,
    /// Length prefix plus payload.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<u64>,
}

impl ManifestEntry {
    pub fn rejected(id: &str, layer_count: Option<usize>, reason: impl Into<String>) -> Self {
        Self {
            id: id.to_string(),
            layer_count,
            verdict: Verdict::Rejected,
            reason: Some(reason.into()),
            offset: None,
            length: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub layer_convention: String,
    pub min_layers: Option<usize>,
    pub record_count: usize,
    /// Hex sha256 over every record byte in the container.
    pub content_hash: String,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Manifest describing `records` as they would be laid out by
    /// [`encode_dataset`], all accepted.
    pub fn for_records(records: &[EchogramRecord], min_layers: Option<usize>) -> Self {
        let enc = encode_dataset(records);
        let entries = records
            .iter()
            .zip(&enc.spans)
            .map(|(r, &(offset, length))| ManifestEntry {
                id: r.id().to_string(),
                layer_count: Some(r.layer_count()),
                verdict: Verdict::Accepted,
                reason: None,
                offset: Some(offset),
                length: Some(length),
            })
            .collect();
        Self {
            version: MANIFEST_VERSION,
            layer_convention: LAYER_CONVENTION.to_string(),
            min_layers,
            record_count: records.len(),
            content_hash: enc.content_hash,
            entries,
        }
    }

    pub fn accepted(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries
            .iter()
            .filter(|e| e.verdict == Verdict::Accepted)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Encoded container bytes plus per-record spans and the content hash.
#[derive(Clone, Debug)]
pub struct EncodedDataset {
    pub bytes: Vec<u8>,
    pub spans: Vec<(u64, u64)>,
    pub content_hash: String,
}

fn encode_record(r: &EchogramRecord, out: &mut Vec<u8>) {
    let n_tops = r.tops()[0].len();
    let mut payload = Vec::with_capacity(12 + r.id().len() + r.n_columns() * (16 + 8 * n_tops));
    payload.extend_from_slice(&(r.id().len() as u32).to_le_bytes());
    payload.extend_from_slice(r.id().as_bytes());
    payload.extend_from_slice(&(r.n_columns() as u32).to_le_bytes());
    payload.extend_from_slice(&(n_tops as u32).to_le_bytes());
    for (p, tops) in r.points().iter().zip(r.tops()) {
        payload.extend_from_slice(&p.lat().to_le_bytes());
        payload.extend_from_slice(&p.lon().to_le_bytes());
        for t in tops {
            payload.extend_from_slice(&t.to_le_bytes());
        }
    }
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
}

pub fn encode_dataset(records: &[EchogramRecord]) -> EncodedDataset {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(records.len() as u64).to_le_bytes());
    let mut spans = Vec::with_capacity(records.len());
    for r in records {
        let start = bytes.len();
        encode_record(r, &mut bytes);
        spans.push((start as u64, (bytes.len() - start) as u64));
    }
    let digest = Sha256::digest(&bytes[HEADER_LEN..]);
    bytes.extend_from_slice(&digest);
    EncodedDataset {
        bytes,
        spans,
        content_hash: hex::encode(digest),
    }
}

/// Hex sha256 of the record region of an encoded container (everything
/// between the header and the trailer). Does not validate the bytes.
pub fn record_region_hash(bytes: &[u8]) -> Option<String> {
    if bytes.len() < HEADER_LEN + HASH_LEN {
        return None;
    }
    Some(hex::encode(Sha256::digest(
        &bytes[HEADER_LEN..bytes.len() - HASH_LEN],
    )))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    end: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.end - self.pos < n {
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

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

fn decode_record(cur: &mut Cursor<'_>) -> Result<EchogramRecord> {
    let start = cur.pos;
    let id_len = cur.u32("id length")? as usize;
    let id = std::str::from_utf8(cur.take(id_len, "id")?)
        .map_err(|_| Error::Parse {
            offset: start as u64,
            reason: "record id is not UTF-8".into(),
        })?
        .to_string();
    let n_cols = cur.u32("column count")? as usize;
    let n_tops = cur.u32("top count")? as usize;
    n_cols
        .checked_mul(16 + 8 * n_tops)
        .filter(|&b| b <= cur.end - cur.pos)
        .ok_or_else(|| Error::Parse {
            offset: cur.pos as u64,
            reason: format!("record '{id}' declares more columns than the payload holds"),
        })?;
    let mut points = Vec::with_capacity(n_cols);
    let mut tops = Vec::with_capacity(n_cols);
    for _ in 0..n_cols {
        let at = cur.pos as u64;
        let lat = cur.f64("latitude")?;
        let lon = cur.f64("longitude")?;
        points.push(GeoPoint::new(lat, lon).map_err(|e| Error::Parse {
            offset: at,
            reason: e.to_string(),
        })?);
        let mut col = Vec::with_capacity(n_tops);
        for _ in 0..n_tops {
            col.push(cur.f64("layer top")?);
        }
        tops.push(col);
    }
    EchogramRecord::new(id, points, tops).map_err(|e| Error::Parse {
        offset: start as u64,
        reason: e.to_string(),
    })
}

/// Decodes a whole container. Nothing is returned unless every record parses
/// and the trailer hash matches.
pub fn decode_dataset(bytes: &[u8]) -> Result<Vec<EchogramRecord>> {
    let mut cur = Cursor {
        buf: bytes,
        pos: 0,
        end: bytes.len(),
    };
    if cur.take(8, "magic")? != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            reason: "not a dataset container".into(),
        });
    }
    let version = cur.u32("version")?;
    if version != CONTAINER_VERSION {
        return Err(Error::Parse {
            offset: 8,
            reason: format!("unsupported container version {version}"),
        });
    }
    let count = cur.u64("record count")?;
    if bytes.len() < HEADER_LEN + HASH_LEN {
        return Err(Error::Parse {
            offset: bytes.len() as u64,
            reason: "truncated hash trailer".into(),
        });
    }
    cur.end = bytes.len() - HASH_LEN;

    let mut records = Vec::new();
    for i in 0..count {
        let at = cur.pos;
        let len = cur.u64("record length")? as usize;
        if cur.end - cur.pos < len {
            return Err(Error::Parse {
                offset: at as u64,
                reason: format!("record {i} length {len} runs past the end of the data"),
            });
        }
        let mut rec = Cursor {
            buf: bytes,
            pos: cur.pos,
            end: cur.pos + len,
        };
        let r = decode_record(&mut rec)?;
        if rec.pos != rec.end {
            return Err(Error::Parse {
                offset: rec.pos as u64,
                reason: format!("record {i} has {} unread bytes", rec.end - rec.pos),
            });
        }
        cur.pos = rec.end;
        records.push(r);
    }
    if cur.pos != cur.end {
        return Err(Error::Parse {
            offset: cur.pos as u64,
            reason: "bytes after the last record".into(),
        });
    }
    let digest = Sha256::digest(&bytes[HEADER_LEN..cur.end]);
    if digest.as_slice() != &bytes[cur.end..] {
        return Err(Error::Corruption(format!(
            "content hash {} does not match trailer {}",
            hex::encode(digest),
            hex::encode(&bytes[cur.end..])
        )));
    }
    Ok(records)
}

/// `data.bin` → `data.manifest.json`.
pub fn manifest_path(container: &Path) -> PathBuf {
    container.with_extension("manifest.json")
}

/// Writes the container and its manifest. The manifest must describe exactly
/// these records.
pub fn save_dataset(
    path: &Path,
    records: &[EchogramRecord],
    manifest: &DatasetManifest,
) -> Result<()> {
    let enc = encode_dataset(records);
    if manifest.content_hash != enc.content_hash || manifest.record_count != records.len() {
        return Err(Error::Contract(
            "manifest does not describe these records".into(),
        ));
    }
    std::fs::write(path, &enc.bytes).map_err(|e| Error::io(path, e))?;
    let mpath = manifest_path(path);
    std::fs::write(&mpath, manifest.to_json() + "\n").map_err(|e| Error::io(&mpath, e))
}

pub fn load_dataset(path: &Path) -> Result<Vec<EchogramRecord>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&bytes)
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let mpath = manifest_path(path);
    let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        offset: 0,
        reason: format!("{}: {e}", mpath.display()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, cols: usize, layers: usize) -> EchogramRecord {
        let points = (0..cols)
            .map(|i| GeoPoint::new(71.0 + 1e-4 * i as f64, -38.5).unwrap())
            .collect();
        let tops = (0..cols)
            .map(|c| {
                (0..=layers)
                    .map(|k| 3.0 + 2.5 * k as f64 + 0.125 * c as f64)
                    .collect()
            })
            .collect();
        EchogramRecord::new(id, points, tops).unwrap()
    }

    #[test]
    fn round_trip_preserves_order() {
        let rs = vec![rec("b", 3, 4), rec("a", 2, 6)];
        let enc = encode_dataset(&rs);
        assert_eq!(decode_dataset(&enc.bytes).unwrap(), rs);
        assert_eq!(decode_dataset(&encode_dataset(&[]).bytes).unwrap(), vec![]);
    }

    #[test]
    fn truncation_is_parse_error() {
        let enc = encode_dataset(&[rec("a", 3, 4)]);
        for cut in [0, 5, 19, 30, enc.bytes.len() - 1] {
            match decode_dataset(&enc.bytes[..cut]) {
                Err(Error::Parse { .. }) | Err(Error::Corruption(_)) => {}
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn trailer_mismatch_is_corruption() {
        let mut b = encode_dataset(&[rec("a", 2, 3)]).bytes;
        let n = b.len();
        b[n - 1] ^= 1;
        assert!(matches!(decode_dataset(&b), Err(Error::Corruption(_))));
    }

    #[test]
    fn manifest_spans_match_layout() {
        let rs = vec![rec("x", 2, 3), rec("y", 4, 5)];
        let m = DatasetManifest::for_records(&rs, Some(3));
        let enc = encode_dataset(&rs);
        assert_eq!(m.entries[0].offset, Some(HEADER_LEN as u64));
        let (o, l) = (m.entries[1].offset.unwrap(), m.entries[1].length.unwrap());
        assert_eq!((o + l) as usize, enc.bytes.len() - HASH_LEN);
        assert_eq!(record_region_hash(&enc.bytes).unwrap(), m.content_hash);
    }
}
