//! EMBD binary tables.
//!
//! Layout (all little-endian):
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `b"EMBD"`               |
//! | 4      | 4    | format version, `u32` = 1     |
//! | 8      | 8    | row count, `u64`              |
//! | 16     | 4    | dim, `u32`                    |
//! | 20     | 4    | reserved, `u32` = 0           |
//! | 24     | 4·count·dim | row-major IEEE-754 binary32 payload |
//! | end−4  | 4    | CRC-32 (IEEE) of the payload  |
//!
//! Ids and descriptive metadata live in the JSON sidecar `<path>.meta.json`.

use super::{EmbeddingTable, Result, StoreError, TableKind};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 4] = b"EMBD";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

/// Descriptive sidecar fields carried alongside the ids.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TableMeta {
    #[serde(default)]
    pub kind: TableKind,
    #[serde(default)]
    pub source: String,
    /// Any further keys (model id, embedding hook, dedup notes) are preserved.
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    ids: Vec<String>,
    #[serde(flatten)]
    meta: TableMeta,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::IoFailure { path: path.to_path_buf(), source }
}

pub fn save_embedding_table(table: &EmbeddingTable, path: &Path) -> Result<()> {
    let payload_len = table.data().len() * 4;
    let mut buf = Vec::with_capacity(HEADER_LEN + payload_len + 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(table.count() as u64).to_le_bytes());
    buf.extend_from_slice(&(table.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    for v in table.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf[HEADER_LEN..]);
    buf.extend_from_slice(&crc.to_le_bytes());

    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&buf).map_err(io_err(path))?;

    let side = sidecar_path(path);
    let sidecar = Sidecar { ids: table.ids().to_vec(), meta: table.meta.clone() };
    let mut json = serde_json::to_vec_pretty(&sidecar).expect("sidecar serializes");
    json.push(b'\n');
    fs::write(&side, json).map_err(io_err(&side))
}

pub fn load_embedding_table(path: &Path) -> Result<EmbeddingTable> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() < HEADER_LEN {
        return Err(StoreError::MalformedHeader(format!("file is {} bytes, shorter than the header", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(StoreError::MalformedHeader("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(StoreError::MalformedHeader(format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let dim = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    let reserved = u32::from_le_bytes(bytes[20..24].try_into().unwrap());
    if reserved != 0 {
        return Err(StoreError::MalformedHeader(format!("reserved field is {reserved}, expected 0")));
    }
    let expected = usize::try_from(count)
        .ok()
        .and_then(|c| c.checked_mul(dim))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| StoreError::DimensionMismatch(format!("count {count} x dim {dim} overflows")))?;
    let body = bytes.len() - HEADER_LEN;
    if body != expected + 4 {
        return Err(StoreError::DimensionMismatch(format!(
            "payload is {} bytes, expected {expected} for {count}x{dim}",
            body.saturating_sub(4)
        )));
    }
    let payload = &bytes[HEADER_LEN..HEADER_LEN + expected];
    let stored = u32::from_le_bytes(bytes[HEADER_LEN + expected..].try_into().unwrap());
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(StoreError::ChecksumMismatch { stored, computed });
    }
    let data: Vec<f32> = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();

    let side = sidecar_path(path);
    let text = fs::read(&side).map_err(io_err(&side))?;
    let sidecar: Sidecar =
        serde_json::from_slice(&text).map_err(|source| StoreError::Sidecar { path: side.clone(), source })?;
    if sidecar.ids.len() as u64 != count {
        return Err(StoreError::DimensionMismatch(format!("{} ids in sidecar for {count} rows", sidecar.ids.len())));
    }
    EmbeddingTable::with_meta(dim, data, sidecar.ids, sidecar.meta)
}
