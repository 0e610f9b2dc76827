//! Unit-norm embedding tables, their on-disk EMBD format, dataset manifests,
//! prompt-template ensembles and classname deduplication.

mod embd;
mod manifest;
mod prompts;

pub use embd::{load_embedding_table, save_embedding_table, sidecar_path, TableMeta};
pub use manifest::{load_manifest, save_manifest, DatasetManifest, ManifestFile};
pub use prompts::PromptTemplateSet;

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::PathBuf;
use thiserror::Error;

/// Rows whose norm drifts further than this from 1 are renormalized.
pub const RENORM_TOLERANCE: f64 = 1e-6;
/// Rows with a norm below this are rejected.
pub const MIN_ROW_NORM: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("malformed EMBD header: {0}")]
    MalformedHeader(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("payload checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("row {row} has norm {norm:e}, below {MIN_ROW_NORM:e}")]
    ZeroNormRow { row: usize, norm: f64 },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("invalid prompt template {0:?}: must contain exactly one '{{}}' placeholder")]
    InvalidTemplate(String),
    #[error("malformed sidecar {path}: {source}")]
    Sidecar {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, StoreError>;

/// What a table's rows embed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TableKind {
    #[default]
    Images,
    Classnames,
    Subpops,
}

/// A `count x dim` row-major matrix of unit-norm `f32` rows with unique string ids.
///
/// Every constructor runs the same normalization rule as the loader, so a
/// table held in memory always survives a save/load cycle bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    data: Vec<f32>,
    ids: Vec<String>,
    pub meta: TableMeta,
}

impl EmbeddingTable {
    /// Builds a table, renormalizing off-norm rows and rejecting zero rows
    /// and duplicate ids.
    pub fn new(dim: usize, data: Vec<f32>, ids: Vec<String>) -> Result<Self> {
        Self::with_meta(dim, data, ids, TableMeta::default())
    }

    pub fn with_meta(dim: usize, mut data: Vec<f32>, ids: Vec<String>, meta: TableMeta) -> Result<Self> {
        if dim == 0 {
            return Err(StoreError::DimensionMismatch("dim must be positive".into()));
        }
        if data.len() != ids.len() * dim {
            return Err(StoreError::DimensionMismatch(format!(
                "{} floats for {} ids at dim {}",
                data.len(),
                ids.len(),
                dim
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(StoreError::DuplicateId(id.clone()));
            }
        }
        for (row, chunk) in data.chunks_exact_mut(dim).enumerate() {
            normalize_row(chunk).map_err(|norm| StoreError::ZeroNormRow { row, norm })?;
        }
        Ok(Self { dim, data, ids, meta })
    }

    /// An empty table of the given dimensionality.
    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new(), Vec::new())
    }

    /// Builds a table from `f64` rows (e.g. synthetic generators).
    pub fn from_rows_f64(dim: usize, rows: &[Vec<f64>], ids: Vec<String>) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(StoreError::DimensionMismatch(format!("row {i} has length {}, expected {dim}", r.len())));
            }
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < MIN_ROW_NORM {
                return Err(StoreError::ZeroNormRow { row: i, norm });
            }
            data.extend(r.iter().map(|v| (v / norm) as f32));
        }
        Self::new(dim, data, ids)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// New table holding the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        let mut ids = Vec::with_capacity(rows.len());
        for &r in rows {
            data.extend_from_slice(self.row(r));
            ids.push(self.ids[r].clone());
        }
        Self { dim: self.dim, data, ids, meta: self.meta.clone() }
    }

    /// Appends the rows of `other`; ids must stay unique.
    pub fn concat(&self, other: &EmbeddingTable) -> Result<Self> {
        if other.dim != self.dim {
            return Err(StoreError::DimensionMismatch(format!("cannot concat dim {} onto dim {}", other.dim, self.dim)));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        let mut ids = self.ids.clone();
        ids.extend(other.ids.iter().cloned());
        Self::with_meta(self.dim, data, ids, self.meta.clone())
    }
}

/// Applies the loader's normalization rule in place. Returns the offending norm
/// if the row is (numerically) zero.
pub(crate) fn normalize_row(row: &mut [f32]) -> std::result::Result<(), f64> {
    let norm = row.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
    if !(norm >= MIN_ROW_NORM) {
        return Err(norm);
    }
    if (norm - 1.0).abs() > RENORM_TOLERANCE {
        for v in row.iter_mut() {
            *v = (f64::from(*v) / norm) as f32;
        }
    }
    Ok(())
}

/// Averages consecutive groups of rows (one group per class, one row per prompt)
/// and renormalizes each mean. Output row `g` gets id `group_ids[g]`.
pub fn average_prompt_embeddings(
    per_prompt: &EmbeddingTable,
    group_sizes: &[usize],
    group_ids: Vec<String>,
) -> Result<EmbeddingTable> {
    if let Some(g) = group_sizes.iter().position(|&s| s == 0) {
        return Err(StoreError::EmptyGroup(g));
    }
    let total: usize = group_sizes.iter().sum();
    if total != per_prompt.count() {
        return Err(StoreError::DimensionMismatch(format!(
            "group sizes sum to {total} but table has {} rows",
            per_prompt.count()
        )));
    }
    if group_ids.len() != group_sizes.len() {
        return Err(StoreError::DimensionMismatch(format!(
            "{} group ids for {} groups",
            group_ids.len(),
            group_sizes.len()
        )));
    }
    let dim = per_prompt.dim();
    let mut data = Vec::with_capacity(group_sizes.len() * dim);
    let mut start = 0;
    for (g, &size) in group_sizes.iter().enumerate() {
        let mut acc = vec![0.0f64; dim];
        for r in start..start + size {
            for (a, &v) in acc.iter_mut().zip(per_prompt.row(r)) {
                *a += f64::from(v);
            }
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt() / size as f64;
        if norm < MIN_ROW_NORM {
            return Err(StoreError::ZeroNormRow { row: g, norm });
        }
        // The mean is handed to the table constructor, which renormalizes
        // only when it is off-norm; a single unit row passes through untouched.
        data.extend(acc.iter().map(|v| (v / size as f64) as f32));
        start += size;
    }
    let meta = TableMeta { kind: TableKind::Classnames, ..per_prompt.meta.clone() };
    EmbeddingTable::with_meta(dim, data, group_ids, meta)
}

/// Result of [`filter_similar_classnames`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassnameFilter {
    pub kept: Vec<usize>,
    /// `(kept, removed)` pairs, in scan order.
    pub removed: Vec<(usize, usize)>,
}

/// Greedy in-order dedup: scanning `i` in input order, every later still-kept
/// `j` with `cos(i, j) > threshold` is dropped.
pub fn filter_similar_classnames(vectors: &EmbeddingTable, threshold: f64) -> ClassnameFilter {
    let n = vectors.count();
    let mut alive = vec![true; n];
    let mut removed = Vec::new();
    for i in 0..n {
        if !alive[i] {
            continue;
        }
        for (j, live) in alive.iter_mut().enumerate().skip(i + 1) {
            if *live && dot(vectors.row(i), vectors.row(j)) > threshold {
                *live = false;
                removed.push((i, j));
            }
        }
    }
    let kept = (0..n).filter(|&i| alive[i]).collect();
    ClassnameFilter { kept, removed }
}

/// Dot product of two `f32` slices with `f64` accumulation.
#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("r{i}")).collect()
    }

    #[test]
    fn normalizes_three_four_five() {
        let t = EmbeddingTable::new(4, vec![3.0, 4.0, 0.0, 0.0], ids(1)).unwrap();
        assert_eq!(t.row(0), &[0.6f32, 0.8, 0.0, 0.0]);
    }

    #[test]
    fn unit_row_is_untouched() {
        let t = EmbeddingTable::new(4, vec![1.0, 0.0, 0.0, 0.0], ids(1)).unwrap();
        assert_eq!(t.row(0), &[1.0f32, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_zero_rows_and_duplicate_ids() {
        let err = EmbeddingTable::new(2, vec![1.0, 0.0, 0.0, 0.0], ids(2)).unwrap_err();
        assert!(matches!(err, StoreError::ZeroNormRow { row: 1, .. }));
        let err = EmbeddingTable::new(2, vec![1.0, 0.0, 0.0, 1.0], vec!["a".into(), "a".into()]).unwrap_err();
        assert!(matches!(err, StoreError::DuplicateId(_)));
    }

    #[test]
    fn average_of_duplicates_is_the_row() {
        let v = [0.6f32, 0.8];
        let t = EmbeddingTable::new(2, [v, v].concat(), ids(2)).unwrap();
        let avg = average_prompt_embeddings(&t, &[2], vec!["c".into()]).unwrap();
        assert_eq!(avg.row(0), &v);
    }

    #[test]
    fn average_of_axes_is_diagonal() {
        let t = EmbeddingTable::new(2, vec![1.0, 0.0, 0.0, 1.0], ids(2)).unwrap();
        let avg = average_prompt_embeddings(&t, &[2], vec!["c".into()]).unwrap();
        let h = std::f32::consts::FRAC_1_SQRT_2;
        assert!((avg.row(0)[0] - h).abs() < 1e-7 && (avg.row(0)[1] - h).abs() < 1e-7);
    }

    #[test]
    fn antipodal_average_vanishes() {
        let t = EmbeddingTable::new(2, vec![1.0, 0.0, -1.0, 0.0], ids(2)).unwrap();
        let err = average_prompt_embeddings(&t, &[2], vec!["c".into()]).unwrap_err();
        assert!(matches!(err, StoreError::ZeroNormRow { .. }));
    }

    #[test]
    fn empty_group_is_an_error() {
        let t = EmbeddingTable::new(2, vec![1.0, 0.0], ids(1)).unwrap();
        let err = average_prompt_embeddings(&t, &[1, 0], vec!["a".into(), "b".into()]).unwrap_err();
        assert!(matches!(err, StoreError::EmptyGroup(1)));
    }

    #[test]
    fn filter_drops_duplicate_keeps_orthogonal() {
        let dup = EmbeddingTable::new(2, vec![1.0, 0.0, 1.0, 0.0], ids(2)).unwrap();
        let f = filter_similar_classnames(&dup, 0.9);
        assert_eq!(f.kept, vec![0]);
        assert_eq!(f.removed, vec![(0, 1)]);

        let orth = EmbeddingTable::new(2, vec![1.0, 0.0, 0.0, 1.0], ids(2)).unwrap();
        let f = filter_similar_classnames(&orth, 0.9);
        assert_eq!(f.kept, vec![0, 1]);
        assert!(f.removed.is_empty());

        let empty = EmbeddingTable::empty(3).unwrap();
        assert!(filter_similar_classnames(&empty, 0.8).kept.is_empty());
    }

    #[test]
    fn select_and_concat() {
        let t = EmbeddingTable::new(2, vec![1.0, 0.0, 0.0, 1.0], ids(2)).unwrap();
        let s = t.select(&[1]);
        assert_eq!(s.ids(), &["r1".to_string()]);
        assert!(t.concat(&t).is_err());
        let other = EmbeddingTable::new(2, vec![0.6, 0.8], vec!["z".into()]).unwrap();
        assert_eq!(t.concat(&other).unwrap().count(), 3);
    }
}
