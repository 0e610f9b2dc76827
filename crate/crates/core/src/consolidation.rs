//! Scoring rules that turn image-to-entry similarities into one score per class.
//!
//! Every rule is expressed twice: as a public per-image function over a
//! [`ClassCatalog`] and through [`Consolidator`], which works on precomputed
//! similarity rows so that sweeps can reuse one similarity matrix.

use crate::attribute_catalog::{AttributeType, ClassCatalog};
use crate::embedding_store::{dot, EmbeddingTable, MIN_ROW_NORM};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const DEFAULT_K: usize = 16;
pub const DEFAULT_TEMPERATURE: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum ScoringError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("catalog has no classes")]
    EmptyCatalog,
    #[error("class {class} pool mean has norm {norm:e}")]
    DegeneratePool { class: usize, norm: f64 },
    #[error("invalid scoring config: {0}")]
    InvalidConfig(String),
    #[error("unknown {kind} {value:?}")]
    Unknown { kind: &'static str, value: String },
}

pub type Result<T> = std::result::Result<T, ScoringError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Vanilla,
    AverageSims,
    AverageVecs,
    Chils,
    ChilsFixed,
    Topk,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::Vanilla, Method::AverageSims, Method::AverageVecs, Method::Chils, Method::ChilsFixed, Method::Topk];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Vanilla => "vanilla",
            Method::AverageSims => "average_sims",
            Method::AverageVecs => "average_vecs",
            Method::Chils => "chils",
            Method::ChilsFixed => "chils_fixed",
            Method::Topk => "topk",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = ScoringError;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| ScoringError::Unknown { kind: "method", value: s.to_string() })
    }
}

/// How "full averaging" is computed: mean of similarities, or similarity to
/// the renormalized mean vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AveragingMode {
    #[default]
    Sims,
    Vecs,
}

impl AveragingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AveragingMode::Sims => "sims",
            AveragingMode::Vecs => "vecs",
        }
    }
}

impl fmt::Display for AveragingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AveragingMode {
    type Err = ScoringError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sims" => Ok(AveragingMode::Sims),
            "vecs" => Ok(AveragingMode::Vecs),
            other => Err(ScoringError::Unknown { kind: "averaging mode", value: other.to_string() }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub method: Method,
    /// Pool members averaged by `topk`; also the length of the attended list.
    pub k: usize,
    /// Weight of full averaging in `topk` (0 = pure top-k, 1 = pure averaging).
    pub lambda: f64,
    /// Softmax temperature applied to raw cosines by `chils`.
    pub temperature: f64,
    /// Which full average `lambda` interpolates towards.
    pub averaging: AveragingMode,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            method: Method::Topk,
            k: DEFAULT_K,
            lambda: 0.0,
            temperature: DEFAULT_TEMPERATURE,
            averaging: AveragingMode::Sims,
        }
    }
}

impl ScoringConfig {
    pub fn new(method: Method) -> Self {
        Self { method, ..Self::default() }
    }

    pub fn topk(k: usize, lambda: f64) -> Self {
        Self { method: Method::Topk, k, lambda, ..Self::default() }
    }

    pub fn chils_uses_softmax(&self) -> bool {
        self.method == Method::Chils
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(ScoringError::InvalidConfig("k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(ScoringError::InvalidConfig(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.temperature > 0.0) {
            return Err(ScoringError::InvalidConfig(format!("temperature {} must be positive", self.temperature)));
        }
        Ok(())
    }

    /// Whether scoring needs per-class mean vectors.
    pub fn needs_mean_vectors(&self) -> bool {
        self.method == Method::AverageVecs
            || (self.method == Method::Topk && self.lambda > 0.0 && self.averaging == AveragingMode::Vecs)
    }
}

/// One member of the attended list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attended {
    #[serde(rename = "class")]
    pub class_index: usize,
    pub text: String,
    #[serde(rename = "type")]
    pub attribute_type: AttributeType,
    pub sim: f64,
    /// Catalog entry index; not part of the serialized record.
    #[serde(skip)]
    pub entry: Option<usize>,
}

/// A prediction with its interpretation: the most similar pool members of the
/// predicted class, most similar first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub image_id: String,
    pub predicted_class: usize,
    #[serde(default)]
    pub predicted_class_name: String,
    #[serde(rename = "scores", default, skip_serializing_if = "Vec::is_empty")]
    pub class_scores: Vec<f64>,
    pub attended: Vec<Attended>,
}

impl PredictionRecord {
    /// One JSONL line (no trailing newline); scores are included on request.
    pub fn to_json_line(&self, with_scores: bool) -> String {
        if with_scores || self.class_scores.is_empty() {
            serde_json::to_string(self).expect("record serializes")
        } else {
            let trimmed = PredictionRecord { class_scores: Vec::new(), ..self.clone() };
            serde_json::to_string(&trimmed).expect("record serializes")
        }
    }
}

#[inline]
fn check_dim(x: &[f32], catalog: &ClassCatalog) -> Result<()> {
    if x.len() != catalog.dim() {
        return Err(ScoringError::DimensionMismatch(x.len(), catalog.dim()));
    }
    if catalog.num_classes() == 0 {
        return Err(ScoringError::EmptyCatalog);
    }
    Ok(())
}

/// Cosine of two unit vectors (their dot product, accumulated in `f64`).
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(ScoringError::DimensionMismatch(a.len(), b.len()));
    }
    Ok(dot(a, b))
}

/// Similarity of `x` to every catalog entry, in entry order.
pub fn entry_similarities(x: &[f32], catalog: &ClassCatalog) -> Vec<f64> {
    (0..catalog.entries().len()).map(|e| dot(x, catalog.entry_vector(e))).collect()
}

/// Lowest-index argmax.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Per-class scoring over precomputed similarities.
#[derive(Debug, Clone)]
pub struct Consolidator<'a> {
    catalog: &'a ClassCatalog,
    config: ScoringConfig,
    /// Renormalized pool means, `C x dim`, when the config needs them.
    means: Option<Vec<Vec<f64>>>,
}

/// Renormalized mean of each class's pool vectors. Single-entry pools keep the stored row.
pub fn pool_mean_vectors(catalog: &ClassCatalog) -> Result<Vec<Vec<f64>>> {
    let dim = catalog.dim();
    (0..catalog.num_classes())
        .map(|c| {
            let pool = catalog.pool(c);
            if let [only] = pool {
                // Already a unit row; renormalizing in f64 would only add f32 rounding noise.
                return Ok(catalog.entry_vector(*only).iter().map(|&v| f64::from(v)).collect());
            }
            let mut acc = vec![0.0f64; dim];
            for &e in pool {
                for (a, &v) in acc.iter_mut().zip(catalog.entry_vector(e)) {
                    *a += f64::from(v);
                }
            }
            let n = pool.len() as f64;
            acc.iter_mut().for_each(|a| *a /= n);
            let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < MIN_ROW_NORM {
                return Err(ScoringError::DegeneratePool { class: c, norm });
            }
            acc.iter_mut().for_each(|a| *a /= norm);
            Ok(acc)
        })
        .collect()
}

/// `x · m` for each renormalized class mean `m`.
pub fn mean_vector_similarities(x: &[f32], means: &[Vec<f64>]) -> Vec<f64> {
    means.iter().map(|m| x.iter().zip(m).map(|(&a, &b)| f64::from(a) * b).sum()).collect()
}

impl<'a> Consolidator<'a> {
    pub fn new(catalog: &'a ClassCatalog, config: ScoringConfig) -> Result<Self> {
        config.validate()?;
        if catalog.num_classes() == 0 {
            return Err(ScoringError::EmptyCatalog);
        }
        let means = if config.needs_mean_vectors() { Some(pool_mean_vectors(catalog)?) } else { None };
        Ok(Self { catalog, config, means })
    }

    pub fn config(&self) -> &ScoringConfig {
        &self.config
    }

    pub fn means(&self) -> Option<&[Vec<f64>]> {
        self.means.as_deref()
    }

    /// Class scores from entry similarities. `vec_sims` (similarities to the
    /// renormalized pool means) is required only when the config averages vectors.
    pub fn class_scores(&self, sims: &[f64], vec_sims: Option<&[f64]>) -> Vec<f64> {
        let cat = self.catalog;
        let cfg = &self.config;
        match cfg.method {
            Method::Vanilla => (0..cat.num_classes()).map(|c| sims[cat.classname_entry(c)]).collect(),
            Method::AverageSims => average_sims_from(sims, cat),
            Method::AverageVecs => vec_sims.expect("average_vecs needs mean-vector similarities").to_vec(),
            Method::ChilsFixed => max_sims_from(sims, cat),
            Method::Chils => chils_from(sims, cat, cfg.temperature),
            Method::Topk => {
                let top = topk_from(sims, cat, cfg.k);
                if cfg.lambda == 0.0 {
                    return top;
                }
                let full = match cfg.averaging {
                    AveragingMode::Sims => average_sims_from(sims, cat),
                    AveragingMode::Vecs => vec_sims.expect("vecs averaging needs mean-vector similarities").to_vec(),
                };
                interpolate(&top, &full, cfg.lambda)
            }
        }
    }

    /// The `min(k, pool)` most similar pool members of `class`, most similar
    /// first; equal similarities keep pool order.
    pub fn attended(&self, sims: &[f64], class: usize) -> Vec<Attended> {
        let cat = self.catalog;
        top_pool_members(sims, cat.pool(class), self.config.k)
            .into_iter()
            .map(|e| {
                let s = &cat.entries()[e];
                Attended {
                    class_index: s.class_index,
                    text: s.attribute_text.clone(),
                    attribute_type: s.attribute_type,
                    sim: sims[e],
                    entry: Some(e),
                }
            })
            .collect()
    }

    /// Full prediction record from precomputed similarities.
    pub fn record(&self, image_id: &str, sims: &[f64], vec_sims: Option<&[f64]>) -> PredictionRecord {
        let class_scores = self.class_scores(sims, vec_sims);
        let predicted_class = argmax(&class_scores);
        PredictionRecord {
            image_id: image_id.to_string(),
            predicted_class,
            predicted_class_name: self.catalog.class_names()[predicted_class].clone(),
            attended: self.attended(sims, predicted_class),
            class_scores,
        }
    }

    /// Scores one image vector.
    pub fn score(&self, x: &[f32]) -> Result<Vec<f64>> {
        check_dim(x, self.catalog)?;
        let sims = entry_similarities(x, self.catalog);
        let vec_sims = self.means.as_ref().map(|m| mean_vector_similarities(x, m));
        Ok(self.class_scores(&sims, vec_sims.as_deref()))
    }
}

/// Pool members sorted by similarity (descending, ties by pool position),
/// truncated to `k`.
fn top_pool_members(sims: &[f64], pool: &[usize], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = pool.to_vec();
    // Stable sort keeps pool order among equal similarities.
    order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]));
    order.truncate(k.min(pool.len()));
    order
}

fn average_sims_from(sims: &[f64], cat: &ClassCatalog) -> Vec<f64> {
    cat.pools()
        .iter()
        .map(|pool| pool.iter().map(|&e| sims[e]).sum::<f64>() / pool.len() as f64)
        .collect()
}

fn max_sims_from(sims: &[f64], cat: &ClassCatalog) -> Vec<f64> {
    cat.pools().iter().map(|pool| pool.iter().map(|&e| sims[e]).fold(f64::NEG_INFINITY, f64::max)).collect()
}

fn topk_from(sims: &[f64], cat: &ClassCatalog, k: usize) -> Vec<f64> {
    cat.pools()
        .iter()
        .map(|pool| {
            if k >= pool.len() {
                return pool.iter().map(|&e| sims[e]).sum::<f64>() / pool.len() as f64;
            }
            // Summed in pool order, the same order full averaging uses.
            let mut chosen = top_pool_members(sims, pool, k);
            chosen.sort_unstable();
            chosen.iter().map(|&e| sims[e]).sum::<f64>() / k as f64
        })
        .collect()
}

fn interpolate(top: &[f64], full: &[f64], lambda: f64) -> Vec<f64> {
    // Equal endpoints stay exact instead of picking up rounding from the blend.
    top.iter().zip(full).map(|(&t, &a)| if t == a { t } else { (1.0 - lambda) * t + lambda * a }).collect()
}

/// Max-subtracted softmax in `f64`.
fn softmax(logits: impl Iterator<Item = f64> + Clone) -> Vec<f64> {
    let max = logits.clone().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn chils_from(sims: &[f64], cat: &ClassCatalog, temperature: f64) -> Vec<f64> {
    let p = softmax((0..cat.num_classes()).map(|c| sims[cat.classname_entry(c)] / temperature));
    let q = softmax(sims.iter().map(|&s| s / temperature));
    cat.pools()
        .iter()
        .zip(p)
        .map(|(pool, pc)| pc * pool.iter().map(|&e| q[e]).fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

/// Cosine to each classname vector.
pub fn score_vanilla(x: &[f32], catalog: &ClassCatalog) -> Result<Vec<f64>> {
    check_dim(x, catalog)?;
    Ok(catalog.classname_vectors().rows().map(|c| dot(x, c)).collect())
}

/// Mean cosine over each class's pool.
pub fn score_average_sims(x: &[f32], catalog: &ClassCatalog) -> Result<Vec<f64>> {
    check_dim(x, catalog)?;
    Ok(average_sims_from(&entry_similarities(x, catalog), catalog))
}

/// Cosine to each class's renormalized mean pool vector.
pub fn score_average_vecs(x: &[f32], catalog: &ClassCatalog) -> Result<Vec<f64>> {
    check_dim(x, catalog)?;
    Ok(mean_vector_similarities(x, &pool_mean_vectors(catalog)?))
}

/// CHiLS. With softmax: class probability times the largest subpopulation
/// probability within the class, both softmaxes at `temperature`, the second
/// over every entry of every class. Without softmax: the largest cosine in the pool.
pub fn score_chils(x: &[f32], catalog: &ClassCatalog, uses_softmax: bool, temperature: f64) -> Result<Vec<f64>> {
    check_dim(x, catalog)?;
    if !(temperature > 0.0) {
        return Err(ScoringError::InvalidConfig(format!("temperature {temperature} must be positive")));
    }
    let sims = entry_similarities(x, catalog);
    Ok(if uses_softmax { chils_from(&sims, catalog, temperature) } else { max_sims_from(&sims, catalog) })
}

/// Mean of the `min(k, pool)` largest cosines in each pool.
pub fn score_topk(x: &[f32], catalog: &ClassCatalog, k: usize) -> Result<Vec<f64>> {
    check_dim(x, catalog)?;
    if k == 0 {
        return Err(ScoringError::InvalidConfig("k must be at least 1".into()));
    }
    Ok(topk_from(&entry_similarities(x, catalog), catalog, k))
}

/// `(1 - lambda) * topk + lambda * average_sims`.
pub fn score_interpolated(x: &[f32], catalog: &ClassCatalog, k: usize, lambda: f64) -> Result<Vec<f64>> {
    ScoringConfig::topk(k, lambda).validate()?;
    check_dim(x, catalog)?;
    let sims = entry_similarities(x, catalog);
    Ok(interpolate(&topk_from(&sims, catalog, k), &average_sims_from(&sims, catalog), lambda))
}

/// Scores every image; records come back in input order.
pub fn predict_batch(
    images: &EmbeddingTable,
    catalog: &ClassCatalog,
    config: &ScoringConfig,
) -> Result<Vec<PredictionRecord>> {
    if images.dim() != catalog.dim() {
        return Err(ScoringError::DimensionMismatch(images.dim(), catalog.dim()));
    }
    let scorer = Consolidator::new(catalog, *config)?;
    Ok((0..images.count())
        .into_par_iter()
        .map(|i| {
            let x = images.row(i);
            let sims = entry_similarities(x, catalog);
            let vec_sims = scorer.means().map(|m| mean_vector_similarities(x, m));
            scorer.record(images.id(i), &sims, vec_sims.as_deref())
        })
        .collect())
}
