//! Experiment drivers: the k/λ sweep, cumulative attribute-type ablations,
//! averaging comparisons and disagreement reports.
//!
//! Drivers compute the image-by-entry similarity matrix once
//! ([`SimilarityCache`]) and consolidate it for every configuration.

use crate::attribute_catalog::{restrict_with_map, AttributeType, CatalogError, ClassCatalog};
use crate::consolidation::{
    argmax, entry_similarities, mean_vector_similarities, pool_mean_vectors, Attended, AveragingMode, Consolidator,
    Method, PredictionRecord, ScoringConfig, ScoringError,
};
use crate::embedding_store::{DatasetManifest, EmbeddingTable};
use crate::metrics::{accuracy_report_from_classes, MetricReport, MetricsError, ReportOptions, DEFAULT_QS};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("unknown attribute type {0:?}")]
    UnknownAttributeType(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("invalid sweep grid: {0}")]
    InvalidGrid(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("prediction {index} is for {found:?}, expected {expected:?}")]
    IdMismatch { index: usize, expected: String, found: String },
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

/// Row-major image-by-entry cosines, plus cosines to the renormalized pool
/// means when vector averaging is needed.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityCache {
    n_images: usize,
    n_entries: usize,
    sims: Vec<f64>,
    n_classes: usize,
    mean_sims: Option<Vec<f64>>,
}

impl SimilarityCache {
    pub fn build(images: &EmbeddingTable, catalog: &ClassCatalog, with_means: bool) -> Result<Self> {
        if images.dim() != catalog.dim() {
            return Err(ScoringError::DimensionMismatch(images.dim(), catalog.dim()).into());
        }
        let sims: Vec<f64> = (0..images.count())
            .into_par_iter()
            .flat_map_iter(|i| entry_similarities(images.row(i), catalog))
            .collect();
        let mean_sims = if with_means { Some(Self::mean_sims(images, catalog)?) } else { None };
        Ok(Self {
            n_images: images.count(),
            n_entries: catalog.entries().len(),
            sims,
            n_classes: catalog.num_classes(),
            mean_sims,
        })
    }

    fn mean_sims(images: &EmbeddingTable, catalog: &ClassCatalog) -> Result<Vec<f64>> {
        let means = pool_mean_vectors(catalog)?;
        Ok((0..images.count())
            .into_par_iter()
            .flat_map_iter(|i| mean_vector_similarities(images.row(i), &means))
            .collect())
    }

    pub fn n_images(&self) -> usize {
        self.n_images
    }

    pub fn n_entries(&self) -> usize {
        self.n_entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.sims[i * self.n_entries..(i + 1) * self.n_entries]
    }

    pub fn mean_row(&self, i: usize) -> Option<&[f64]> {
        self.mean_sims.as_ref().map(|m| &m[i * self.n_classes..(i + 1) * self.n_classes])
    }

    pub fn has_means(&self) -> bool {
        self.mean_sims.is_some()
    }

    /// Cache for a restricted catalog, given `map[new_entry] = old_entry`.
    /// Mean similarities are recomputed for the restricted pools when requested.
    pub fn restricted(
        &self,
        map: &[usize],
        images: &EmbeddingTable,
        restricted: &ClassCatalog,
        with_means: bool,
    ) -> Result<Self> {
        let sims = (0..self.n_images).flat_map(|i| map.iter().map(move |&e| self.sims[i * self.n_entries + e])).collect();
        let mean_sims = if with_means { Some(Self::mean_sims(images, restricted)?) } else { None };
        Ok(Self {
            n_images: self.n_images,
            n_entries: map.len(),
            sims,
            n_classes: restricted.num_classes(),
            mean_sims,
        })
    }

    /// Predicted class of every image under `scorer`.
    pub fn predict_classes(&self, scorer: &Consolidator<'_>) -> Vec<usize> {
        (0..self.n_images)
            .into_par_iter()
            .map(|i| argmax(&scorer.class_scores(self.row(i), self.mean_row(i))))
            .collect()
    }

    /// Full prediction records (interpretations included) under `scorer`.
    pub fn predict_records(&self, scorer: &Consolidator<'_>, images: &EmbeddingTable) -> Vec<PredictionRecord> {
        (0..self.n_images).into_par_iter().map(|i| scorer.record(images.id(i), self.row(i), self.mean_row(i))).collect()
    }
}

/// Worst-q fractions always reported by the drivers, plus any extra ones requested.
fn with_table_qs(opts: &ReportOptions) -> ReportOptions {
    let mut qs = DEFAULT_QS.to_vec();
    for &q in &opts.qs {
        if !qs.iter().any(|&d| (d - q).abs() < 1e-12) {
            qs.push(q);
        }
    }
    ReportOptions { qs, ..opts.clone() }
}

/// The k/λ grid. Construction sorts and deduplicates both axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    ks: Vec<usize>,
    lambdas: Vec<f64>,
    averaging: AveragingMode,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            ks: vec![1, 2, 4, 8, 16, 32, 64, 128],
            lambdas: (0..=10).map(|i| f64::from(i) / 10.0).collect(),
            averaging: AveragingMode::Sims,
        }
    }
}

impl SweepGrid {
    pub fn new(mut ks: Vec<usize>, mut lambdas: Vec<f64>, averaging: AveragingMode) -> Result<Self> {
        if ks.is_empty() || lambdas.is_empty() {
            return Err(AnalysisError::InvalidGrid("k and lambda lists must be nonempty".into()));
        }
        if ks.contains(&0) {
            return Err(AnalysisError::InvalidGrid("k values must be positive".into()));
        }
        if let Some(l) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(AnalysisError::InvalidGrid(format!("lambda {l} outside [0, 1]")));
        }
        ks.sort_unstable();
        ks.dedup();
        lambdas.sort_by(f64::total_cmp);
        lambdas.dedup();
        Ok(Self { ks, lambdas, averaging })
    }

    pub fn with_averaging(mut self, averaging: AveragingMode) -> Self {
        self.averaging = averaging;
        self
    }

    pub fn ks(&self) -> &[usize] {
        &self.ks
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn averaging(&self) -> AveragingMode {
        self.averaging
    }

    /// Cell configurations, k outer and λ inner.
    pub fn configs(&self) -> Vec<ScoringConfig> {
        self.ks
            .iter()
            .flat_map(|&k| self.lambdas.iter().map(move |&lambda| ScoringConfig { averaging: self.averaging, ..ScoringConfig::topk(k, lambda) }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub k: usize,
    pub lambda: f64,
    pub mode: AveragingMode,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub grid: SweepGrid,
    pub cells: Vec<SweepCell>,
}

/// Shared CSV header for sweep and ablation metric columns.
const METRIC_COLUMNS: &str = "overall,worst05,worst10,worst20,worst_subpop20,avg_worst_subpop";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn metric_fields(r: &MetricReport) -> String {
    format!(
        "{},{},{},{},{},{}",
        r.overall_accuracy,
        fmt_opt(r.worst_class(0.05)),
        fmt_opt(r.worst_class(0.10)),
        fmt_opt(r.worst_class(0.20)),
        fmt_opt(r.worst_subpop(0.20)),
        fmt_opt(r.avg_worst_subpop),
    )
}

impl SweepResult {
    /// Cells not dominated on (overall accuracy, worst-5%-class accuracy), in grid order.
    pub fn pareto_front(&self) -> Vec<usize> {
        let point = |c: &SweepCell| (c.report.overall_accuracy, c.report.worst_class(0.05).unwrap_or(f64::NAN));
        (0..self.cells.len())
            .filter(|&i| {
                let (oi, wi) = point(&self.cells[i]);
                !self.cells.iter().any(|c| {
                    let (o, w) = point(c);
                    o >= oi && w >= wi && (o > oi || w > wi)
                })
            })
            .collect()
    }

    pub fn cell(&self, k: usize, lambda: f64) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.k == k && c.lambda == lambda)
    }

    /// Header `k,lambda,mode,overall,worst05,worst10,worst20,worst_subpop20,avg_worst_subpop`;
    /// empty fields mean the metric is undefined for the dataset.
    pub fn to_csv(&self) -> String {
        self.csv_rows(0..self.cells.len())
    }

    pub fn pareto_csv(&self) -> String {
        self.csv_rows(self.pareto_front())
    }

    fn csv_rows(&self, rows: impl IntoIterator<Item = usize>) -> String {
        let mut out = format!("k,lambda,mode,{METRIC_COLUMNS}\n");
        for i in rows {
            let c = &self.cells[i];
            writeln!(out, "{},{},{},{}", c.k, c.lambda, c.mode.as_str(), metric_fields(&c.report)).unwrap();
        }
        out
    }
}

/// Evaluates every grid cell on the manifest's images.
pub fn run_sweep(
    manifest: &DatasetManifest,
    catalog: &ClassCatalog,
    grid: &SweepGrid,
    opts: &ReportOptions,
) -> Result<SweepResult> {
    let cache = SimilarityCache::build(&manifest.images, catalog, grid.averaging == AveragingMode::Vecs)?;
    run_sweep_cached(&cache, manifest, catalog, grid, opts)
}

/// [`run_sweep`] over an existing cache built for `catalog`.
pub fn run_sweep_cached(
    cache: &SimilarityCache,
    manifest: &DatasetManifest,
    catalog: &ClassCatalog,
    grid: &SweepGrid,
    opts: &ReportOptions,
) -> Result<SweepResult> {
    if cache.n_images() != manifest.images.count() || cache.n_entries() != catalog.entries().len() {
        return Err(AnalysisError::LengthMismatch("similarity cache does not match the inputs".into()));
    }
    if grid.averaging == AveragingMode::Vecs && !cache.has_means() {
        return Err(AnalysisError::InvalidGrid("vecs averaging needs a cache with mean similarities".into()));
    }
    let opts = with_table_qs(opts);
    let cells = grid
        .configs()
        .par_iter()
        .map(|cfg| {
            let scorer = Consolidator::new(catalog, *cfg)?;
            let predicted = cache.predict_classes(&scorer);
            let report = accuracy_report_from_classes(&predicted, manifest, &opts)?;
            Ok(SweepCell { k: cfg.k, lambda: cfg.lambda, mode: cfg.averaging, report })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { grid: grid.clone(), cells })
}

/// Attribute types added one at a time, and the methods evaluated at each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationPlan {
    types: Vec<AttributeType>,
    methods: Vec<Method>,
}

impl Default for AblationPlan {
    fn default() -> Self {
        Self {
            types: AttributeType::TAXONOMY_ORDER.to_vec(),
            methods: vec![Method::Topk, Method::AverageSims, Method::Chils],
        }
    }
}

impl AblationPlan {
    pub fn new(types: Vec<AttributeType>, methods: Vec<Method>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &t in &types {
            if t == AttributeType::Classname {
                return Err(AnalysisError::InvalidPlan("classname entries are always present".into()));
            }
            if !seen.insert(t) {
                return Err(AnalysisError::InvalidPlan(format!("type {t} repeated")));
            }
        }
        if methods.is_empty() {
            return Err(AnalysisError::InvalidPlan("no methods".into()));
        }
        let mut seen = BTreeSet::new();
        if let Some(m) = methods.iter().find(|m| !seen.insert(**m)) {
            return Err(AnalysisError::InvalidPlan(format!("method {} repeated", m.as_str())));
        }
        Ok(Self { types, methods })
    }

    /// From comma-separated type and method names.
    pub fn parse(types: &str, methods: &str) -> Result<Self> {
        let types = split_list(types)
            .map(|s| s.parse().map_err(|_| AnalysisError::UnknownAttributeType(s.to_string())))
            .collect::<Result<Vec<AttributeType>>>()?;
        let methods = split_list(methods)
            .map(|s| s.parse().map_err(|_| AnalysisError::InvalidPlan(format!("unknown method {s:?}"))))
            .collect::<Result<Vec<Method>>>()?;
        Self::new(types, methods)
    }

    pub fn types(&self) -> &[AttributeType] {
        &self.types
    }

    pub fn methods(&self) -> &[Method] {
        &self.methods
    }
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|s| !s.is_empty())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub prefix_len: usize,
    /// The type added at this step (`None` for the classname-only base).
    pub added: Option<AttributeType>,
    pub method: Method,
    /// Catalog entries (classname entries included) at this step.
    pub num_entries: usize,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub plan: AblationPlan,
    /// Plan types with no entries in the catalog; their steps repeat the previous one.
    pub missing_types: Vec<AttributeType>,
    pub rows: Vec<AblationRow>,
}

impl AblationResult {
    pub fn row(&self, prefix_len: usize, method: Method) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.prefix_len == prefix_len && r.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("prefix_len,added_type,method,num_entries,{METRIC_COLUMNS}\n");
        for r in &self.rows {
            let added = r.added.map(|t| t.as_str()).unwrap_or("classname");
            writeln!(out, "{},{},{},{},{}", r.prefix_len, added, r.method.as_str(), r.num_entries, metric_fields(&r.report))
                .unwrap();
        }
        out
    }
}

/// For each prefix of the plan (length 0 included), evaluates each method on
/// the catalog restricted to the prefix's types plus the classname entries.
/// `base` supplies k, λ, temperature and averaging mode.
pub fn run_ablation(
    manifest: &DatasetManifest,
    catalog: &ClassCatalog,
    plan: &AblationPlan,
    base: &ScoringConfig,
    opts: &ReportOptions,
) -> Result<AblationResult> {
    let opts = with_table_qs(opts);
    let present = catalog.attribute_types();
    let missing_types = plan.types.iter().copied().filter(|t| !present.contains(t)).collect();
    let configs: Vec<ScoringConfig> = plan.methods.iter().map(|&method| ScoringConfig { method, ..*base }).collect();
    for cfg in &configs {
        cfg.validate()?;
    }
    let with_means = configs.iter().any(ScoringConfig::needs_mean_vectors);
    let full = SimilarityCache::build(&manifest.images, catalog, false)?;

    let mut rows = Vec::new();
    for prefix_len in 0..=plan.types.len() {
        let types: BTreeSet<AttributeType> = plan.types[..prefix_len].iter().copied().collect();
        let (restricted, map) = restrict_with_map(catalog, &types);
        let cache = full.restricted(&map, &manifest.images, &restricted, with_means)?;
        let step = configs
            .par_iter()
            .map(|cfg| {
                let scorer = Consolidator::new(&restricted, *cfg)?;
                let report = accuracy_report_from_classes(&cache.predict_classes(&scorer), manifest, &opts)?;
                Ok(AblationRow {
                    prefix_len,
                    added: prefix_len.checked_sub(1).map(|i| plan.types[i]),
                    method: cfg.method,
                    num_entries: restricted.entries().len(),
                    report,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.extend(step);
    }
    Ok(AblationResult { plan: plan.clone(), missing_types, rows })
}

/// Average-Sims against Average-Vecs on the same catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragingComparison {
    pub sims: MetricReport,
    pub vecs: MetricReport,
    /// Fraction of images given the same class by both.
    pub agreement: f64,
}

pub fn compare_averaging(
    manifest: &DatasetManifest,
    catalog: &ClassCatalog,
    opts: &ReportOptions,
) -> Result<AveragingComparison> {
    let cache = SimilarityCache::build(&manifest.images, catalog, true)?;
    let sims = cache.predict_classes(&Consolidator::new(catalog, ScoringConfig::new(Method::AverageSims))?);
    let vecs = cache.predict_classes(&Consolidator::new(catalog, ScoringConfig::new(Method::AverageVecs))?);
    let same = sims.iter().zip(&vecs).filter(|(a, b)| a == b).count();
    let agreement = if sims.is_empty() { 1.0 } else { same as f64 / sims.len() as f64 };
    Ok(AveragingComparison {
        sims: accuracy_report_from_classes(&sims, manifest, opts)?,
        vecs: accuracy_report_from_classes(&vecs, manifest, opts)?,
        agreement,
    })
}

/// An image the two methods classify differently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disagreement {
    pub image_id: String,
    pub true_class: usize,
    pub class_a: usize,
    pub class_b: usize,
    /// Method b's attended subpopulations, the explanation for its choice.
    pub attended_b: Vec<Attended>,
}

/// Images where `a` and `b` predict different classes, in manifest order.
pub fn disagreement_report(
    a: &[PredictionRecord],
    b: &[PredictionRecord],
    manifest: &DatasetManifest,
) -> Result<Vec<Disagreement>> {
    let n = manifest.images.count();
    if a.len() != n || b.len() != n {
        return Err(AnalysisError::LengthMismatch(format!("{} and {} predictions for {n} images", a.len(), b.len())));
    }
    let mut out = Vec::new();
    for (i, (pa, pb)) in a.iter().zip(b).enumerate() {
        let expected = manifest.images.id(i);
        for p in [pa, pb] {
            if p.image_id != expected {
                return Err(AnalysisError::IdMismatch {
                    index: i,
                    expected: expected.to_string(),
                    found: p.image_id.clone(),
                });
            }
        }
        if pa.predicted_class != pb.predicted_class {
            out.push(Disagreement {
                image_id: expected.to_string(),
                true_class: manifest.labels[i],
                class_a: pa.predicted_class,
                class_b: pb.predicted_class,
                attended_b: pb.attended.clone(),
            });
        }
    }
    Ok(out)
}
