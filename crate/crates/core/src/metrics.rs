//! Evaluation suite: overall and worst-group accuracy, per-subpopulation
//! average precision, class diversity and its correlation with accuracy, and
//! the one-vector-per-class margin diagnostic.

use crate::attribute_catalog::{AttributeType, ClassCatalog};
use crate::consolidation::PredictionRecord;
use crate::embedding_store::{dot, DatasetManifest, EmbeddingTable};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub const DEFAULT_QS: [f64; 3] = [0.05, 0.10, 0.20];

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("prediction {index} is for image {found:?}, expected {expected:?}")]
    IdMismatch { index: usize, expected: String, found: String },
    #[error("dataset has no classes")]
    NoClasses,
    #[error("target group has no positives")]
    EmptyPositives,
    #[error("class {0} has no images")]
    EmptyClass(usize),
    #[error("series has zero variance or fewer than two points")]
    DegenerateVariance,
    #[error("classname vectors {0} and {1} coincide")]
    DegenerateDifference(usize, usize),
    #[error("class index {0} out of range")]
    InvalidClass(usize),
    #[error("fraction {0} outside (0, 1]")]
    InvalidFraction(f64),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// A whole class (`attribute_text = None`) or one of its subpopulations.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    #[serde(rename = "class")]
    pub class_index: usize,
    #[serde(rename = "attribute")]
    pub attribute_text: Option<String>,
}

impl GroupKey {
    pub fn class(class_index: usize) -> Self {
        Self { class_index, attribute_text: None }
    }

    pub fn subpop(class_index: usize, text: impl Into<String>) -> Self {
        Self { class_index, attribute_text: Some(text.into()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    #[serde(flatten)]
    pub key: GroupKey,
    pub accuracy: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileValue {
    pub q: f64,
    pub value: f64,
}

/// Evaluation knobs beyond the predictions themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub qs: Vec<f64>,
    /// Subpopulations smaller than this are left out of worst-subpop aggregates.
    pub min_subpop_count: usize,
    /// When set, only ground-truth attributes of these types form subpopulations.
    pub subpop_types: Option<BTreeSet<AttributeType>>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { qs: DEFAULT_QS.to_vec(), min_subpop_count: 1, subpop_types: None }
    }
}

/// Fairness-oriented accuracy summary. Worst-q values are unweighted means
/// over the `ceil(q * n)` lowest groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub overall_accuracy: f64,
    pub worst_class_q: Vec<QuantileValue>,
    pub worst_subpop_q: Vec<QuantileValue>,
    pub avg_worst_subpop: Option<f64>,
    pub worst_region: Option<f64>,
    pub worst_income: Option<f64>,
    pub num_images: usize,
    pub num_classes_evaluated: usize,
    pub num_subpops_evaluated: usize,
    /// Always `"unweighted"`; recorded for readers of the JSON report.
    pub worst_group_weighting: String,
    pub group_accuracies: Vec<GroupAccuracy>,
}

impl MetricReport {
    fn lookup(values: &[QuantileValue], q: f64) -> Option<f64> {
        values.iter().find(|v| (v.q - q).abs() < 1e-12).map(|v| v.value)
    }

    pub fn worst_class(&self, q: f64) -> Option<f64> {
        Self::lookup(&self.worst_class_q, q)
    }

    pub fn worst_subpop(&self, q: f64) -> Option<f64> {
        Self::lookup(&self.worst_subpop_q, q)
    }

    pub fn group(&self, key: &GroupKey) -> Option<&GroupAccuracy> {
        self.group_accuracies.iter().find(|g| &g.key == key)
    }

    /// Accuracy of each class, `None` for classes without images.
    pub fn class_accuracies(&self, num_classes: usize) -> Vec<Option<f64>> {
        let mut out = vec![None; num_classes];
        for g in self.group_accuracies.iter().filter(|g| g.key.attribute_text.is_none()) {
            out[g.key.class_index] = Some(g.accuracy);
        }
        out
    }
}

/// Number of groups in the worst-`q` set: `ceil(q * n)`, at least one.
pub fn worst_count(q: f64, n: usize) -> usize {
    // The epsilon keeps products like 0.1 * 30 = 3.0000000000000004 from rounding up.
    ((q * n as f64 - 1e-9).ceil() as usize).clamp(1, n.max(1))
}

/// Unweighted mean of the `ceil(q * n)` smallest values.
pub fn worst_q_mean(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = worst_count(q, sorted.len());
    Some(sorted[..m].iter().sum::<f64>() / m as f64)
}

#[derive(Default, Clone, Copy)]
struct Tally {
    correct: usize,
    total: usize,
}

impl Tally {
    fn add(&mut self, ok: bool) {
        self.total += 1;
        self.correct += usize::from(ok);
    }

    fn accuracy(self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

fn check_qs(qs: &[f64]) -> Result<()> {
    match qs.iter().find(|q| !(**q > 0.0 && **q <= 1.0)) {
        Some(&q) => Err(MetricsError::InvalidFraction(q)),
        None => Ok(()),
    }
}

/// [`accuracy_report`] over bare predicted class indices (aligned with the manifest).
pub fn accuracy_report_from_classes(
    predicted: &[usize],
    manifest: &DatasetManifest,
    opts: &ReportOptions,
) -> Result<MetricReport> {
    let n_classes = manifest.num_classes();
    if n_classes == 0 {
        return Err(MetricsError::NoClasses);
    }
    if predicted.len() != manifest.labels.len() {
        return Err(MetricsError::LengthMismatch(format!(
            "{} predictions for {} images",
            predicted.len(),
            manifest.labels.len()
        )));
    }
    check_qs(&opts.qs)?;

    let mut overall = Tally::default();
    let mut classes = vec![Tally::default(); n_classes];
    let mut subpops: BTreeMap<(usize, &str), Tally> = BTreeMap::new();
    let mut regions: BTreeMap<&str, Tally> = BTreeMap::new();
    let mut incomes: BTreeMap<&str, Tally> = BTreeMap::new();

    for (i, (&pred, &label)) in predicted.iter().zip(&manifest.labels).enumerate() {
        let ok = pred == label;
        overall.add(ok);
        classes[label].add(ok);
        let attrs: BTreeSet<&str> = manifest.attributes_of(i).iter().map(String::as_str).collect();
        for a in attrs {
            let ty = manifest.attribute_label_types.get(a).copied();
            match ty {
                Some(AttributeType::Region) => regions.entry(a).or_default().add(ok),
                Some(AttributeType::IncomeLevel) => incomes.entry(a).or_default().add(ok),
                _ => {}
            }
            let include = match &opts.subpop_types {
                None => true,
                Some(set) => ty.is_some_and(|t| set.contains(&t)),
            };
            if include {
                subpops.entry((label, a)).or_default().add(ok);
            }
        }
    }

    let class_accs: Vec<f64> = classes.iter().filter(|t| t.total > 0).map(|t| t.accuracy()).collect();
    let eligible: Vec<((usize, &str), f64)> = subpops
        .iter()
        .filter(|(_, t)| t.total >= opts.min_subpop_count.max(1))
        .map(|(&k, t)| (k, t.accuracy()))
        .collect();
    let subpop_accs: Vec<f64> = eligible.iter().map(|(_, a)| *a).collect();

    let mut per_class_min: BTreeMap<usize, f64> = BTreeMap::new();
    for &((c, _), acc) in &eligible {
        per_class_min.entry(c).and_modify(|m| *m = m.min(acc)).or_insert(acc);
    }
    let avg_worst_subpop = (!per_class_min.is_empty())
        .then(|| per_class_min.values().sum::<f64>() / per_class_min.len() as f64);

    let min_acc = |m: &BTreeMap<&str, Tally>| m.values().map(|t| t.accuracy()).reduce(f64::min);

    let mut group_accuracies: Vec<GroupAccuracy> = classes
        .iter()
        .enumerate()
        .filter(|(_, t)| t.total > 0)
        .map(|(c, t)| GroupAccuracy { key: GroupKey::class(c), accuracy: t.accuracy(), count: t.total })
        .collect();
    group_accuracies.extend(subpops.iter().map(|(&(c, a), t)| GroupAccuracy {
        key: GroupKey::subpop(c, a),
        accuracy: t.accuracy(),
        count: t.total,
    }));
    group_accuracies.sort_by(|a, b| a.key.cmp(&b.key));

    let quantiles = |vals: &[f64]| -> Vec<QuantileValue> {
        opts.qs.iter().filter_map(|&q| worst_q_mean(vals, q).map(|value| QuantileValue { q, value })).collect()
    };

    Ok(MetricReport {
        overall_accuracy: if overall.total == 0 { 0.0 } else { overall.accuracy() },
        worst_class_q: quantiles(&class_accs),
        worst_subpop_q: quantiles(&subpop_accs),
        avg_worst_subpop,
        worst_region: min_acc(&regions),
        worst_income: min_acc(&incomes),
        num_images: overall.total,
        num_classes_evaluated: class_accs.len(),
        num_subpops_evaluated: subpop_accs.len(),
        worst_group_weighting: "unweighted".into(),
        group_accuracies,
    })
}

/// Accuracy overall, per class, per ground-truth subpopulation, and the worst-group
/// aggregates. Predictions must align one-to-one (and id-for-id) with the manifest.
pub fn accuracy_report(
    predictions: &[PredictionRecord],
    manifest: &DatasetManifest,
    opts: &ReportOptions,
) -> Result<MetricReport> {
    if predictions.len() != manifest.images.count() {
        return Err(MetricsError::LengthMismatch(format!(
            "{} predictions for {} images",
            predictions.len(),
            manifest.images.count()
        )));
    }
    for (i, p) in predictions.iter().enumerate() {
        if p.image_id != manifest.images.id(i) {
            return Err(MetricsError::IdMismatch {
                index: i,
                expected: manifest.images.id(i).to_string(),
                found: p.image_id.clone(),
            });
        }
    }
    let predicted: Vec<usize> = predictions.iter().map(|p| p.predicted_class).collect();
    accuracy_report_from_classes(&predicted, manifest, opts)
}

/// Average precision of a ranking by `scores` (descending; ties keep input order).
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(MetricsError::LengthMismatch(format!("{} scores, {} labels", scores.len(), positive.len())));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    if n_pos == 0 {
        return Err(MetricsError::EmptyPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0f64;
    for (rank0, &i) in order.iter().enumerate() {
        if positive[i] {
            hits += 1;
            sum += hits as f64 / (rank0 + 1) as f64;
        }
    }
    Ok(sum / n_pos as f64)
}

fn is_member(manifest: &DatasetManifest, i: usize, target: &GroupKey) -> bool {
    manifest.labels[i] == target.class_index
        && match &target.attribute_text {
            None => true,
            Some(a) => manifest.attributes_of(i).iter().any(|x| x == a),
        }
}

/// AP of `probe` at separating the target subpopulation from images of other
/// classes. Same-class images outside the subpopulation are not ranked.
pub fn subpopulation_average_precision(
    images: &EmbeddingTable,
    manifest: &DatasetManifest,
    probe: &[f32],
    target: &GroupKey,
) -> Result<f64> {
    if images.count() != manifest.labels.len() {
        return Err(MetricsError::LengthMismatch(format!(
            "{} images, {} labels",
            images.count(),
            manifest.labels.len()
        )));
    }
    if probe.len() != images.dim() {
        return Err(MetricsError::LengthMismatch(format!("probe dim {} vs {}", probe.len(), images.dim())));
    }
    let mut scores = Vec::new();
    let mut positive = Vec::new();
    for i in 0..images.count() {
        let pos = is_member(manifest, i, target);
        if pos || manifest.labels[i] != target.class_index {
            scores.push(dot(images.row(i), probe));
            positive.push(pos);
        }
    }
    average_precision(&scores, &positive)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApGain {
    pub ap_class: f64,
    pub ap_subpop: f64,
    pub gain: f64,
}

/// AP with the classname probe, AP with the subpopulation probe, and their difference.
pub fn ap_gain(
    images: &EmbeddingTable,
    manifest: &DatasetManifest,
    classname_probe: &[f32],
    subpop_probe: &[f32],
    target: &GroupKey,
) -> Result<ApGain> {
    let ap_class = subpopulation_average_precision(images, manifest, classname_probe, target)?;
    let ap_subpop = subpopulation_average_precision(images, manifest, subpop_probe, target)?;
    Ok(ApGain { ap_class, ap_subpop, gain: ap_subpop - ap_class })
}

/// Per class: mean squared distance of its image embeddings to their
/// (unnormalized) mean.
pub fn class_diversity(images: &EmbeddingTable, manifest: &DatasetManifest) -> Result<Vec<f64>> {
    let c = manifest.num_classes();
    let dim = images.dim();
    let mut sums = vec![vec![0.0f64; dim]; c];
    let mut counts = vec![0usize; c];
    for (i, &label) in manifest.labels.iter().enumerate() {
        counts[label] += 1;
        for (s, &v) in sums[label].iter_mut().zip(images.row(i)) {
            *s += f64::from(v);
        }
    }
    if let Some(empty) = counts.iter().position(|&n| n == 0) {
        return Err(MetricsError::EmptyClass(empty));
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        s.iter_mut().for_each(|v| *v /= n as f64);
    }
    let mut acc = vec![0.0f64; c];
    for (i, &label) in manifest.labels.iter().enumerate() {
        acc[label] += images.row(i).iter().zip(&sums[label]).map(|(&x, &m)| (f64::from(x) - m).powi(2)).sum::<f64>();
    }
    Ok(acc.iter().zip(&counts).map(|(a, &n)| a / n as f64).collect())
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch(format!("{} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(MetricsError::DegenerateVariance);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::DegenerateVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties receiving their average rank.
fn fractional_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson over fractional ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch(format!("{} vs {}", x.len(), y.len())));
    }
    pearson(&fractional_ranks(x), &fractional_ranks(y))
}

pub fn diversity_accuracy_correlation(diversities: &[f64], accuracies: &[f64]) -> Result<f64> {
    pearson(diversities, accuracies)
}

/// `cos(x, c_true - c_j)` for every competitor `j`, as `(j, margin)`. All margins
/// are positive exactly when vanilla scoring gets `x` right (barring exact ties).
pub fn margin_diagnostic(x: &[f32], catalog: &ClassCatalog, true_class: usize) -> Result<Vec<(usize, f64)>> {
    let cn = catalog.classname_vectors();
    if true_class >= cn.count() {
        return Err(MetricsError::InvalidClass(true_class));
    }
    if x.len() != cn.dim() {
        return Err(MetricsError::LengthMismatch(format!("x dim {} vs {}", x.len(), cn.dim())));
    }
    let ci = cn.row(true_class);
    let x_norm = x.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt();
    (0..cn.count())
        .filter(|&j| j != true_class)
        .map(|j| {
            let diff: Vec<f64> = ci.iter().zip(cn.row(j)).map(|(&a, &b)| f64::from(a) - f64::from(b)).collect();
            let norm = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(MetricsError::DegenerateDifference(true_class, j));
            }
            let proj: f64 = x.iter().zip(&diff).map(|(&a, &d)| f64::from(a) * d).sum();
            Ok((j, proj / (norm * x_norm)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(labels: Vec<usize>, attrs: Option<Vec<Vec<&str>>>, classes: usize) -> DatasetManifest {
        let n = labels.len();
        let images = EmbeddingTable::new(
            2,
            (0..n).flat_map(|_| [1.0f32, 0.0]).collect(),
            (0..n).map(|i| format!("i{i}")).collect(),
        )
        .unwrap();
        DatasetManifest::new(
            images,
            labels,
            attrs.map(|a| a.into_iter().map(|v| v.into_iter().map(String::from).collect()).collect()),
            (0..classes).map(|c| format!("c{c}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn perfect_classifier() {
        let m = manifest(vec![0, 1, 1, 2], Some(vec![vec!["a"], vec!["b"], vec![], vec!["a", "c"]]), 3);
        let r = accuracy_report_from_classes(&m.labels.clone(), &m, &ReportOptions::default()).unwrap();
        assert_eq!(r.overall_accuracy, 1.0);
        assert!(r.worst_class_q.iter().chain(&r.worst_subpop_q).all(|v| v.value == 1.0));
        assert_eq!(r.avg_worst_subpop, Some(1.0));
    }

    #[test]
    fn uniform_accuracy() {
        // Every class: one right, one wrong.
        let m = manifest(vec![0, 0, 1, 1, 2, 2], None, 3);
        let r = accuracy_report_from_classes(&[0, 1, 1, 0, 2, 0], &m, &ReportOptions::default()).unwrap();
        assert!(r.worst_class_q.iter().all(|v| v.value == 0.5));
        assert_eq!(r.avg_worst_subpop, None);
        assert!(r.worst_subpop_q.is_empty());
    }

    #[test]
    fn worst_half_by_hand() {
        // Accuracies {1.0, 0.8, 0.5, 0.3} with ten images per class.
        let mut labels = Vec::new();
        let mut preds = Vec::new();
        for (c, right) in [(0usize, 10usize), (1, 8), (2, 5), (3, 3)] {
            for i in 0..10 {
                labels.push(c);
                preds.push(if i < right { c } else { (c + 1) % 4 });
            }
        }
        let m = manifest(labels, None, 4);
        let opts = ReportOptions { qs: vec![0.5], ..Default::default() };
        let r = accuracy_report_from_classes(&preds, &m, &opts).unwrap();
        assert!((r.worst_class(0.5).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn worst_count_rounding() {
        assert_eq!(worst_count(0.05, 20), 1);
        assert_eq!(worst_count(0.1, 30), 3);
        assert_eq!(worst_count(0.2, 7), 2);
        assert_eq!(worst_count(0.01, 5), 1);
        assert_eq!(worst_count(1.0, 5), 5);
    }

    #[test]
    fn subpops_region_income_and_filters() {
        let m = manifest(
            vec![0, 0, 1, 1],
            Some(vec![vec!["africa", "low"], vec!["europe", "high"], vec!["africa", "high"], vec!["europe"]]),
            2,
        )
        .with_label_types(
            [
                ("africa".to_string(), AttributeType::Region),
                ("europe".to_string(), AttributeType::Region),
                ("low".to_string(), AttributeType::IncomeLevel),
                ("high".to_string(), AttributeType::IncomeLevel),
            ]
            .into(),
        );
        let preds = [0, 1, 1, 1];
        let r = accuracy_report_from_classes(&preds, &m, &ReportOptions::default()).unwrap();
        assert_eq!(r.worst_region, Some(0.5));
        assert_eq!(r.worst_income, Some(0.5));
        assert_eq!(r.group(&GroupKey::subpop(0, "europe")).unwrap().accuracy, 0.0);
        assert_eq!(r.avg_worst_subpop, Some(0.5));

        let income_only = ReportOptions { subpop_types: Some([AttributeType::IncomeLevel].into()), ..Default::default() };
        let r = accuracy_report_from_classes(&preds, &m, &income_only).unwrap();
        assert_eq!(r.num_subpops_evaluated, 3);
        assert!(r.group(&GroupKey::subpop(0, "africa")).is_none());

        let big = ReportOptions { min_subpop_count: 2, ..Default::default() };
        let r = accuracy_report_from_classes(&preds, &m, &big).unwrap();
        assert_eq!(r.num_subpops_evaluated, 0);
    }

    #[test]
    fn report_errors() {
        let m = manifest(vec![0, 1], None, 2);
        assert!(matches!(
            accuracy_report_from_classes(&[0], &m, &ReportOptions::default()),
            Err(MetricsError::LengthMismatch(_))
        ));
        let bad_q = ReportOptions { qs: vec![0.0], ..Default::default() };
        assert!(accuracy_report_from_classes(&[0, 1], &m, &bad_q).is_err());
        let empty = manifest(vec![], None, 0);
        assert_eq!(accuracy_report_from_classes(&[], &empty, &ReportOptions::default()), Err(MetricsError::NoClasses));
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        assert_eq!(average_precision(&[0.9, 0.8, 0.1], &[false, true, false]).unwrap(), 0.5);
        // Ties keep input order.
        assert_eq!(average_precision(&[0.5, 0.5], &[false, true]).unwrap(), 0.5);
        assert_eq!(average_precision(&[0.5], &[false]), Err(MetricsError::EmptyPositives));
    }

    #[test]
    fn diversity_by_hand() {
        let images = EmbeddingTable::new(2, vec![1.0, 0.0, -1.0, 0.0, 0.6, 0.8, 0.6, 0.8], vec![
            "a".into(),
            "b".into(),
            "c".into(),
            "d".into(),
        ])
        .unwrap();
        let m = DatasetManifest::new(images.clone(), vec![0, 0, 1, 1], None, vec!["x".into(), "y".into()]).unwrap();
        let d = class_diversity(&images, &m).unwrap();
        assert!((d[0] - 1.0).abs() < 1e-12);
        assert_eq!(d[1], 0.0);
        let m3 = DatasetManifest::new(images.clone(), vec![0, 0, 1, 1], None, vec!["x".into(), "y".into(), "z".into()])
            .unwrap();
        assert_eq!(class_diversity(&images, &m3), Err(MetricsError::EmptyClass(2)));
    }

    #[test]
    fn correlation_examples() {
        let d = [0.1, 0.4, 0.2, 0.9];
        assert!((pearson(&d, &d).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = d.iter().map(|v| 3.0 - v).collect();
        assert!((diversity_accuracy_correlation(&d, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0], &[0.0, 1.0]), Err(MetricsError::DegenerateVariance));
        assert_eq!(pearson(&[1.0], &[0.0]), Err(MetricsError::DegenerateVariance));
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 4.0, 9.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(fractional_ranks(&[3.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5]);
    }
}
