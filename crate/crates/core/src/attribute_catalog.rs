//! Classes enriched with typed attribute subpopulations.
//!
//! A [`ClassCatalog`] owns every vector a class may be scored against: the
//! external subpopulation rows followed by one synthetic `classname` entry per
//! class. Each class's pool lists its entries in that order, so the classname
//! vector is always the last member of its own pool.

use crate::embedding_store::{
    dot, load_embedding_table, save_embedding_table, EmbeddingTable, StoreError, TableKind,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("count mismatch: {0}")]
    CountMismatch(String),
    #[error("dimension mismatch: classname vectors have dim {classnames}, subpopulation vectors dim {subpops}")]
    DimensionMismatch { classnames: usize, subpops: usize },
    #[error("duplicate subpopulation ({class}, {text:?}, {attribute_type})")]
    DuplicateSubpopulation { class: usize, text: String, attribute_type: AttributeType },
    #[error("dangling index: {0}")]
    DanglingRowIndex(String),
    #[error("subpopulation {0} has empty attribute text")]
    EmptyAttributeText(usize),
    #[error("subpopulation {0} uses the reserved type `classname`")]
    ReservedType(usize),
    #[error("unknown attribute type {0:?}")]
    UnknownAttributeType(String),
    #[error("malformed catalog file {path}: {message}")]
    MalformedFile { path: String, message: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub type Result<T> = std::result::Result<T, CatalogError>;

/// The axis along which a subpopulation varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeType {
    Kinds,
    States,
    Descriptors,
    CoOccurringObjects,
    Backgrounds,
    IncomeLevel,
    Region,
    Country,
    AutoGlobal,
    /// The bare class vector.
    Classname,
}

impl AttributeType {
    pub const ALL: [AttributeType; 10] = [
        AttributeType::Kinds,
        AttributeType::States,
        AttributeType::Descriptors,
        AttributeType::CoOccurringObjects,
        AttributeType::Backgrounds,
        AttributeType::IncomeLevel,
        AttributeType::Region,
        AttributeType::Country,
        AttributeType::AutoGlobal,
        AttributeType::Classname,
    ];

    /// Every inferable type in taxonomy order (class-specific, then
    /// class-adjacent, then class-agnostic). Excludes `classname`.
    pub const TAXONOMY_ORDER: [AttributeType; 9] = [
        AttributeType::Kinds,
        AttributeType::States,
        AttributeType::Descriptors,
        AttributeType::CoOccurringObjects,
        AttributeType::Backgrounds,
        AttributeType::IncomeLevel,
        AttributeType::Region,
        AttributeType::Country,
        AttributeType::AutoGlobal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttributeType::Kinds => "kinds",
            AttributeType::States => "states",
            AttributeType::Descriptors => "descriptors",
            AttributeType::CoOccurringObjects => "co_occurring_objects",
            AttributeType::Backgrounds => "backgrounds",
            AttributeType::IncomeLevel => "income_level",
            AttributeType::Region => "region",
            AttributeType::Country => "country",
            AttributeType::AutoGlobal => "auto_global",
            AttributeType::Classname => "classname",
        }
    }
}

impl fmt::Display for AttributeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttributeType {
    type Err = CatalogError;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| CatalogError::UnknownAttributeType(s.to_string()))
    }
}

/// Parses a comma-separated list of attribute types.
pub fn parse_attribute_types(list: &str) -> Result<Vec<AttributeType>> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

/// One attribute-conditioned vector belonging to a class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subpopulation {
    #[serde(rename = "class")]
    pub class_index: usize,
    #[serde(rename = "text")]
    pub attribute_text: String,
    #[serde(rename = "type")]
    pub attribute_type: AttributeType,
    #[serde(rename = "row")]
    pub vector_row: usize,
}

/// A validated catalog. Entries `0..external_len` come from the caller; the
/// remaining `C` entries are the per-class classname entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCatalog {
    class_names: Vec<String>,
    classname_vectors: EmbeddingTable,
    entries: Vec<Subpopulation>,
    vectors: EmbeddingTable,
    external_len: usize,
    external_rows: usize,
    pools: Vec<Vec<usize>>,
}

fn classname_row_id(class: usize) -> String {
    format!("#classname/{class}")
}

/// Validates the inputs and appends one `classname` entry per class.
pub fn build_catalog(
    class_names: Vec<String>,
    classname_vectors: EmbeddingTable,
    subpops: Vec<Subpopulation>,
    subpop_vectors: EmbeddingTable,
) -> Result<ClassCatalog> {
    let c = class_names.len();
    if classname_vectors.count() != c {
        return Err(CatalogError::CountMismatch(format!(
            "{c} class names but {} classname vectors",
            classname_vectors.count()
        )));
    }
    if classname_vectors.dim() != subpop_vectors.dim() {
        return Err(CatalogError::DimensionMismatch {
            classnames: classname_vectors.dim(),
            subpops: subpop_vectors.dim(),
        });
    }
    let mut seen = HashSet::new();
    for (i, s) in subpops.iter().enumerate() {
        if s.class_index >= c {
            return Err(CatalogError::DanglingRowIndex(format!(
                "subpopulation {i} references class {} of {c}",
                s.class_index
            )));
        }
        if s.vector_row >= subpop_vectors.count() {
            return Err(CatalogError::DanglingRowIndex(format!(
                "subpopulation {i} references row {} of {}",
                s.vector_row,
                subpop_vectors.count()
            )));
        }
        if s.attribute_text.trim().is_empty() {
            return Err(CatalogError::EmptyAttributeText(i));
        }
        if s.attribute_type == AttributeType::Classname {
            return Err(CatalogError::ReservedType(i));
        }
        if !seen.insert((s.class_index, s.attribute_text.as_str(), s.attribute_type)) {
            return Err(CatalogError::DuplicateSubpopulation {
                class: s.class_index,
                text: s.attribute_text.clone(),
                attribute_type: s.attribute_type,
            });
        }
    }

    let external_len = subpops.len();
    let external_rows = subpop_vectors.count();
    let renamed = EmbeddingTable::with_meta(
        classname_vectors.dim(),
        classname_vectors.data().to_vec(),
        (0..c).map(classname_row_id).collect(),
        classname_vectors.meta.clone(),
    )?;
    let mut vectors = subpop_vectors.concat(&renamed)?;
    vectors.meta.kind = TableKind::Subpops;

    let mut entries = subpops;
    for (i, name) in class_names.iter().enumerate() {
        entries.push(Subpopulation {
            class_index: i,
            attribute_text: name.clone(),
            attribute_type: AttributeType::Classname,
            vector_row: external_rows + i,
        });
    }
    let mut pools = vec![Vec::new(); c];
    for (e, s) in entries.iter().enumerate() {
        pools[s.class_index].push(e);
    }
    Ok(ClassCatalog { class_names, classname_vectors, entries, vectors, external_len, external_rows, pools })
}

impl ClassCatalog {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn dim(&self) -> usize {
        self.vectors.dim()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn classname_vectors(&self) -> &EmbeddingTable {
        &self.classname_vectors
    }

    /// All entries, classname entries included.
    pub fn entries(&self) -> &[Subpopulation] {
        &self.entries
    }

    /// Entries supplied by the caller (no classname entries).
    pub fn external_subpops(&self) -> &[Subpopulation] {
        &self.entries[..self.external_len]
    }

    /// The caller-supplied subpopulation table (no classname rows).
    pub fn external_vectors(&self) -> EmbeddingTable {
        let rows: Vec<usize> = (0..self.external_rows).collect();
        let mut t = self.vectors.select(&rows);
        t.meta.kind = TableKind::Subpops;
        t
    }

    /// Combined table: external rows followed by classname rows.
    pub fn vectors(&self) -> &EmbeddingTable {
        &self.vectors
    }

    pub fn entry_vector(&self, entry: usize) -> &[f32] {
        self.vectors.row(self.entries[entry].vector_row)
    }

    /// Entry indices of class `c`'s pool, in catalog order.
    pub fn pool(&self, c: usize) -> &[usize] {
        &self.pools[c]
    }

    pub fn pools(&self) -> &[Vec<usize>] {
        &self.pools
    }

    pub fn max_pool_size(&self) -> usize {
        self.pools.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Entry index of class `c`'s classname entry.
    pub fn classname_entry(&self, c: usize) -> usize {
        self.external_len + c
    }

    /// Attribute types present among the external entries.
    pub fn attribute_types(&self) -> BTreeSet<AttributeType> {
        self.external_subpops().iter().map(|s| s.attribute_type).collect()
    }
}

/// Keeps only entries whose type is in `types` (the classname entries always
/// stay). Also returns, for each entry of the result, the index of the entry
/// it came from.
pub fn restrict_with_map(catalog: &ClassCatalog, types: &BTreeSet<AttributeType>) -> (ClassCatalog, Vec<usize>) {
    let kept: Vec<usize> = (0..catalog.external_len)
        .filter(|&e| types.contains(&catalog.entries[e].attribute_type))
        .collect();
    let mut rows: Vec<usize> = kept.iter().map(|&e| catalog.entries[e].vector_row).collect();
    rows.sort_unstable();
    rows.dedup();
    let remap: BTreeMap<usize, usize> = rows.iter().enumerate().map(|(new, &old)| (old, new)).collect();
    let subpops = kept
        .iter()
        .map(|&e| {
            let s = &catalog.entries[e];
            Subpopulation { vector_row: remap[&s.vector_row], ..s.clone() }
        })
        .collect();
    let mut table = catalog.vectors.select(&rows);
    table.meta = catalog.external_vectors().meta;
    let restricted = build_catalog(catalog.class_names.clone(), catalog.classname_vectors.clone(), subpops, table)
        .expect("a restriction of a valid catalog is valid");
    let mut map = kept;
    map.extend(catalog.external_len..catalog.entries.len());
    (restricted, map)
}

/// Restricts the catalog to `types ∪ {classname}`.
pub fn restrict_to_attribute_types(catalog: &ClassCatalog, types: &BTreeSet<AttributeType>) -> ClassCatalog {
    restrict_with_map(catalog, types).0
}

/// A pair of entries from different classes that look alike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub class_a: usize,
    pub class_b: usize,
    pub attr_a: String,
    pub attr_b: String,
    pub type_a: AttributeType,
    pub type_b: AttributeType,
    pub cosine: f64,
    pub exact_text: bool,
}

fn normalize_text(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Entry pairs from distinct classes whose texts match case-insensitively
/// (when `text_match`) or whose vectors have cosine above `cosine_threshold`.
/// Sorted by descending cosine; each pair appears once with `class_a < class_b`.
pub fn cross_class_attribute_overlaps(
    catalog: &ClassCatalog,
    text_match: bool,
    cosine_threshold: f64,
) -> Vec<OverlapReport> {
    let texts: Vec<String> = catalog.entries.iter().map(|s| normalize_text(&s.attribute_text)).collect();
    let mut out = Vec::new();
    for (ea, a) in catalog.entries.iter().enumerate() {
        for (eb, b) in catalog.entries.iter().enumerate() {
            if a.class_index >= b.class_index {
                continue;
            }
            let cosine = dot(catalog.entry_vector(ea), catalog.entry_vector(eb));
            let exact_text = text_match && texts[ea] == texts[eb];
            if exact_text || cosine > cosine_threshold {
                out.push((
                    ea,
                    eb,
                    OverlapReport {
                        class_a: a.class_index,
                        class_b: b.class_index,
                        attr_a: a.attribute_text.clone(),
                        attr_b: b.attribute_text.clone(),
                        type_a: a.attribute_type,
                        type_b: b.attribute_type,
                        cosine,
                        exact_text,
                    },
                ));
            }
        }
    }
    out.sort_by(|x, y| y.2.cosine.total_cmp(&x.2.cosine).then((x.0, x.1).cmp(&(y.0, y.1))));
    out.into_iter().map(|(_, _, r)| r).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CatalogFile {
    class_names: Vec<String>,
    subpops: Vec<Subpopulation>,
    #[serde(flatten)]
    extra: BTreeMap<String, serde_json::Value>,
}

pub const CATALOG_JSON: &str = "catalog.json";
pub const CLASSNAMES_EMBD: &str = "classnames.embd";
pub const SUBPOPS_EMBD: &str = "subpops.embd";

/// Writes `catalog.json`, `classnames.embd` and `subpops.embd` into `dir`.
pub fn save_catalog(catalog: &ClassCatalog, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| StoreError::IoFailure { path: dir.to_path_buf(), source })?;
    save_embedding_table(&catalog.classname_vectors, &dir.join(CLASSNAMES_EMBD))?;
    save_embedding_table(&catalog.external_vectors(), &dir.join(SUBPOPS_EMBD))?;
    let file = CatalogFile {
        class_names: catalog.class_names.clone(),
        subpops: catalog.external_subpops().to_vec(),
        extra: BTreeMap::new(),
    };
    let path = dir.join(CATALOG_JSON);
    let mut json = serde_json::to_vec_pretty(&file).expect("catalog serializes");
    json.push(b'\n');
    fs::write(&path, json).map_err(|source| StoreError::IoFailure { path, source })?;
    Ok(())
}

pub fn load_catalog(dir: &Path) -> Result<ClassCatalog> {
    let path = dir.join(CATALOG_JSON);
    let text = fs::read(&path).map_err(|source| StoreError::IoFailure { path: path.clone(), source })?;
    let file: CatalogFile = serde_json::from_slice(&text)
        .map_err(|e| CatalogError::MalformedFile { path: path.display().to_string(), message: e.to_string() })?;
    let classnames = load_embedding_table(&dir.join(CLASSNAMES_EMBD))?;
    let subpops = load_embedding_table(&dir.join(SUBPOPS_EMBD))?;
    build_catalog(file.class_names, classnames, file.subpops, subpops)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    fn table(rows: &[Vec<f64>], prefix: &str) -> EmbeddingTable {
        let dim = rows.first().map(Vec::len).unwrap_or(4);
        EmbeddingTable::from_rows_f64(dim, rows, (0..rows.len()).map(|i| format!("{prefix}{i}")).collect()).unwrap()
    }

    fn sp(class: usize, text: &str, t: AttributeType, row: usize) -> Subpopulation {
        Subpopulation { class_index: class, attribute_text: text.into(), attribute_type: t, vector_row: row }
    }

    /// fox/wolf with two kinds each plus one background for fox.
    pub(crate) fn fox_wolf(with_background: bool) -> ClassCatalog {
        let classnames = table(&[vec![1., 0., 0., 0.], vec![0., 1., 0., 0.]], "c");
        let mut rows = vec![
            vec![0.42, 0.9, 0., 0.],
            vec![1., 0.1, 0., 0.],
            vec![0.1, 1., 0., 0.],
            vec![0.9, 0.42, 0., 0.],
        ];
        let mut subs = vec![
            sp(0, "Arctic fox", AttributeType::Kinds, 0),
            sp(0, "red fox", AttributeType::Kinds, 1),
            sp(1, "gray wolf", AttributeType::Kinds, 2),
            sp(1, "red wolf", AttributeType::Kinds, 3),
        ];
        if with_background {
            rows.push(vec![0., 0., 1., 0.]);
            subs.push(sp(0, "in the snow", AttributeType::Backgrounds, 4));
        }
        build_catalog(vec!["fox".into(), "wolf".into()], classnames, subs, table(&rows, "s")).unwrap()
    }

    #[test]
    fn minimal_catalog_has_classname_entries() {
        let c = build_catalog(
            vec!["a".into(), "b".into()],
            table(&[vec![1., 0.], vec![0., 1.]], "c"),
            vec![],
            EmbeddingTable::empty(2).unwrap(),
        )
        .unwrap();
        assert_eq!(c.entries().len(), 2);
        assert!(c.entries().iter().all(|s| s.attribute_type == AttributeType::Classname));
        assert_eq!(c.pool(1), &[1]);
    }

    #[test]
    fn dangling_class_index() {
        let err = build_catalog(
            vec!["a".into(), "b".into()],
            table(&[vec![1., 0.], vec![0., 1.]], "c"),
            vec![sp(5, "x", AttributeType::Kinds, 0)],
            table(&[vec![1., 1.]], "s"),
        )
        .unwrap_err();
        assert!(matches!(err, CatalogError::DanglingRowIndex(_)));
    }

    #[test]
    fn validation_errors() {
        let cn = || table(&[vec![1., 0.], vec![0., 1.]], "c");
        let sv = || table(&[vec![1., 1.]], "s");
        let err = build_catalog(vec!["a".into()], cn(), vec![], sv()).unwrap_err();
        assert!(matches!(err, CatalogError::CountMismatch(_)));
        let dup = vec![sp(0, "x", AttributeType::Kinds, 0), sp(0, "x", AttributeType::Kinds, 0)];
        let err = build_catalog(vec!["a".into(), "b".into()], cn(), dup, sv()).unwrap_err();
        assert!(matches!(err, CatalogError::DuplicateSubpopulation { .. }));
        // Same text under another type is a distinct subpopulation.
        let ok = vec![sp(0, "x", AttributeType::Kinds, 0), sp(0, "x", AttributeType::States, 0)];
        assert!(build_catalog(vec!["a".into(), "b".into()], cn(), ok, sv()).is_ok());
        let err = build_catalog(vec!["a".into(), "b".into()], cn(), vec![sp(0, "x", AttributeType::Kinds, 3)], sv())
            .unwrap_err();
        assert!(matches!(err, CatalogError::DanglingRowIndex(_)));
        let err = build_catalog(vec!["a".into(), "b".into()], cn(), vec![sp(0, "  ", AttributeType::Kinds, 0)], sv())
            .unwrap_err();
        assert!(matches!(err, CatalogError::EmptyAttributeText(0)));
        let err =
            build_catalog(vec!["a".into(), "b".into()], cn(), vec![sp(0, "a", AttributeType::Classname, 0)], sv())
                .unwrap_err();
        assert!(matches!(err, CatalogError::ReservedType(0)));
    }

    #[test]
    fn fox_wolf_counts() {
        let c = fox_wolf(false);
        assert_eq!(c.entries().len(), 6);
        let kinds = restrict_to_attribute_types(&fox_wolf(true), &[AttributeType::Kinds].into());
        assert_eq!(kinds.entries().len(), 6);
        assert_eq!(kinds, c);
    }

    #[test]
    fn restrict_base_and_full() {
        let c = fox_wolf(true);
        let vanilla = restrict_to_attribute_types(&c, &[AttributeType::Classname].into());
        assert_eq!(vanilla.entries().len(), 2);
        assert_eq!(vanilla.pool(0), &[0]);
        let all: BTreeSet<_> = AttributeType::ALL.into_iter().collect();
        assert_eq!(restrict_to_attribute_types(&c, &all), c);
    }

    #[test]
    fn restrict_map_points_at_source_entries() {
        let c = fox_wolf(true);
        let (r, map) = restrict_with_map(&c, &[AttributeType::Backgrounds].into());
        assert_eq!(map, vec![4, 5, 6]);
        for (new, &old) in map.iter().enumerate() {
            assert_eq!(r.entries()[new].attribute_text, c.entries()[old].attribute_text);
            assert_eq!(r.entry_vector(new), c.entry_vector(old));
        }
    }

    #[test]
    fn overlaps_text_and_cosine() {
        // ape and monkey both list "gibbon"; bed lists "rug", which is also a class.
        let classnames = table(
            &[vec![1., 0., 0., 0.], vec![0., 1., 0., 0.], vec![0., 0., 1., 0.], vec![0., 0., 0., 1.]],
            "c",
        );
        let subs = table(&[vec![1., 1., 0., 0.], vec![1., 1., 0.1, 0.], vec![0., 0., 1., 1.]], "s");
        let cat = build_catalog(
            vec!["ape".into(), "monkey".into(), "bed".into(), "rug".into()],
            classnames,
            vec![
                sp(0, "gibbon", AttributeType::Kinds, 0),
                sp(1, "Gibbon ", AttributeType::Kinds, 1),
                sp(2, "rug", AttributeType::CoOccurringObjects, 2),
            ],
            subs,
        )
        .unwrap();
        let rep = cross_class_attribute_overlaps(&cat, true, 0.999);
        assert_eq!(rep.len(), 2);
        assert!(rep.iter().any(|r| r.class_a == 0 && r.class_b == 1 && r.exact_text));
        assert!(rep
            .iter()
            .any(|r| r.class_a == 2 && r.class_b == 3 && r.exact_text && r.type_b == AttributeType::Classname));
        assert!(rep.windows(2).all(|w| w[0].cosine >= w[1].cosine));
        assert!(rep.iter().all(|r| r.class_a < r.class_b));
    }

    #[test]
    fn no_overlap_for_orthogonal_disjoint() {
        let cat = build_catalog(
            vec!["a".into(), "b".into()],
            table(&[vec![1., 0., 0., 0.], vec![0., 1., 0., 0.]], "c"),
            vec![sp(0, "x", AttributeType::Kinds, 0), sp(1, "y", AttributeType::Kinds, 1)],
            table(&[vec![0., 0., 1., 0.], vec![0., 0., 0., 1.]], "s"),
        )
        .unwrap();
        assert!(cross_class_attribute_overlaps(&cat, true, 0.9).is_empty());
    }

    #[test]
    fn catalog_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = fox_wolf(true);
        save_catalog(&c, dir.path()).unwrap();
        assert_eq!(load_catalog(dir.path()).unwrap(), c);
    }

    #[test]
    fn parse_types() {
        assert_eq!(
            parse_attribute_types("kinds, co_occurring_objects").unwrap(),
            vec![AttributeType::Kinds, AttributeType::CoOccurringObjects]
        );
        assert!(parse_attribute_types("kinds,colour").is_err());
    }
}
