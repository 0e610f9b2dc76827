//! Deterministic synthetic datasets on the unit hypersphere with planted
//! class and subpopulation structure.
//!
//! # Reproducibility
//!
//! The random stream is xoshiro256++ seeded with `seed` through SplitMix64
//! (`rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64`). Standard normals come
//! from Box–Muller pairs: with `u1 = ((r1 >> 11) + 1) * 2^-53` and
//! `u2 = (r2 >> 11) * 2^-53` for two consecutive 64-bit outputs,
//! `z0 = sqrt(-2 ln u1) cos(2π u2)` is returned first and
//! `z1 = sqrt(-2 ln u1) sin(2π u2)` second. Draws happen in this order:
//!
//! 1. random centers: per class, subclusters then extra attributes, `dim`
//!    normals each, normalized;
//! 2. images: per class, per subcluster, per image, `dim` normals `g`;
//!    the image is `normalize(center + dispersion * g)`.
//!
//! `dispersion` is the per-coordinate standard deviation before renormalization.

use crate::attribute_catalog::{build_catalog, AttributeType, CatalogError, ClassCatalog, Subpopulation};
use crate::attribute_catalog::save_catalog;
use crate::embedding_store::{save_manifest, DatasetManifest, EmbeddingTable, StoreError, TableKind, TableMeta};
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("typical centers of class {0} average to zero")]
    DegenerateCenter(usize),
    #[error("{n_classes} orthogonal centers do not fit in {dim} dimensions")]
    TooManyClassesForDim { n_classes: usize, dim: usize },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// Seeded normal generator; see the module docs for the exact stream.
pub struct GaussianStream {
    rng: Xoshiro256PlusPlus,
    spare: Option<f64>,
}

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self { rng: Xoshiro256PlusPlus::seed_from_u64(seed), spare: None }
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * TWO_POW_M53
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * TWO_POW_M53;
        let u2 = (self.rng.next_u64() >> 11) as f64 * TWO_POW_M53;
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// A uniformly random unit vector.
    pub fn unit_vector(&mut self, dim: usize) -> Vec<f64> {
        loop {
            let v = self.normals(dim);
            if let Some(u) = normalized(&v) {
                return u;
            }
        }
    }
}

fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n >= 1e-8).then(|| v.iter().map(|x| x / n).collect())
}

/// Where a subcluster (or catalog-only attribute) sits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Center {
    Named(CenterKind),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterKind {
    Random,
}

impl Center {
    pub const RANDOM: Center = Center::Named(CenterKind::Random);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Typicality {
    Typical,
    Atypical,
}

fn default_kinds() -> AttributeType {
    AttributeType::Kinds
}

fn yes() -> bool {
    true
}

/// A cluster of images sharing one attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subcluster {
    pub center: Center,
    pub dispersion: f64,
    pub count: usize,
    pub attribute_text: String,
    #[serde(default = "default_kinds")]
    pub attribute_type: AttributeType,
    pub typicality: Typicality,
    /// Whether the catalog lists this subcluster as a subpopulation.
    #[serde(default = "yes")]
    pub listed: bool,
}

/// A catalog subpopulation with no images behind it (e.g. an irrelevant inferred attribute).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraAttribute {
    pub center: Center,
    pub attribute_text: String,
    #[serde(default = "default_kinds")]
    pub attribute_type: AttributeType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    pub subclusters: Vec<Subcluster>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_attributes: Vec<ExtraAttribute>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub dim: usize,
    pub seed: u64,
    pub classes: Vec<ClassSpec>,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.dim < 2 {
            return bad(format!("dim {} < 2", self.dim));
        }
        if self.classes.is_empty() {
            return bad("no classes".into());
        }
        let mut names = HashSet::new();
        for (c, class) in self.classes.iter().enumerate() {
            if !names.insert(class.name.as_str()) {
                return bad(format!("duplicate class name {:?}", class.name));
            }
            if class.subclusters.is_empty() {
                return bad(format!("class {c} has no subclusters"));
            }
            if !class.subclusters.iter().any(|s| s.typicality == Typicality::Typical) {
                return bad(format!("class {c} has no typical subcluster"));
            }
            for s in &class.subclusters {
                if s.count == 0 {
                    return bad(format!("class {c} subcluster {:?} has zero images", s.attribute_text));
                }
                // Zero dispersion is the noiseless limit.
                if !(s.dispersion >= 0.0) || !s.dispersion.is_finite() {
                    return bad(format!("class {c} subcluster {:?} has dispersion {}", s.attribute_text, s.dispersion));
                }
            }
            let centers = class.subclusters.iter().map(|s| &s.center).chain(class.extra_attributes.iter().map(|e| &e.center));
            for center in centers {
                if let Center::Explicit(v) = center {
                    if v.len() != self.dim {
                        return bad(format!("class {c} has a center of length {} at dim {}", v.len(), self.dim));
                    }
                    if normalized(v).is_none() {
                        return bad(format!("class {c} has a zero center"));
                    }
                }
            }
        }
        Ok(())
    }
}

fn resolve(center: &Center, dim: usize, stream: &mut GaussianStream) -> Vec<f64> {
    match center {
        Center::Named(CenterKind::Random) => stream.unit_vector(dim),
        Center::Explicit(v) => normalized(v).expect("validated"),
    }
}

/// Samples a labeled dataset and the matching catalog. Catalog subpopulations
/// sit exactly at the listed subcluster centers; each classname vector is the
/// renormalized mean of the class's typical centers.
pub fn generate(spec: &SynthSpec) -> Result<(DatasetManifest, ClassCatalog)> {
    spec.validate()?;
    let dim = spec.dim;
    let mut stream = GaussianStream::new(spec.seed);

    let mut centers: Vec<Vec<Vec<f64>>> = Vec::with_capacity(spec.classes.len());
    let mut extras: Vec<Vec<Vec<f64>>> = Vec::with_capacity(spec.classes.len());
    for class in &spec.classes {
        centers.push(class.subclusters.iter().map(|s| resolve(&s.center, dim, &mut stream)).collect());
        extras.push(class.extra_attributes.iter().map(|e| resolve(&e.center, dim, &mut stream)).collect());
    }

    let mut classname_rows = Vec::with_capacity(spec.classes.len());
    for (c, class) in spec.classes.iter().enumerate() {
        let mut mean = vec![0.0; dim];
        for (s, center) in class.subclusters.iter().zip(&centers[c]) {
            if s.typicality == Typicality::Typical {
                mean.iter_mut().zip(center).for_each(|(m, v)| *m += v);
            }
        }
        classname_rows.push(normalized(&mean).ok_or(SynthError::DegenerateCenter(c))?);
    }

    let mut image_rows = Vec::new();
    let mut image_ids = Vec::new();
    let mut labels = Vec::new();
    let mut attrs = Vec::new();
    let mut label_types = BTreeMap::new();
    for (c, class) in spec.classes.iter().enumerate() {
        for (s, sub) in class.subclusters.iter().enumerate() {
            label_types.insert(sub.attribute_text.clone(), sub.attribute_type);
            for n in 0..sub.count {
                let g = stream.normals(dim);
                let raw: Vec<f64> = centers[c][s].iter().zip(&g).map(|(m, z)| m + sub.dispersion * z).collect();
                let x = normalized(&raw)
                    .ok_or_else(|| SynthError::InvalidSpec(format!("image {n} of class {c} collapsed to zero")))?;
                image_rows.push(x);
                image_ids.push(format!("c{c:03}s{s:02}n{n:04}"));
                labels.push(c);
                attrs.push(vec![sub.attribute_text.clone()]);
            }
        }
    }

    let meta = |kind| TableMeta { kind, source: "synthgen".into(), extra: BTreeMap::new() };
    let mut images = EmbeddingTable::from_rows_f64(dim, &image_rows, image_ids)?;
    images.meta = meta(TableKind::Images);

    let class_names: Vec<String> = spec.classes.iter().map(|c| c.name.clone()).collect();
    let mut classnames = EmbeddingTable::from_rows_f64(dim, &classname_rows, class_names.clone())?;
    classnames.meta = meta(TableKind::Classnames);

    let mut sub_rows = Vec::new();
    let mut sub_ids = Vec::new();
    let mut subpops = Vec::new();
    for (c, class) in spec.classes.iter().enumerate() {
        for (s, sub) in class.subclusters.iter().enumerate().filter(|(_, s)| s.listed) {
            subpops.push(Subpopulation {
                class_index: c,
                attribute_text: sub.attribute_text.clone(),
                attribute_type: sub.attribute_type,
                vector_row: sub_rows.len(),
            });
            sub_rows.push(centers[c][s].clone());
            sub_ids.push(format!("c{c:03}s{s:02}"));
        }
        for (e, extra) in class.extra_attributes.iter().enumerate() {
            subpops.push(Subpopulation {
                class_index: c,
                attribute_text: extra.attribute_text.clone(),
                attribute_type: extra.attribute_type,
                vector_row: sub_rows.len(),
            });
            sub_rows.push(extras[c][e].clone());
            sub_ids.push(format!("c{c:03}x{e:02}"));
        }
    }
    let mut subpop_table = if sub_rows.is_empty() {
        EmbeddingTable::empty(dim)?
    } else {
        EmbeddingTable::from_rows_f64(dim, &sub_rows, sub_ids)?
    };
    subpop_table.meta = meta(TableKind::Subpops);

    let catalog = build_catalog(class_names.clone(), classnames, subpops, subpop_table)?;
    let manifest = DatasetManifest::new(images, labels, Some(attrs), class_names)?.with_label_types(label_types);
    Ok((manifest, catalog))
}

/// Writes `manifest.json`, `images.embd` and a `catalog/` directory.
pub fn save_dataset(dir: &Path, manifest: &DatasetManifest, catalog: &ClassCatalog) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| StoreError::IoFailure { path: dir.to_path_buf(), source })?;
    save_manifest(manifest, &dir.join("manifest.json"), "images.embd")?;
    save_catalog(catalog, &dir.join("catalog"))?;
    Ok(())
}

/// Gram–Schmidt orthonormal directions.
pub fn orthonormal_directions(n: usize, dim: usize, stream: &mut GaussianStream) -> Result<Vec<Vec<f64>>> {
    if n > dim {
        return Err(SynthError::TooManyClassesForDim { n_classes: n, dim });
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v = stream.normals(dim);
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        if let Some(u) = normalized(&v) {
            basis.push(u);
        }
    }
    Ok(basis)
}

/// Single-subcluster classes whose dispersion rises linearly from `low` to
/// `high`, with orthonormal (or independent random) centers.
pub fn plant_hardness_gradient(
    dim: usize,
    seed: u64,
    n_classes: usize,
    images_per_class: usize,
    dispersion_range: (f64, f64),
    orthogonal: bool,
) -> Result<SynthSpec> {
    let (low, high) = dispersion_range;
    if !(low < high) || low < 0.0 {
        return Err(SynthError::InvalidSpec(format!("dispersion range ({low}, {high}) must satisfy 0 <= low < high")));
    }
    if n_classes == 0 {
        return Err(SynthError::InvalidSpec("no classes".into()));
    }
    let mut stream = GaussianStream::new(seed ^ 0x5eed_0fc3_a7e5);
    let centers = if orthogonal {
        orthonormal_directions(n_classes, dim, &mut stream)?
    } else {
        (0..n_classes).map(|_| stream.unit_vector(dim)).collect()
    };
    let classes = centers
        .into_iter()
        .enumerate()
        .map(|(c, center)| {
            let t = if n_classes == 1 { 0.0 } else { c as f64 / (n_classes - 1) as f64 };
            ClassSpec {
                name: format!("class{c}"),
                subclusters: vec![Subcluster {
                    center: Center::Explicit(center),
                    dispersion: low + (high - low) * t,
                    count: images_per_class,
                    attribute_text: format!("typical class{c}"),
                    attribute_type: AttributeType::Kinds,
                    typicality: Typicality::Typical,
                    listed: true,
                }],
                extra_attributes: Vec::new(),
            }
        })
        .collect();
    Ok(SynthSpec { dim, seed, classes })
}

fn plane_vector(dim: usize, a: f64, b: f64) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[0] = a;
    v[1] = b;
    v
}

/// Fox/wolf geometry in the plane of the first two axes: typical fox at
/// `e0`, typical wolf at `e1`, Arctic fox 65° from `e0` (25° from `e1`) and
/// red wolf 25° from `e0` (65° from `e1`).
pub fn fox_wolf_spec(dim: usize, dispersion: f64, count: usize, seed: u64) -> SynthSpec {
    let (c25, c65) = (25f64.to_radians().cos(), 65f64.to_radians().cos());
    let sub = |center, text: &str, typicality| Subcluster {
        center: Center::Explicit(center),
        dispersion,
        count,
        attribute_text: text.into(),
        attribute_type: AttributeType::Kinds,
        typicality,
        listed: true,
    };
    SynthSpec {
        dim,
        seed,
        classes: vec![
            ClassSpec {
                name: "fox".into(),
                subclusters: vec![
                    sub(plane_vector(dim, 1.0, 0.0), "red fox", Typicality::Typical),
                    sub(plane_vector(dim, c65, c25), "Arctic fox", Typicality::Atypical),
                ],
                extra_attributes: Vec::new(),
            },
            ClassSpec {
                name: "wolf".into(),
                subclusters: vec![
                    sub(plane_vector(dim, 0.0, 1.0), "gray wolf", Typicality::Typical),
                    sub(plane_vector(dim, c25, c65), "red wolf", Typicality::Atypical),
                ],
                extra_attributes: Vec::new(),
            },
        ],
    }
}

/// Knobs for [`planted_atypical_spec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedAtypical {
    pub dim: usize,
    pub seed: u64,
    pub n_classes: usize,
    /// Images in each class's typical subcluster.
    pub typical_count: usize,
    /// Images in each atypical subcluster.
    pub atypical_count: usize,
    /// Classes (the first ones) that carry an atypical subcluster.
    pub classes_with_atypical: usize,
    pub dispersion: f64,
    /// Cosine between an atypical center and the typical center of the class it resembles.
    pub atypical_pull: f64,
    /// Catalog-only attributes per class, scattered around the class's typical center.
    pub descriptors_per_class: usize,
    /// Cosine between a descriptor and its class's typical center.
    pub descriptor_alignment: f64,
    /// Catalog-only attributes per class placed towards a neighbouring class.
    pub spurious_per_class: usize,
    /// Cosine between a spurious attribute and the neighbouring class's typical center.
    pub spurious_pull: f64,
}

impl Default for PlantedAtypical {
    fn default() -> Self {
        Self {
            dim: 64,
            seed: 7,
            n_classes: 20,
            typical_count: 60,
            atypical_count: 30,
            classes_with_atypical: 2,
            dispersion: 0.2,
            atypical_pull: 0.8,
            descriptors_per_class: 12,
            descriptor_alignment: 0.8,
            spurious_per_class: 1,
            spurious_pull: 0.95,
        }
    }
}

/// Unit vector at cosine `cos` from unit `anchor`, rotated towards a fresh
/// random direction orthogonal to it.
fn at_cosine(anchor: &[f64], cos: f64, stream: &mut GaussianStream) -> Vec<f64> {
    loop {
        let r = stream.normals(anchor.len());
        let p: f64 = r.iter().zip(anchor).map(|(x, y)| x * y).sum();
        let perp: Vec<f64> = r.iter().zip(anchor).map(|(x, y)| x - p * y).collect();
        if let Some(u) = normalized(&perp) {
            let sin = (1.0 - cos * cos).max(0.0).sqrt();
            return anchor.iter().zip(&u).map(|(a, b)| cos * a + sin * b).collect();
        }
    }
}

/// Classes with orthonormal typical centers, an atypical subcluster pulled
/// towards the next class's typical center, descriptor attributes near the
/// typical center, and spurious attributes pulled towards the previous class.
pub fn planted_atypical_spec(p: &PlantedAtypical) -> Result<SynthSpec> {
    let mut stream = GaussianStream::new(p.seed ^ 0xa7_1c_a1);
    let typical = orthonormal_directions(p.n_classes, p.dim, &mut stream)?;
    let n = p.n_classes;
    let mut classes = Vec::with_capacity(n);
    for c in 0..n {
        let next = &typical[(c + 1) % n];
        let prev = &typical[(c + n - 1) % n];
        let mut subclusters = vec![Subcluster {
            center: Center::Explicit(typical[c].clone()),
            dispersion: p.dispersion,
            count: p.typical_count,
            attribute_text: format!("common {c}"),
            attribute_type: AttributeType::Kinds,
            typicality: Typicality::Typical,
            listed: true,
        }];
        if c < p.classes_with_atypical {
            subclusters.push(Subcluster {
                center: Center::Explicit(at_cosine(next, p.atypical_pull, &mut stream)),
                dispersion: p.dispersion,
                count: p.atypical_count,
                attribute_text: format!("rare {c}"),
                attribute_type: AttributeType::Kinds,
                typicality: Typicality::Atypical,
                listed: true,
            });
        }
        let mut extra_attributes: Vec<ExtraAttribute> = (0..p.descriptors_per_class)
            .map(|d| ExtraAttribute {
                center: Center::Explicit(at_cosine(&typical[c], p.descriptor_alignment, &mut stream)),
                attribute_text: format!("descriptor {c}.{d}"),
                attribute_type: AttributeType::Descriptors,
            })
            .collect();
        extra_attributes.extend((0..p.spurious_per_class).map(|d| ExtraAttribute {
            center: Center::Explicit(at_cosine(prev, p.spurious_pull, &mut stream)),
            attribute_text: format!("spurious {c}.{d}"),
            attribute_type: AttributeType::States,
        }));
        classes.push(ClassSpec { name: format!("class{c:02}"), subclusters, extra_attributes });
    }
    Ok(SynthSpec { dim: p.dim, seed: p.seed, classes })
}

/// Many classes whose image-to-vector cosines all sit in a narrow band, the
/// regime where softmax-product scores lose resolution.
///
/// Axis 0 is shared by everything; each catalog entry owns one further axis.
/// Every entry vector is `sqrt(shared) e0 + sqrt(1 - shared) e_own`. An image
/// of class `c` puts weight on one of its class's entry axes (so its cosine to
/// that entry is `target`), small Gaussian weight (`jitter`) on every other
/// entry axis, and the rest of its norm on a final free axis. Returns the
/// manifest and a catalog with `entries_per_class - 1` kinds per class.
pub fn narrow_band_instance(
    n_classes: usize,
    entries_per_class: usize,
    images: usize,
    shared: f64,
    target: f64,
    jitter: f64,
    seed: u64,
) -> Result<(DatasetManifest, ClassCatalog)> {
    if entries_per_class == 0 || n_classes == 0 {
        return Err(SynthError::InvalidSpec("need at least one class and one entry per class".into()));
    }
    let n_entries = n_classes * entries_per_class;
    let dim = n_entries + 2;
    let free = dim - 1;
    let (a, b) = (shared.sqrt(), (1.0 - shared).sqrt());
    let axis = |c: usize, e: usize| 1 + c * entries_per_class + e;
    let entry_vec = |c: usize, e: usize| {
        let mut v = vec![0.0; dim];
        v[0] = a;
        v[axis(c, e)] = b;
        v
    };
    let mut stream = GaussianStream::new(seed);
    let mut rows = Vec::with_capacity(images);
    let mut labels = Vec::with_capacity(images);
    let mut attrs = Vec::with_capacity(images);
    for i in 0..images {
        let c = i % n_classes;
        let e = (stream.uniform() * entries_per_class as f64) as usize % entries_per_class;
        let mut x = vec![0.0; dim];
        x[0] = a;
        for v in x.iter_mut().take(free).skip(1) {
            *v = jitter * stream.normal();
        }
        // cos(x, entry) = a * a + b * x[axis]
        x[axis(c, e)] = (target - shared) / b;
        let used: f64 = x.iter().map(|v| v * v).sum();
        if used >= 1.0 {
            return Err(SynthError::InvalidSpec(format!("image {i} needs norm {used} > 1; lower jitter")));
        }
        x[free] = (1.0 - used).sqrt();
        rows.push(x);
        labels.push(c);
        attrs.push(vec![if e == 0 { "classname".to_string() } else { format!("kind {e}") }]);
    }
    let names: Vec<String> = (0..n_classes).map(|c| format!("class{c:03}")).collect();
    let classnames = EmbeddingTable::from_rows_f64(dim, &(0..n_classes).map(|c| entry_vec(c, 0)).collect::<Vec<_>>(), names.clone())?;
    let mut sub_rows = Vec::new();
    let mut sub_ids = Vec::new();
    let mut subpops = Vec::new();
    for c in 0..n_classes {
        for e in 1..entries_per_class {
            subpops.push(Subpopulation {
                class_index: c,
                attribute_text: format!("kind {e}"),
                attribute_type: AttributeType::Kinds,
                vector_row: sub_rows.len(),
            });
            sub_rows.push(entry_vec(c, e));
            sub_ids.push(format!("c{c:03}k{e}"));
        }
    }
    let sub_table =
        if sub_rows.is_empty() { EmbeddingTable::empty(dim)? } else { EmbeddingTable::from_rows_f64(dim, &sub_rows, sub_ids)? };
    let images_table = EmbeddingTable::from_rows_f64(dim, &rows, (0..images).map(|i| format!("img{i:05}")).collect())?;
    let catalog = build_catalog(names.clone(), classnames, subpops, sub_table)?;
    let manifest = DatasetManifest::new(images_table, labels, Some(attrs), names)?;
    Ok((manifest, catalog))
}
