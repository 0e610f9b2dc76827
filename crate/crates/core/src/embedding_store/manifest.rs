use super::{load_embedding_table, save_embedding_table, EmbeddingTable, Result, StoreError};
use crate::attribute_catalog::AttributeType;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

/// Labeled image embeddings. Ground-truth attributes are only consumed by metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub images: EmbeddingTable,
    pub labels: Vec<usize>,
    pub attribute_labels: Option<Vec<Vec<String>>>,
    /// Optional typing of ground-truth attribute strings (e.g. `"Africa" -> region`).
    pub attribute_label_types: BTreeMap<String, AttributeType>,
    pub class_names: Vec<String>,
}

impl DatasetManifest {
    pub fn new(
        images: EmbeddingTable,
        labels: Vec<usize>,
        attribute_labels: Option<Vec<Vec<String>>>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let m = Self { images, labels, attribute_labels, attribute_label_types: BTreeMap::new(), class_names };
        m.validate()?;
        Ok(m)
    }

    pub fn with_label_types(mut self, types: BTreeMap<String, AttributeType>) -> Self {
        self.attribute_label_types = types;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.images.count() {
            return Err(StoreError::InvalidManifest(format!(
                "{} labels for {} images",
                self.labels.len(),
                self.images.count()
            )));
        }
        if let Some((i, &l)) = self.labels.iter().enumerate().find(|(_, &l)| l >= self.class_names.len()) {
            return Err(StoreError::InvalidManifest(format!(
                "image {i} has label {l} but there are {} classes",
                self.class_names.len()
            )));
        }
        if let Some(attrs) = &self.attribute_labels {
            if attrs.len() != self.images.count() {
                return Err(StoreError::InvalidManifest(format!(
                    "{} attribute lists for {} images",
                    attrs.len(),
                    self.images.count()
                )));
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Attribute labels of image `i` (empty when absent).
    pub fn attributes_of(&self, i: usize) -> &[String] {
        self.attribute_labels.as_ref().map(|a| a[i].as_slice()).unwrap_or(&[])
    }

    /// The same dataset with images reordered by `perm` (`perm[new] = old`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            images: self.images.select(perm),
            labels: perm.iter().map(|&i| self.labels[i]).collect(),
            attribute_labels: self.attribute_labels.as_ref().map(|a| perm.iter().map(|&i| a[i].clone()).collect()),
            attribute_label_types: self.attribute_label_types.clone(),
            class_names: self.class_names.clone(),
        }
    }
}

/// JSON shape of `manifest.json`. `images` is an EMBD path relative to the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestFile {
    pub images: String,
    pub class_names: Vec<String>,
    pub labels: Vec<usize>,
    #[serde(default)]
    pub attribute_labels: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attribute_label_types: BTreeMap<String, AttributeType>,
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read(path).map_err(|source| StoreError::IoFailure { path: path.to_path_buf(), source })?;
    let file: ManifestFile =
        serde_json::from_slice(&text).map_err(|source| StoreError::Sidecar { path: path.to_path_buf(), source })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let images = load_embedding_table(&base.join(&file.images))?;
    let m = DatasetManifest {
        images,
        labels: file.labels,
        attribute_labels: file.attribute_labels,
        attribute_label_types: file.attribute_label_types,
        class_names: file.class_names,
    };
    m.validate()?;
    Ok(m)
}

/// Writes `manifest.json` at `path` and the image table at `images_name`
/// (relative to the manifest's directory).
pub fn save_manifest(manifest: &DatasetManifest, path: &Path, images_name: &str) -> Result<()> {
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    save_embedding_table(&manifest.images, &base.join(images_name))?;
    let file = ManifestFile {
        images: images_name.to_string(),
        class_names: manifest.class_names.clone(),
        labels: manifest.labels.clone(),
        attribute_labels: manifest.attribute_labels.clone(),
        attribute_label_types: manifest.attribute_label_types.clone(),
    };
    let mut json = serde_json::to_vec_pretty(&file).expect("manifest serializes");
    json.push(b'\n');
    fs::write(path, json).map_err(|source| StoreError::IoFailure { path: path.to_path_buf(), source })
}
