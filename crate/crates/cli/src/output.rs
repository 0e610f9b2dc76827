//! Output artifacts and their provenance headers.
//!
//! * JSONL: the first line is `{"provenance": {...}}`, then one record per line.
//! * JSON: an object with a `provenance` field next to the payload fields.
//! * CSV: a leading `# provenance: {...}` comment line, then the header row.
//!
//! Provenance holds the tool version, the subcommand, the resolved config and
//! SHA-256 checksums of every input file. No timestamps, so identical runs
//! produce identical bytes.

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use subpop_core::attribute_catalog::{CATALOG_JSON, CLASSNAMES_EMBD, SUBPOPS_EMBD};
use subpop_core::consolidation::PredictionRecord;
use subpop_core::embedding_store::{sidecar_path, ManifestFile};

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: Value,
    pub inputs: BTreeMap<String, String>,
}

fn key(path: &Path) -> String {
    path.to_string_lossy().replace('\\', "/")
}

impl Provenance {
    pub fn new(command: &str, config: Value) -> Self {
        Self { tool: "subpop", version: env!("CARGO_PKG_VERSION"), command: command.into(), config, inputs: BTreeMap::new() }
    }

    pub fn add_file(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.insert(key(path), hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }

    /// An EMBD table and its sidecar.
    pub fn add_table(&mut self, path: &Path) -> Result<()> {
        self.add_file(path)?;
        self.add_file(&sidecar_path(path))
    }

    pub fn add_catalog(&mut self, dir: &Path) -> Result<()> {
        self.add_file(&dir.join(CATALOG_JSON))?;
        self.add_table(&dir.join(CLASSNAMES_EMBD))?;
        self.add_table(&dir.join(SUBPOPS_EMBD))
    }

    /// The manifest and the image table it points at.
    pub fn add_manifest(&mut self, path: &Path) -> Result<()> {
        self.add_file(path)?;
        let file: ManifestFile = serde_json::from_slice(&fs::read(path)?)?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        self.add_table(&base.join(file.images))
    }

    fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("provenance serializes")
    }
}

/// Writes `text` to `out`, or stdout when `out` is `None`.
pub fn write_text(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
            }
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

pub fn jsonl(prov: &Provenance, lines: impl IntoIterator<Item = String>) -> String {
    let mut out = json!({ "provenance": prov.to_value() }).to_string();
    out.push('\n');
    for line in lines {
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Pretty JSON of `payload`'s fields plus `provenance`.
pub fn json_report(prov: &Provenance, payload: &impl Serialize) -> Result<String> {
    let mut map = Map::new();
    map.insert("provenance".into(), prov.to_value());
    match serde_json::to_value(payload)? {
        Value::Object(fields) => map.extend(fields),
        other => {
            map.insert("result".into(), other);
        }
    }
    let mut text = serde_json::to_string_pretty(&Value::Object(map))?;
    text.push('\n');
    Ok(text)
}

pub fn csv(prov: &Provenance, body: &str) -> String {
    format!("# provenance: {}\n{body}", prov.to_value())
}

/// Records from a predictions JSONL file, skipping the provenance line.
pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).with_context(|| format!("{}:{}", path.display(), n + 1))?;
        if value.get("provenance").is_some() {
            continue;
        }
        out.push(serde_json::from_value(value).with_context(|| format!("{}:{}", path.display(), n + 1))?);
    }
    Ok(out)
}

/// `<stem>_<suffix>.<ext>` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{suffix}"),
    };
    path.with_file_name(name)
}
