use crate::args::{MetricArgs, ScoringArgs};
use crate::parse::{parse_fractions, parse_types};
use crate::UsageError;
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use subpop_core::attribute_catalog::AttributeType;
use subpop_core::consolidation::{AveragingMode, Method, ScoringConfig};
use subpop_core::metrics::{ReportOptions, DEFAULT_QS};

/// Defaults read from `--config`. Every field is optional; flags take precedence.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub method: Option<String>,
    pub k: Option<usize>,
    pub lambda: Option<f64>,
    pub temperature: Option<f64>,
    pub mode: Option<String>,
    pub qs: Option<Vec<f64>>,
    pub min_subpop_count: Option<usize>,
    pub subpop_types: Option<Vec<String>>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let parsed = if is_json {
            serde_json::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())))?
        };
        Ok(parsed)
    }

    /// A required path: the flag, else the config value.
    pub fn path(&self, flag: &Option<PathBuf>, from_config: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        flag.clone()
            .or_else(|| from_config.clone())
            .ok_or_else(|| UsageError(format!("--{name} is required (flag or config file)")).into())
    }

    /// Output path: the flag, else `<out_dir>/<default_name>`, else stdout (`None`).
    pub fn output(&self, flag: &Option<PathBuf>, default_name: &str) -> Option<PathBuf> {
        flag.clone().or_else(|| self.out_dir.as_ref().map(|d| d.join(default_name)))
    }

    pub fn scoring(&self, args: &ScoringArgs) -> Result<ScoringConfig> {
        let defaults = ScoringConfig::default();
        let method = match args.method.as_ref().or(self.method.as_ref()) {
            Some(m) => m.parse::<Method>().map_err(|e| UsageError(e.to_string()))?,
            None => defaults.method,
        };
        let cfg = ScoringConfig {
            method,
            k: args.k.or(self.k).unwrap_or(defaults.k),
            lambda: args.lambda.or(self.lambda).unwrap_or(defaults.lambda),
            temperature: args.temperature.or(self.temperature).unwrap_or(defaults.temperature),
            averaging: self.averaging(&args.mode)?.unwrap_or(defaults.averaging),
        };
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }

    pub fn averaging(&self, flag: &Option<String>) -> Result<Option<AveragingMode>> {
        flag.as_ref()
            .or(self.mode.as_ref())
            .map(|m| m.parse::<AveragingMode>().map_err(|e| UsageError(e.to_string()).into()))
            .transpose()
    }

    pub fn report_options(&self, args: &MetricArgs) -> Result<ReportOptions> {
        let qs = match &args.qs {
            Some(s) => parse_fractions(s)?,
            None => self.qs.clone().unwrap_or_else(|| DEFAULT_QS.to_vec()),
        };
        let subpop_types = match (&args.subpop_types, &self.subpop_types) {
            (Some(s), _) => Some(parse_types(s)?),
            (None, Some(list)) => Some(parse_types(&list.join(","))?),
            (None, None) => None,
        };
        Ok(ReportOptions {
            qs,
            min_subpop_count: args.min_subpop_count.or(self.min_subpop_count).unwrap_or(1),
            subpop_types: subpop_types.map(|v: Vec<AttributeType>| v.into_iter().collect::<BTreeSet<_>>()),
        })
    }
}
