use crate::args::*;
use crate::config::FileConfig;
use crate::output::{csv, json_report, jsonl, read_predictions, sibling, write_text, Provenance};
use crate::parse::{parse_ks, parse_lambdas, parse_types};
use crate::plot::sweep_svg;
use crate::UsageError;
use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use subpop_core::analysis::{disagreement_report, run_ablation, run_sweep, AblationPlan, AnalysisError, SweepGrid};
use subpop_core::attribute_catalog::{
    cross_class_attribute_overlaps, load_catalog, restrict_to_attribute_types, save_catalog, AttributeType, ClassCatalog,
};
use subpop_core::consolidation::{predict_batch, AveragingMode};
use subpop_core::embedding_store::{load_embedding_table, load_manifest, DatasetManifest, EmbeddingTable};
use subpop_core::metrics::{
    accuracy_report, ap_gain, class_diversity, pearson, spearman, GroupKey, MetricReport, ReportOptions,
};
use subpop_core::synthgen::{
    fox_wolf_spec, generate, narrow_band_instance, plant_hardness_gradient, planted_atypical_spec, save_dataset,
    PlantedAtypical, SynthSpec,
};

/// Settings shared by every subcommand.
pub struct RunContext {
    pub cfg: FileConfig,
}

impl RunContext {
    fn manifest_path(&self, flag: &Option<PathBuf>) -> Result<PathBuf> {
        self.cfg.path(flag, &self.cfg.manifest, "manifest")
    }

    fn catalog_path(&self, flag: &Option<PathBuf>) -> Result<PathBuf> {
        self.cfg.path(flag, &self.cfg.catalog, "catalog")
    }
}

fn options_echo(opts: &ReportOptions) -> Value {
    serde_json::to_value(opts).expect("options serialize")
}

fn manifest_with(prov: &mut Provenance, path: &Path) -> Result<DatasetManifest> {
    let m = load_manifest(path)?;
    prov.add_manifest(path)?;
    Ok(m)
}

fn catalog_with(prov: &mut Provenance, dir: &Path) -> Result<ClassCatalog> {
    let c = load_catalog(dir)?;
    prov.add_catalog(dir)?;
    Ok(c)
}

fn check_classes(manifest: &DatasetManifest, catalog: &ClassCatalog) -> Result<()> {
    if manifest.class_names != catalog.class_names() {
        bail!(
            "manifest classes ({}) differ from catalog classes ({})",
            manifest.class_names.len(),
            catalog.num_classes()
        );
    }
    Ok(())
}

pub fn classify(ctx: &RunContext, a: &ClassifyArgs) -> Result<()> {
    let scoring = ctx.cfg.scoring(&a.scoring)?;
    let catalog_dir = ctx.catalog_path(&a.catalog)?;
    let mut echo = serde_json::to_value(scoring)?;
    echo["scores"] = json!(a.scores);
    let mut prov = Provenance::new("classify", echo);

    let images_flag = a.images.clone().or_else(|| a.manifest.is_none().then(|| ctx.cfg.images.clone()).flatten());
    let images: EmbeddingTable = match images_flag {
        Some(path) => {
            let t = load_embedding_table(&path)?;
            prov.add_table(&path)?;
            t
        }
        None => {
            let path = a
                .manifest
                .clone()
                .or_else(|| ctx.cfg.manifest.clone())
                .ok_or_else(|| UsageError("--images or --manifest is required".into()))?;
            manifest_with(&mut prov, &path)?.images
        }
    };
    let catalog = catalog_with(&mut prov, &catalog_dir)?;
    let records = predict_batch(&images, &catalog, &scoring)?;
    let text = jsonl(&prov, records.iter().map(|r| r.to_json_line(a.scores)));
    write_text(ctx.cfg.output(&a.out, "predictions.jsonl").as_deref(), &text)
}

#[derive(Serialize)]
struct DiversityReport {
    per_class: Vec<f64>,
    pearson: Option<f64>,
    spearman: Option<f64>,
}

#[derive(Serialize)]
struct ApGainRow {
    class: usize,
    text: String,
    #[serde(rename = "type")]
    attribute_type: AttributeType,
    ap_class: f64,
    ap_subpop: f64,
    gain: f64,
}

#[derive(Serialize)]
struct EvaluateOutput {
    #[serde(flatten)]
    report: MetricReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    diversity: Option<DiversityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ap_gains: Option<Vec<ApGainRow>>,
}

fn ap_gains(manifest: &DatasetManifest, catalog: &ClassCatalog) -> Result<Vec<ApGainRow>> {
    check_classes(manifest, catalog)?;
    let present: BTreeSet<(usize, &str)> = (0..manifest.labels.len())
        .flat_map(|i| manifest.attributes_of(i).iter().map(move |a| (manifest.labels[i], a.as_str())))
        .collect();
    let mut rows = Vec::new();
    for (e, s) in catalog.external_subpops().iter().enumerate() {
        if !present.contains(&(s.class_index, s.attribute_text.as_str())) {
            continue;
        }
        let key = GroupKey::subpop(s.class_index, s.attribute_text.clone());
        let g = ap_gain(
            &manifest.images,
            manifest,
            catalog.classname_vectors().row(s.class_index),
            catalog.entry_vector(e),
            &key,
        )?;
        rows.push(ApGainRow {
            class: s.class_index,
            text: s.attribute_text.clone(),
            attribute_type: s.attribute_type,
            ap_class: g.ap_class,
            ap_subpop: g.ap_subpop,
            gain: g.gain,
        });
    }
    Ok(rows)
}

pub fn evaluate(ctx: &RunContext, a: &EvaluateArgs) -> Result<()> {
    let opts = ctx.cfg.report_options(&a.metrics)?;
    let manifest_path = ctx.manifest_path(&a.manifest)?;
    let mut echo = options_echo(&opts);
    echo["diversity"] = json!(a.diversity);
    let mut prov = Provenance::new("evaluate", echo);
    let predictions = read_predictions(&a.predictions)?;
    prov.add_file(&a.predictions)?;
    let manifest = manifest_with(&mut prov, &manifest_path)?;
    let report = accuracy_report(&predictions, &manifest, &opts)?;

    let diversity = if a.diversity {
        let per_class = class_diversity(&manifest.images, &manifest)?;
        let accs: Vec<f64> = report.class_accuracies(manifest.num_classes()).into_iter().map(|a| a.unwrap_or(0.0)).collect();
        Some(DiversityReport { pearson: pearson(&per_class, &accs).ok(), spearman: spearman(&per_class, &accs).ok(), per_class })
    } else {
        None
    };
    let ap_gains = match &a.ap_catalog {
        Some(dir) => Some(ap_gains(&manifest, &catalog_with(&mut prov, dir)?)?),
        None => None,
    };
    let text = json_report(&prov, &EvaluateOutput { report, diversity, ap_gains })?;
    write_text(ctx.cfg.output(&a.out, "report.json").as_deref(), &text)
}

pub fn sweep(ctx: &RunContext, a: &SweepArgs) -> Result<()> {
    let opts = ctx.cfg.report_options(&a.metrics)?;
    let defaults = SweepGrid::default();
    let ks = match &a.ks {
        Some(s) => parse_ks(s)?,
        None => defaults.ks().to_vec(),
    };
    let lambdas = match &a.lambdas {
        Some(s) => parse_lambdas(s)?,
        None => defaults.lambdas().to_vec(),
    };
    let mode = ctx.cfg.averaging(&a.mode)?.unwrap_or(AveragingMode::Sims);
    let grid = SweepGrid::new(ks, lambdas, mode).map_err(|e| UsageError(e.to_string()))?;
    let (manifest_path, catalog_dir) = (ctx.manifest_path(&a.manifest)?, ctx.catalog_path(&a.catalog)?);

    let mut echo = options_echo(&opts);
    echo["grid"] = serde_json::to_value(&grid)?;
    let mut prov = Provenance::new("sweep", echo);
    let manifest = manifest_with(&mut prov, &manifest_path)?;
    let catalog = catalog_with(&mut prov, &catalog_dir)?;
    check_classes(&manifest, &catalog)?;
    let result = run_sweep(&manifest, &catalog, &grid, &opts)?;

    let out = ctx.cfg.output(&a.out, "sweep.csv");
    write_text(out.as_deref(), &csv(&prov, &result.to_csv()))?;
    if let Some(out) = &out {
        write_text(Some(&sibling(out, "pareto")), &csv(&prov, &result.pareto_csv()))?;
    }
    if let Some(plot) = &a.plot {
        write_text(Some(plot), &sweep_svg(&result))?;
    }
    Ok(())
}

fn plan_error(e: AnalysisError) -> anyhow::Error {
    match e {
        AnalysisError::UnknownAttributeType(_) | AnalysisError::InvalidPlan(_) => UsageError(e.to_string()).into(),
        other => other.into(),
    }
}

pub fn ablate(ctx: &RunContext, a: &AblateArgs) -> Result<()> {
    let base = ctx.cfg.scoring(&a.scoring)?;
    let opts = ctx.cfg.report_options(&a.metrics)?;
    let plan = match &a.plan {
        Some(types) => AblationPlan::parse(types, &a.methods).map_err(plan_error)?,
        None => {
            let order: Vec<&str> = AttributeType::TAXONOMY_ORDER.iter().map(|t| t.as_str()).collect();
            AblationPlan::parse(&order.join(","), &a.methods).map_err(plan_error)?
        }
    };
    let (manifest_path, catalog_dir) = (ctx.manifest_path(&a.manifest)?, ctx.catalog_path(&a.catalog)?);

    let mut echo = options_echo(&opts);
    echo["base"] = serde_json::to_value(base)?;
    echo["plan"] = serde_json::to_value(&plan)?;
    let mut prov = Provenance::new("ablate", echo);
    let manifest = manifest_with(&mut prov, &manifest_path)?;
    let catalog = catalog_with(&mut prov, &catalog_dir)?;
    check_classes(&manifest, &catalog)?;
    let result = run_ablation(&manifest, &catalog, &plan, &base, &opts)?;

    let missing: Vec<&str> = result.missing_types.iter().map(|t| t.as_str()).collect();
    if !missing.is_empty() {
        eprintln!("warning: plan types absent from the catalog: {}", missing.join(","));
    }
    let body = format!("# missing_types: {}\n{}", missing.join(","), result.to_csv());
    write_text(ctx.cfg.output(&a.out, "ablation.csv").as_deref(), &csv(&prov, &body))
}

pub fn overlaps(ctx: &RunContext, a: &OverlapArgs) -> Result<()> {
    let dir = ctx.catalog_path(&a.catalog)?;
    let mut prov = Provenance::new("overlaps", json!({ "cosine": a.cosine, "text_match": a.text_match }));
    let catalog = catalog_with(&mut prov, &dir)?;
    let names = catalog.class_names();
    let mut w = ::csv::Writer::from_writer(Vec::new());
    w.write_record(["class_a", "name_a", "attr_a", "type_a", "class_b", "name_b", "attr_b", "type_b", "cosine", "exact_text"])?;
    for r in cross_class_attribute_overlaps(&catalog, a.text_match, a.cosine) {
        w.write_record([
            r.class_a.to_string(),
            names[r.class_a].clone(),
            r.attr_a,
            r.type_a.to_string(),
            r.class_b.to_string(),
            names[r.class_b].clone(),
            r.attr_b,
            r.type_b.to_string(),
            r.cosine.to_string(),
            r.exact_text.to_string(),
        ])?;
    }
    let body = String::from_utf8(w.into_inner()?)?;
    write_text(ctx.cfg.output(&a.out, "overlaps.csv").as_deref(), &csv(&prov, &body))
}

pub fn disagree(ctx: &RunContext, a: &DisagreeArgs) -> Result<()> {
    let manifest_path = ctx.manifest_path(&a.manifest)?;
    let mut prov = Provenance::new("disagree", json!({}));
    let pa = read_predictions(&a.a)?;
    prov.add_file(&a.a)?;
    let pb = read_predictions(&a.b)?;
    prov.add_file(&a.b)?;
    let manifest = manifest_with(&mut prov, &manifest_path)?;
    let rows = disagreement_report(&pa, &pb, &manifest)?;
    let lines = rows.iter().map(|r| serde_json::to_string(r).expect("row serializes"));
    write_text(ctx.cfg.output(&a.out, "disagreements.jsonl").as_deref(), &jsonl(&prov, lines))
}

fn preset_spec(name: &str, seed: Option<u64>) -> Result<SynthSpec> {
    Ok(match name {
        "fox-wolf" => fox_wolf_spec(8, 0.0, 10, seed.unwrap_or(0)),
        "planted-atypical" => {
            let mut p = PlantedAtypical::default();
            p.seed = seed.unwrap_or(p.seed);
            planted_atypical_spec(&p)?
        }
        "hardness-gradient" => plant_hardness_gradient(16, seed.unwrap_or(17), 8, 100, (0.1, 1.0), true)?,
        other => return Err(UsageError(format!("unknown preset {other:?}")).into()),
    })
}

pub fn synth(ctx: &RunContext, a: &SynthArgs) -> Result<()> {
    let out_dir = a
        .out_dir
        .clone()
        .or_else(|| ctx.cfg.out_dir.clone())
        .ok_or_else(|| UsageError("--out-dir is required (flag or config file)".into()))?;
    let mut prov = Provenance::new(
        "synth",
        json!({ "preset": a.preset, "seed": a.seed, "emit_spec": a.emit_spec }),
    );
    let (manifest, catalog, spec) = match (&a.spec, a.preset.as_deref()) {
        (_, Some("narrow-band")) => {
            let (m, c) = narrow_band_instance(500, 3, 500, 0.2, 0.28, 0.01, a.seed.unwrap_or(3))?;
            (m, c, None)
        }
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            prov.add_file(path)?;
            let mut spec: SynthSpec =
                serde_json::from_str(&text).with_context(|| format!("parsing spec {}", path.display()))?;
            if let Some(seed) = a.seed {
                spec.seed = seed;
            }
            let (m, c) = generate(&spec)?;
            (m, c, Some(spec))
        }
        (None, Some(name)) => {
            let spec = preset_spec(name, a.seed)?;
            let (m, c) = generate(&spec)?;
            (m, c, Some(spec))
        }
        (None, None) => return Err(UsageError("--spec or --preset is required".into()).into()),
    };
    save_dataset(&out_dir, &manifest, &catalog)?;
    if a.emit_spec {
        if let Some(spec) = &spec {
            let mut text = serde_json::to_string_pretty(spec)?;
            text.push('\n');
            write_text(Some(&out_dir.join("spec.json")), &text)?;
        }
    }
    let summary = json!({
        "images": manifest.images.count(),
        "classes": manifest.num_classes(),
        "catalog_entries": catalog.entries().len(),
    });
    write_text(Some(&out_dir.join("provenance.json")), &json_report(&prov, &summary)?)
}

pub fn catalog(ctx: &RunContext, cmd: &CatalogCommand) -> Result<()> {
    match cmd {
        CatalogCommand::Validate { catalog } => {
            let dir = ctx.catalog_path(catalog)?;
            let cat = load_catalog(&dir)?;
            let mut types: BTreeMap<&str, usize> = BTreeMap::new();
            for s in cat.external_subpops() {
                *types.entry(s.attribute_type.as_str()).or_default() += 1;
            }
            let summary = json!({
                "valid": true,
                "classes": cat.num_classes(),
                "dim": cat.dim(),
                "subpopulations": cat.external_subpops().len(),
                "max_pool_size": cat.max_pool_size(),
                "types": types,
            });
            write_text(None, &format!("{}\n", serde_json::to_string_pretty(&summary)?))
        }
        CatalogCommand::Restrict { catalog, types, out_dir } => {
            let dir = ctx.catalog_path(catalog)?;
            let types: BTreeSet<AttributeType> = parse_types(types)?.into_iter().collect();
            let restricted = restrict_to_attribute_types(&load_catalog(&dir)?, &types);
            save_catalog(&restricted, out_dir)?;
            Ok(())
        }
        CatalogCommand::Overlaps(a) => overlaps(ctx, a),
    }
}
