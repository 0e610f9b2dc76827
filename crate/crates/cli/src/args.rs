use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

/// Zero-shot classification with attribute-conditioned class pools.
#[derive(Debug, Parser)]
#[command(name = "subpop", version, about)]
pub struct Cli {
    /// TOML or JSON file with defaults; explicit flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads (overrides SUBPOP_THREADS and the config file).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Predict a class for every image and record what the prediction attended to.
    Classify(ClassifyArgs),
    /// Accuracy and worst-group metrics for a predictions file.
    Evaluate(EvaluateArgs),
    /// Evaluate a grid of k and lambda values.
    Sweep(SweepArgs),
    /// Add attribute types one at a time and evaluate several methods at each step.
    Ablate(AblateArgs),
    /// Cross-class attribute pairs that look alike.
    Overlaps(OverlapArgs),
    /// Images two prediction files classify differently.
    Disagree(DisagreeArgs),
    /// Generate a synthetic dataset and catalog.
    Synth(SynthArgs),
    /// Catalog tools.
    #[command(subcommand)]
    Catalog(CatalogCommand),
}

#[derive(Debug, Args, Clone, Default)]
pub struct ScoringArgs {
    /// vanilla, average_sims, average_vecs, chils, chils_fixed or topk.
    #[arg(long)]
    pub method: Option<String>,
    /// Pool members averaged by topk [default: 16].
    #[arg(long)]
    pub k: Option<usize>,
    /// Weight of the full-averaging term in topk, in [0, 1] [default: 0].
    #[arg(long)]
    pub lambda: Option<f64>,
    /// CHiLS softmax temperature.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Full-averaging term of the interpolation: sims or vecs.
    #[arg(long)]
    pub mode: Option<String>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct MetricArgs {
    /// Worst-group fractions, e.g. 0.05,0.10,0.20.
    #[arg(long)]
    pub qs: Option<String>,
    /// Subpopulations with fewer images are left out of worst-subpop aggregates.
    #[arg(long)]
    pub min_subpop_count: Option<usize>,
    /// Only ground-truth attributes of these types form subpopulations.
    #[arg(long)]
    pub subpop_types: Option<String>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Image embeddings (EMBD).
    #[arg(long, conflicts_with = "manifest")]
    pub images: Option<PathBuf>,
    /// Dataset manifest; its image table is classified.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Catalog directory.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[command(flatten)]
    pub scoring: ScoringArgs,
    /// Include per-class scores in each record.
    #[arg(long)]
    pub scores: bool,
    /// Output JSONL (stdout when omitted and no out_dir is configured).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub metrics: MetricArgs,
    /// Also report per-class diversity and its correlation with accuracy.
    #[arg(long)]
    pub diversity: bool,
    /// Catalog whose subpopulation vectors are scored by AP gain over the classname vector.
    #[arg(long)]
    pub ap_catalog: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// k values: a list, optionally ending in a progression such as 1,2,4,...,128.
    #[arg(long)]
    pub ks: Option<String>,
    /// lambda values: a list or start:end:step.
    #[arg(long)]
    pub lambdas: Option<String>,
    /// sims or vecs.
    #[arg(long)]
    pub mode: Option<String>,
    #[command(flatten)]
    pub metrics: MetricArgs,
    /// Output CSV; the Pareto front goes next to it as `<stem>_pareto.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Static SVG plot of overall vs worst-5% accuracy.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Attribute types in the order they are added.
    #[arg(long)]
    pub plan: Option<String>,
    #[arg(long, default_value = "topk,average_sims,chils")]
    pub methods: String,
    #[command(flatten)]
    pub scoring: ScoringArgs,
    #[command(flatten)]
    pub metrics: MetricArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OverlapArgs {
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Report pairs whose cosine exceeds this.
    #[arg(long, default_value_t = 0.95)]
    pub cosine: f64,
    /// Also report pairs whose texts match after trimming and lowercasing.
    #[arg(long)]
    pub text_match: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DisagreeArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON spec of classes and subclusters.
    #[arg(long, required_unless_present = "preset")]
    pub spec: Option<PathBuf>,
    /// fox-wolf, planted-atypical or hardness-gradient.
    #[arg(long, conflicts_with = "spec")]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Write the resolved spec next to the dataset.
    #[arg(long)]
    pub emit_spec: bool,
}

#[derive(Debug, Subcommand)]
pub enum CatalogCommand {
    /// Load a catalog and print a summary.
    Validate {
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Keep only the given attribute types (classname entries always stay).
    Restrict {
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        types: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Same as the top-level `overlaps`.
    Overlaps(OverlapArgs),
}
