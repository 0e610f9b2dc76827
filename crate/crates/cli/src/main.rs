// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod config;
mod output;
mod parse;
mod plot;

use anyhow::Result;
use args::{Cli, Command};
use clap::error::ErrorKind;
use clap::Parser;
use commands::RunContext;
use config::FileConfig;
use std::process::ExitCode;

/// Bad flags, missing required inputs or bad config values (exit 2).
#[derive(Debug)]
pub struct UsageError(pub String);

/// Broken invariants inside the tool itself (exit 4).
#[derive(Debug)]
pub struct InternalError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::fmt::Display for InternalError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}
impl std::error::Error for InternalError {}

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

fn report(category: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": category, "message": message }));
    ExitCode::from(code)
}

fn resolve_threads(flag: Option<usize>, cfg: &FileConfig) -> Result<Option<usize>> {
    let env = match std::env::var("SUBPOP_THREADS") {
        Ok(v) if !v.trim().is_empty() => {
            Some(v.trim().parse::<usize>().map_err(|_| UsageError(format!("SUBPOP_THREADS={v:?} is not a count")))?)
        }
        _ => None,
    };
    let threads = flag.or(env).or(cfg.threads);
    if threads == Some(0) {
        return Err(UsageError("thread count must be at least 1".into()).into());
    }
    Ok(threads)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let threads = resolve_threads(cli.threads, &cfg)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| InternalError(format!("thread pool: {e}")))?;
    let ctx = RunContext { cfg };
    pool.install(|| match &cli.command {
        Command::Classify(a) => commands::classify(&ctx, a),
        Command::Evaluate(a) => commands::evaluate(&ctx, a),
        Command::Sweep(a) => commands::sweep(&ctx, a),
        Command::Ablate(a) => commands::ablate(&ctx, a),
        Command::Overlaps(a) => commands::overlaps(&ctx, a),
        Command::Disagree(a) => commands::disagree(&ctx, a),
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::Catalog(c) => commands::catalog(&ctx, c),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report("UsageError", e.render().to_string().trim(), EXIT_USAGE),
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            let message = format!("{e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                report("UsageError", &message, EXIT_USAGE)
            } else if e.downcast_ref::<InternalError>().is_some() {
                report("InternalError", &message, EXIT_INTERNAL)
            } else {
                report("DataError", &message, EXIT_DATA)
            }
        }
        Err(_) => report("InternalError", "unexpected panic", EXIT_INTERNAL),
    }
}
