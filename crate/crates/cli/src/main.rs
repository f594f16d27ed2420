use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use cuisine_framing::pipeline::{
    cmd_audit, cmd_extract, cmd_ingest, cmd_logodds, cmd_regress, cmd_report, cmd_score, run_all, Manifest,
    PipelineConfig,
};
use cuisine_framing::regression::StudyKind;

/// Framing analysis of restaurant reviews.
#[derive(Debug, Parser)]
#[command(name = "cuisine-framing", version)]
struct Cli {
    /// Pipeline config (TOML, or JSON with a .json extension).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured output directory.
    #[arg(short, long, global = true)]
    output_dir: Option<PathBuf>,
    /// Keep a seeded sample of N reviews at ingest.
    #[arg(long, global = true)]
    sample: Option<usize>,
    /// Seed for sampling and stratification.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Studies to fit, overriding the config (repeatable).
    #[arg(long = "study", global = true)]
    studies: Vec<StudyKind>,
    /// Report VIF violations without failing the regress stage.
    #[arg(long, global = true)]
    no_vif_check: bool,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and filter businesses and reviews, join census data.
    Ingest,
    /// Extract adjective features from parsed reviews.
    Extract,
    /// Count lexicon matches per review.
    Score,
    /// Weighted log-odds of features by cuisine region.
    Logodds,
    /// Fit the configured studies.
    Regress,
    /// Generate, sanitize and stratify synthetic reviews.
    Audit,
    /// Write coefficient, feature and covariate tables.
    Report,
    /// Run every stage in order.
    Run,
}

fn load_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::from_path(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(d) = &cli.output_dir {
        cfg.output_dir = d.clone();
    }
    if cli.sample.is_some() {
        cfg.sample = cli.sample;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if !cli.studies.is_empty() {
        cfg.studies = cli.studies.clone();
    }
    if cli.no_vif_check {
        cfg.regression.vif_check = false;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> anyhow::Result<Vec<Manifest>> {
    let cfg = load_config(cli).context("loading configuration")?;
    let one = |m: Manifest| vec![m];
    Ok(match cli.command {
        Command::Ingest => one(cmd_ingest(&cfg)?),
        Command::Extract => one(cmd_extract(&cfg)?),
        Command::Score => one(cmd_score(&cfg)?),
        Command::Logodds => one(cmd_logodds(&cfg)?),
        Command::Regress => one(cmd_regress(&cfg)?),
        Command::Audit => one(cmd_audit(&cfg, None)?),
        Command::Report => one(cmd_report(&cfg)?),
        Command::Run => run_all(&cfg)?,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(manifests) => {
            for m in manifests {
                let rows: usize = m.outputs.iter().filter_map(|o| o.rows).sum();
                println!("{}: {} files, {} rows", m.stage, m.outputs.len(), rows);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
