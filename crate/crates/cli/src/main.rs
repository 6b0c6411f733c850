mod artifacts;
mod config;
mod error;
mod report;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stresslens::aggregate::Family;
use stresslens::eval::SplitScheme;
use stresslens::features::LabelScheme;

use crate::config::RunConfig;
use crate::error::CliError;

/// Daily stress recognition from phone activity, weather and personality.
#[derive(Parser, Debug)]
#[command(name = "stresslens", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding every stage artifact.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory with the six input logs (default: <out>/logs).
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_scheme)]
    scheme: Option<SplitScheme>,
    /// Number of selected features.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Trees in the final forest.
    #[arg(long, global = true)]
    ntree: Option<usize>,
    #[arg(long, global = true, value_parser = parse_labels)]
    labels: Option<LabelScheme>,
    /// Comma-separated feature families: weather, personality, phone.
    #[arg(long, global = true, value_parser = config::parse_families)]
    families: Option<Vec<Family>>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Generate a synthetic cohort as the six input logs.
    Synth,
    /// Parse the logs and list subjects with enough coverage.
    Validate,
    /// Build the candidate feature matrix.
    Featurize,
    /// Rank candidate features on the training side and keep the top k.
    Select,
    /// Fit the forest on the selected features.
    Train,
    /// Score the held-out rows; cross-validate for kfold and loso.
    Evaluate,
    /// Compare feature-family subsets against the majority baseline.
    Ablate,
    /// Render stored results as tables.
    Report,
}

fn parse_scheme(s: &str) -> Result<SplitScheme, String> {
    s.parse().map_err(|e: stresslens::error::Error| e.to_string())
}

fn parse_labels(s: &str) -> Result<LabelScheme, String> {
    match s {
        "binary" => Ok(LabelScheme::Binary),
        "ternary" => Ok(LabelScheme::Ternary),
        other => Err(format!("unknown label scheme {other:?}")),
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &cli.out {
        cfg.out = v.clone();
    }
    if let Some(v) = &cli.input {
        cfg.input = Some(v.clone());
    }
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = cli.scheme {
        cfg.scheme = v;
    }
    if let Some(v) = cli.k {
        cfg.k = v;
    }
    if let Some(v) = cli.ntree {
        cfg.ntree = v;
    }
    if let Some(v) = cli.labels {
        cfg.labels = v;
    }
    if let Some(v) = &cli.families {
        cfg.families = Some(v.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("STRESSLENS_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Input(format!("STRESSLENS_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Input(format!("thread pool: {e}")))
}

fn run(cli: &Cli) -> Result<String, CliError> {
    init_threads()?;
    let cfg = resolve(cli)?;
    match cli.command {
        Command::Synth => stages::synth(&cfg),
        Command::Validate => stages::validate(&cfg),
        Command::Featurize => stages::featurize(&cfg),
        Command::Select => stages::select(&cfg),
        Command::Train => stages::train(&cfg),
        Command::Evaluate => stages::evaluate(&cfg),
        Command::Ablate => stages::ablate(&cfg),
        Command::Report => stages::report(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
