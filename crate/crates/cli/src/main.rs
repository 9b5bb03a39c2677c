//! `knotpair` command-line front-end.
//!
//! Each subcommand reads the files written by the previous stage and writes
//! its own, each with a `.meta.json` sidecar echoing the settings used. Exit
//! code 1 means invalid input or configuration, 2 means a file could not be
//! read or written; either way a JSON error line goes to stderr.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use knotpair::nn::Variant;

use crate::config::RunConfig;
use crate::error::{CliError, ErrorLine};

#[derive(Debug, Parser)]
#[command(name = "knotpair", version, about = "Pair knots seen on different faces of the same board")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// JSON run configuration; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Model variant: standard, learnable, custom or simclr
    #[arg(long, global = true, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long, global = true)]
    grid_start: Option<f64>,
    #[arg(long, global = true)]
    grid_stop: Option<f64>,
    #[arg(long, global = true)]
    grid_step: Option<f64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: knotpair::nn::NnError| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scope {
    All,
    Train,
    Validation,
    Test,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Flag frames that show too little wood
    Filter {
        /// Directory of binary PPM frames
        #[arg(long)]
        images: Option<PathBuf>,
    },
    /// Generate boards with known knot pairs
    Synth,
    /// Build normalized feature vectors from labels and measurements
    Extract {
        /// Directory with boards.csv, measurements.csv and labels/
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        boards: Option<PathBuf>,
        #[arg(long)]
        measurements: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        frame_advance_mm: Option<f64>,
        #[arg(long)]
        frame_length_mm: Option<f64>,
    },
    /// Split boards and build training triplets
    Triplets {
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Train an embedding network
    Train {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        triplets: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Fixed input weights for the custom variant, comma separated
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        custom_weights: Option<Vec<f64>>,
    },
    /// Embed every feature row with a trained model
    Embed {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Pair knots by distance-threshold clustering
    Cluster {
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Fixed threshold; when absent it is searched on the validation boards
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
    },
    /// Choose thresholds on validation boards and score models on test boards
    Eval {
        /// Model file; repeat to compare models
        #[arg(long = "model")]
        models: Vec<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
    },
    /// Project embeddings to 2-D and draw the clusters
    Viz {
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        pairings: Option<PathBuf>,
        /// Restrict to one board
        #[arg(long)]
        specimen: Option<String>,
        /// Restrict to one split (needs --split)
        #[arg(long, value_enum)]
        scope: Option<Scope>,
        #[arg(long)]
        split: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Filter { .. } => "filter",
            Command::Synth => "synth",
            Command::Extract { .. } => "extract",
            Command::Triplets { .. } => "triplets",
            Command::Train { .. } => "train",
            Command::Embed { .. } => "embed",
            Command::Cluster { .. } => "cluster",
            Command::Eval { .. } => "eval",
            Command::Viz { .. } => "viz",
        }
    }
}

fn resolve(global: &GlobalArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(global.config.as_deref())?;
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(v) = global.grid_start {
        cfg.grid.start = v;
    }
    if let Some(v) = global.grid_stop {
        cfg.grid.stop = v;
    }
    if let Some(v) = global.grid_step {
        cfg.grid.step = v;
    }
    if let Some(out) = &global.out {
        cfg.paths.out = Some(out.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = resolve(&cli.global)?;
    let variant = cli.global.variant;
    match cli.command {
        Command::Filter { images } => commands::filter(cfg, images),
        Command::Synth => commands::synth(cfg),
        Command::Extract {
            data,
            boards,
            measurements,
            labels,
            frame_advance_mm,
            frame_length_mm,
        } => {
            let p = &mut cfg.paths;
            p.data = data.or(p.data.take());
            p.boards = boards.or(p.boards.take());
            p.measurements = measurements.or(p.measurements.take());
            p.labels = labels.or(p.labels.take());
            cfg.frame_advance_mm = frame_advance_mm.unwrap_or(cfg.frame_advance_mm);
            cfg.frame_length_mm = frame_length_mm.unwrap_or(cfg.frame_length_mm);
            commands::extract(cfg)
        }
        Command::Triplets { features } => {
            cfg.paths.features = features.or(cfg.paths.features.take());
            commands::triplets(cfg)
        }
        Command::Train {
            features,
            split,
            triplets,
            epochs,
            custom_weights,
        } => {
            let p = &mut cfg.paths;
            p.features = features.or(p.features.take());
            p.split = split.or(p.split.take());
            p.triplets = triplets.or(p.triplets.take());
            let mut train = cfg.train_config(variant);
            if let Some(e) = epochs {
                train.epochs = e;
            }
            if custom_weights.is_some() {
                train.custom_weights = custom_weights;
            }
            cfg.train = Some(train);
            commands::train(cfg)
        }
        Command::Embed { model, features } => {
            if let Some(m) = model {
                cfg.paths.models = vec![m];
            }
            cfg.paths.features = features.or(cfg.paths.features.take());
            commands::embed(cfg)
        }
        Command::Cluster {
            embeddings,
            threshold,
            features,
            split,
        } => {
            let p = &mut cfg.paths;
            p.embeddings = embeddings.or(p.embeddings.take());
            p.features = features.or(p.features.take());
            p.split = split.or(p.split.take());
            commands::cluster(cfg, threshold)
        }
        Command::Eval {
            models,
            features,
            split,
        } => {
            let p = &mut cfg.paths;
            if !models.is_empty() {
                p.models = models;
            }
            p.features = features.or(p.features.take());
            p.split = split.or(p.split.take());
            commands::eval(cfg)
        }
        Command::Viz {
            embeddings,
            pairings,
            specimen,
            scope,
            split,
        } => {
            let p = &mut cfg.paths;
            p.embeddings = embeddings.or(p.embeddings.take());
            p.pairings = pairings.or(p.pairings.take());
            p.split = split.or(p.split.take());
            commands::viz(cfg, specimen, scope.unwrap_or(Scope::All))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let line = serde_json::json!({
                "error": "invalid",
                "exit_code": 1,
                "command": "",
                "message": e.kind().to_string(),
            });
            eprintln!("{line}");
            return ExitCode::from(1);
        }
    };
    let name = cli.command.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::to_string(&ErrorLine::new(name, &e)).expect("error line serializes");
            eprintln!("{line}");
            ExitCode::from(e.exit_code())
        }
    }
}
