//! `sgl`: scene-graph layout generation and shape-aware patch retrieval.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure
//! (gradient check above tolerance).

mod commands;
mod config;
mod dataset;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "sgl",
    version,
    about = "Scene-graph layout generation, evaluation, and patch retrieval"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a dataset directory from annotations or a synthetic corpus.
    BuildDataset {
        /// COCO-style annotation JSON file.
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Add heuristic depth/support relations to the graphs.
        #[arg(long)]
        augment: bool,
        /// Generate the seeded synthetic corpus instead of ingesting.
        #[arg(long)]
        synthetic: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of synthetic scenes.
        #[arg(long, default_value_t = 100)]
        scenes: usize,
    },
    /// Train the layout model on a dataset directory.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Checkpoint output path; a JSON sidecar lands next to it.
        #[arg(long)]
        out: PathBuf,
        /// JSON run configuration; desk-scale defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Loss-curve CSV path (default: <out>.losses.csv).
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Evaluate predicted layouts against a dataset's ground truth.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Report JSON output path.
        #[arg(long)]
        report: PathBuf,
        /// Score the ground-truth boxes themselves (sanity oracle).
        #[arg(long)]
        inject_gt: bool,
    },
    /// Predict a layout for one scene graph and render it.
    Predict {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Output PPM path.
        #[arg(long)]
        out: PathBuf,
        /// Overlay octagon outlines.
        #[arg(long)]
        octagons: bool,
        /// Rendered image side in pixels.
        #[arg(long, default_value_t = 256)]
        size: usize,
    },
    /// Build the retrieval index from a dataset's patch records.
    Index {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrieve the best-matching patches for one object of a graph.
    Retrieve {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Object index within the graph.
        #[arg(long)]
        object: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Output directory for ranked masks and ids.
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify analytic gradients against finite differences.
    GradCheck {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Errors mapped onto the documented exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<sgl_core::Error> for CliError {
    fn from(e: sgl_core::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::BuildDataset { annotations, out, augment, synthetic, seed, scenes } => {
            match (annotations, synthetic) {
                (Some(_), true) => Err(CliError::Usage(
                    "--annotations and --synthetic are mutually exclusive".into(),
                )),
                (None, false) => Err(CliError::Usage(
                    "build-dataset needs --annotations FILE or --synthetic".into(),
                )),
                (Some(path), false) => {
                    commands::build_dataset_from_annotations(&path, &out, augment, seed)
                }
                (None, true) => commands::build_dataset_synthetic(&out, seed, scenes, augment),
            }
        }
        Command::Train { dataset, out, config, curve } => {
            commands::train(&dataset, &out, config.as_deref(), curve.as_deref())
        }
        Command::Eval { dataset, model, report, inject_gt } => {
            if model.is_none() && !inject_gt {
                return Err(CliError::Usage("eval needs --model unless --inject-gt".into()));
            }
            commands::eval(&dataset, model.as_deref(), &report, inject_gt)
        }
        Command::Predict { graph, model, out, octagons, size } => {
            commands::predict(&graph, &model, &out, octagons, size)
        }
        Command::Index { dataset, out } => commands::index(&dataset, &out),
        Command::Retrieve { index, graph, model, object, k, out } => {
            commands::retrieve(&index, &graph, &model, object, k, &out)
        }
        Command::GradCheck { config } => commands::grad_check(config.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are success, not usage errors
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}
