//! `callsight`: build program graphs, gather call edges, train and query the
//! link predictor, and serve the triage API.
//!
//! Exit status is 0 on success, 1 on a usage error and 2 on a data error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl From<callsight::Error> for CliError {
    fn from(e: callsight::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<callsight_triage::TriageError> for CliError {
    fn from(e: callsight_triage::TriageError) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "callsight",
    version,
    about = "Call-edge link prediction for JavaScript projects"
)]
pub struct Cli {
    /// Machine-readable output: JSON summaries on stdout, JSON diagnostics on stderr.
    #[arg(long, global = true)]
    pub json: bool,
    /// Pipeline config file; flags override its settings.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed recorded in outputs and used for training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel stages (1 for the deterministic mode).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, prune and link a project into a graph file.
    BuildGraph(BuildGraphArgs),
    /// Produce a static edge file from an analyzer export or the built-in resolver.
    StaticEdges(StaticEdgesArgs),
    /// Write an instrumented copy of a project that logs call edges.
    Instrument(InstrumentArgs),
    /// Turn a trace from an instrumented run into a dynamic edge file.
    TraceParse(TraceParseArgs),
    /// Train a link predictor.
    Train(TrainArgs),
    /// Rank candidate callees for one call site.
    Rank(RankArgs),
    /// Rank held-out edges and report hit@k.
    Evaluate(EvaluateArgs),
    /// Leave-one-project-out training and evaluation.
    Transfer(TransferArgs),
    /// Label edges with their resolution category.
    Categorize(CategorizeArgs),
    /// Serve the triage API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct BuildGraphArgs {
    #[arg(long, value_name = "DIR")]
    pub project: Option<PathBuf>,
    /// Include glob (repeatable); defaults to JavaScript sources.
    #[arg(long = "include", value_name = "GLOB")]
    pub include: Vec<String>,
    /// Exclude glob (repeatable); defaults to `**/node_modules/**`.
    #[arg(long = "exclude", value_name = "GLOB")]
    pub exclude: Vec<String>,
    /// Comma-separated node kinds to prune.
    #[arg(
        long,
        value_delimiter = ',',
        value_name = "KINDS",
        conflicts_with = "no_prune"
    )]
    pub prune_kinds: Option<Vec<String>>,
    /// Keep every node.
    #[arg(long)]
    pub no_prune: bool,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["ingest", "heuristic"]))]
pub struct StaticEdgesArgs {
    #[arg(long, value_name = "FILE")]
    pub graph: Option<PathBuf>,
    /// Position-based edge export of an external analyzer.
    #[arg(long, value_name = "FILE")]
    pub ingest: Option<PathBuf>,
    /// Use the built-in conservative resolver.
    #[arg(long)]
    pub heuristic: bool,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InstrumentArgs {
    #[arg(long, value_name = "DIR")]
    pub project: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long = "include", value_name = "GLOB")]
    pub include: Vec<String>,
    #[arg(long = "exclude", value_name = "GLOB")]
    pub exclude: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TraceParseArgs {
    #[arg(long, value_name = "FILE")]
    pub graph: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub trace: PathBuf,
    /// Site map written by `instrument`.
    #[arg(long, value_name = "FILE")]
    pub site_map: PathBuf,
    /// Original (uninstrumented) sources; defaults to the graph's project.
    #[arg(long, value_name = "DIR")]
    pub project: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HyperparamArgs {
    /// Hyperparameters as JSON; individual flags override it.
    #[arg(long, value_name = "FILE")]
    pub hp: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Use call edges only as labels, never as messages.
    #[arg(long)]
    pub labels_only: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    pub graph: Option<PathBuf>,
    /// Labelled edge file (repeatable; files are merged).
    #[arg(long = "edges", value_name = "FILE")]
    pub edges: Vec<PathBuf>,
    /// Checkpoint path; the sidecar goes to `<out>.json`.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Per-epoch training report.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
    /// Include wall-clock timings in the report (makes it non-reproducible).
    #[arg(long)]
    pub record_times: bool,
    #[command(flatten)]
    pub hp: HyperparamArgs,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long, value_name = "FILE")]
    pub graph: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// `FILE:START`, `FILE:START:END`, or a node id.
    #[arg(long, value_name = "SITE")]
    pub callsite: String,
    #[arg(long, default_value_t = callsight::eval::MAX_K)]
    pub k: usize,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "FILE")]
    pub graph: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Edges to rank; defaults to the checkpoint's test split.
    #[arg(long = "edges", value_name = "FILE")]
    pub edges: Vec<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Per-edge predictions file.
    #[arg(long, value_name = "FILE")]
    pub predictions: Option<PathBuf>,
    /// Candidates listed per prediction.
    #[arg(long, default_value_t = callsight::eval::MAX_K)]
    pub k: usize,
    /// Directory for rank-histogram SVG plots.
    #[arg(long, value_name = "DIR")]
    pub plots: Option<PathBuf>,
    #[arg(long)]
    pub record_times: bool,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub record_times: bool,
    #[command(flatten)]
    pub hp: HyperparamArgs,
}

#[derive(Debug, Args)]
pub struct CategorizeArgs {
    #[arg(long, value_name = "FILE")]
    pub graph: Option<PathBuf>,
    #[arg(long = "edges", value_name = "FILE")]
    pub edges: Vec<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 7878)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, value_name = "FILE")]
    pub graph: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Static edge file.
    #[arg(long, value_name = "FILE")]
    pub edges: Option<PathBuf>,
    /// Decision log (created if missing).
    #[arg(long, value_name = "FILE")]
    pub log: PathBuf,
}

fn main() -> ExitCode {
    let json = std::env::args().any(|a| a == "--json");
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            report_error(json, "usage", text.strip_prefix("error: ").unwrap_or(&text));
            return ExitCode::from(1);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            report_error(cli.json, "usage", &m);
            ExitCode::from(1)
        }
        Err(CliError::Data(m)) => {
            report_error(cli.json, "data", &m);
            ExitCode::from(2)
        }
    }
}

fn report_error(json: bool, kind: &str, message: &str) {
    if json {
        let v = serde_json::json!({"level": "error", "kind": kind, "message": message.trim_end()});
        eprintln!("{v}");
    } else {
        eprintln!("error: {}", message.trim_end());
    }
}
