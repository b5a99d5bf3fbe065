//! Command-line front end for the dual-view retrieval library.
//!
//! Six subcommands cover the full workflow: `synth` fabricates a labeled
//! corpus, `ingest` chunks documents and extracts recipe summaries, `index`
//! builds dense or lexical indexes, `query` runs a retrieval variant, `eval`
//! scores a run against qrels, and `ablate` sweeps variants across seeds.
//!
//! Flags beat config-file values, which beat built-in defaults. Every run
//! writes the resolved configuration and a manifest of input/output hashes
//! into its output directory, so any run can be reproduced from those two
//! files alone.

mod artifacts;
mod backends;
mod commands;
mod config;
mod error;

use clap::{Args, Parser, Subcommand};
use commands::{AblateArgs, EvalArgs, IndexArgs, IngestArgs, QueryArgs, SynthArgs};
use config::Settings;
use error::CliResult;
use reciper_core::{Metric, PipelineVariant};
use std::path::PathBuf;
use std::process::ExitCode;

/// Flags accepted by every subcommand.
#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML config file (flags override its values)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// RNG seed: drives synthesis and the hashed embedding backend
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for embedding, extraction, and query batches
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Dense distance: cosine | sqeuclidean
    #[arg(long, global = true)]
    pub metric: Option<Metric>,
    /// Retrieval variant for `query` (see `ablate --help` for the list)
    #[arg(long, global = true)]
    pub variant: Option<PipelineVariant>,
    /// Weight of lexical coverage in the rerank score
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Candidates fetched per view before merging
    #[arg(long, global = true)]
    pub kc: Option<usize>,
    /// Evidence items kept after reranking
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Recipe-screener cosine threshold (omit to disable screening)
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    /// Output directory; refuses to run if another invocation holds it
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Parser)]
#[command(
    name = "reciper",
    version,
    about = "Dual-view retrieval over paragraph chunks and procedural recipe summaries"
)]
struct Cli {
    #[command(flatten)]
    globals: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic labeled corpus
    Synth(SynthArgs),
    /// Chunk documents and extract recipe summaries into a corpus file
    Ingest(IngestArgs),
    /// Build a dense or lexical index from a corpus file
    Index(IndexArgs),
    /// Retrieve evidence for one query or a query file
    Query(QueryArgs),
    /// Score a run file against relevance judgments
    Eval(EvalArgs),
    /// Run retrieval variants across seeds and tabulate the grid
    Ablate(AblateArgs),
}

fn run(cli: &Cli) -> CliResult<u8> {
    let settings = Settings::resolve(&cli.globals)?;
    match &cli.command {
        Command::Synth(args) => commands::cmd_synth(settings, args),
        Command::Ingest(args) => commands::cmd_ingest(settings, args),
        Command::Index(args) => commands::cmd_index(settings, args),
        Command::Query(args) => commands::cmd_query(settings, args),
        Command::Eval(args) => commands::cmd_eval(settings, args),
        Command::Ablate(args) => commands::cmd_ablate(settings, args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.code)
        }
    }
}
