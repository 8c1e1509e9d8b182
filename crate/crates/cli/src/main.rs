mod commands;
mod config;
mod triples;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::TransportKind;

/// Verbalize RDF triples with a rulebase, and train rulebases with a chat model.
#[derive(Debug, Parser)]
#[command(name = "ruleforge", version)]
pub struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct LlmArgs {
    #[arg(long, value_enum)]
    pub transport: Option<TransportKind>,
    /// Replay fixture (JSONL of {"reply": ...}) for --transport replay.
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Append every request and reply to this JSONL file.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One training pass over a dataset.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Starting rulebase; empty when omitted.
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Rulebase output, also written after every accepted rule.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-instance report as JSONL.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<usize>,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Add rules for co-occurring predicate combinations.
    Augment {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Where to save the synthetic instances behind new rules.
        #[arg(long)]
        synthetic: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<usize>,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Verbalize triples given inline or as a JSONL file.
    Generate {
        #[arg(long)]
        rules: Option<PathBuf>,
        /// One triple as subj|pred|obj; repeat for more.
        #[arg(long = "triple")]
        triples: Vec<String>,
        /// JSONL with a "triples" array per line; one output line per input.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Print JSON with the generation trace.
        #[arg(long)]
        trace: bool,
    },
    /// Score a rulebase on a test set.
    Evaluate {
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Per-instance records as JSONL.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Score the chat model verbalizing the test set directly.
    Direct {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// List rules, or show one by id or predicates.
    Inspect {
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long, conflicts_with = "predicates")]
        id: Option<String>,
        /// Comma-separated predicate list, in any order.
        #[arg(long)]
        predicates: Option<String>,
    },
    /// Rulebase composition.
    Stats {
        #[arg(long)]
        rules: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) if e.is::<commands::Usage>() => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
