use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use glossgauge_core::config::Config;
use glossgauge_core::embedding::ProviderKind;
use glossgauge_core::generation::BackendKind;
use glossgauge_core::pipeline::{Error, Pipeline};

/// Score generated glossary definitions for adherence, robustness and
/// readability.
#[derive(Parser, Debug)]
#[command(name = "glossgauge", version, about)]
struct Cli {
    /// TOML config file (or a previous run's manifest.json).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for stub generation and the readability bootstrap.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Glossary snapshot (.jsonl, .csv or .tsv).
    #[arg(long, global = true)]
    glossary: Option<PathBuf>,
    /// File with one term per line to restrict the run to.
    #[arg(long, global = true)]
    keep_list: Option<PathBuf>,
    /// Completion backend.
    #[arg(long, global = true, value_enum)]
    backend: Option<Backend>,
    /// Embedding provider.
    #[arg(long, global = true, value_enum)]
    embedder: Option<Embedder>,
    /// Directory for artifacts and caches.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Number of highest and lowest ranked terms to list.
    #[arg(long, global = true)]
    top_k: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Load, normalize and subset the glossary.
    Ingest,
    /// Collect completions for every term and template.
    Generate,
    /// Embed definitions and completions and compute adherence and robustness.
    Score,
    /// Bootstrap readability estimates for both corpora.
    Readability,
    /// Assemble tables, rankings and histograms.
    Report,
    /// All stages in order.
    Run,
}

impl Command {
    fn stage(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Generate => "generate",
            Command::Score => "score",
            Command::Readability => "readability",
            Command::Report => "report",
            Command::Run => "run",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Backend {
    Stub,
    HttpChat,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Embedder {
    HashedStub,
    Http,
}

fn build_config(cli: &Cli) -> Result<Config, Error> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(p) = &cli.glossary {
        cfg.glossary.snapshot = Some(p.clone());
    }
    if let Some(p) = &cli.keep_list {
        cfg.glossary.keep_list = Some(p.clone());
    }
    if let Some(b) = cli.backend {
        cfg.generation.backend = match b {
            Backend::Stub => BackendKind::Stub,
            Backend::HttpChat => BackendKind::HttpChat,
        };
    }
    if let Some(e) = cli.embedder {
        cfg.embedding.kind = match e {
            Embedder::HashedStub => ProviderKind::HashedStub,
            Embedder::Http => ProviderKind::Http,
        };
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(k) = cli.top_k {
        cfg.report.top_k = k;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let stage = cli.command.stage();
    let mut pipeline = match build_config(&cli).and_then(Pipeline::new) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let outcome = pipeline.run_stage(stage);
    pipeline.finish(stage, &outcome);
    let stats = pipeline.stats();
    log::info!("{stage}: {} generation calls, {} embedding calls", stats.generation_calls, stats.embedding_calls);
    match outcome {
        Ok(()) => {
            if matches!(cli.command, Command::Report | Command::Run) {
                match std::fs::read_to_string(pipeline.out_dir().join("report.txt")) {
                    Ok(text) => print!("{text}"),
                    Err(e) => log::warn!("cannot read report.txt: {e}"),
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
