//! `bege` — build indexes, query for evidence, evaluate, and serve.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bege_core::corpus::{parse_corpus, ParseMode};
use bege_core::engine::{evaluate, load_golden, Engine, EngineConfig, EngineError};
use bege_core::retrieval::build_index;

mod server;

#[derive(Parser)]
#[command(name = "bege", version, about = "Evidence generation engine for biomedical abstracts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an inverted index from a JSONL corpus.
    Index {
        /// Corpus file: one {"id", "title", "abstract"} object per line.
        #[arg(long)]
        corpus: PathBuf,
        /// Output index file.
        #[arg(long)]
        out: PathBuf,
        /// Skip bad corpus lines (reporting them) instead of aborting.
        #[arg(long)]
        lenient: bool,
    },
    /// Query the index and print evidence for each hit.
    Query {
        #[command(flatten)]
        common: QueryArgs,
        /// Print the full JSON evidence set instead of a text summary.
        #[arg(long)]
        json: bool,
    },
    /// Query and print the full JSON evidence set (alias for `query --json`).
    Evidence {
        #[command(flatten)]
        common: QueryArgs,
    },
    /// Run queries from a golden file and report metrics.
    Eval {
        /// Golden JSONL: {query, relevant_doc_ids, skeleton_items, reference_summary}.
        #[arg(long)]
        golden: PathBuf,
        /// Engine config file.
        #[arg(long)]
        config: PathBuf,
        /// Override the index path from the config.
        #[arg(long)]
        index: Option<PathBuf>,
    },
    /// Serve the engine over HTTP.
    Serve {
        /// Engine config file.
        #[arg(long)]
        config: PathBuf,
        /// Listen address, e.g. 127.0.0.1:8080.
        #[arg(long)]
        addr: String,
        /// Override the index path from the config.
        #[arg(long)]
        index: Option<PathBuf>,
    },
}

#[derive(Args)]
struct QueryArgs {
    /// Comma-separated entities, with optional type prefixes
    /// ("disease:diabetes, drug:metformin").
    query: String,
    /// Engine config file.
    #[arg(long)]
    config: PathBuf,
    /// Override the index path from the config.
    #[arg(long)]
    index: Option<PathBuf>,
    /// Override the result depth from the config.
    #[arg(long)]
    k: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are successes, not usage errors.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = match err.downcast_ref::<EngineError>() {
                Some(EngineError::EmptyQuery | EngineError::InvalidEntity(_)) => 1,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Index { corpus, out, lenient } => cmd_index(&corpus, &out, lenient),
        Command::Query { common, json } => cmd_query(common, json),
        Command::Evidence { common } => cmd_query(common, true),
        Command::Eval { golden, config, index } => cmd_eval(&golden, &config, index),
        Command::Serve { config, addr, index } => {
            let engine = load_engine(&config, index, None)?;
            server::serve(engine, &addr)
        }
    }
}

fn cmd_index(corpus: &PathBuf, out: &PathBuf, lenient: bool) -> anyhow::Result<()> {
    let file = std::fs::File::open(corpus)
        .map_err(|e| anyhow::Error::new(EngineError::Config(format!(
            "cannot open corpus {}: {e}", corpus.display()
        ))))?;
    let mode = if lenient { ParseMode::Lenient } else { ParseMode::Strict };
    let parsed = parse_corpus(std::io::BufReader::new(file), mode)
        .map_err(EngineError::Corpus)?;
    for issue in &parsed.skipped {
        eprintln!("skipped: {issue}");
    }
    let index = build_index(&parsed.documents).map_err(EngineError::Index)?;
    index.save(out).map_err(EngineError::Index)?;
    println!(
        "indexed {} documents ({} skipped) -> {}",
        parsed.documents.len(),
        parsed.skipped.len(),
        out.display()
    );
    Ok(())
}

fn load_engine(
    config_path: &PathBuf,
    index_override: Option<PathBuf>,
    k_override: Option<usize>,
) -> anyhow::Result<Engine> {
    let mut config = EngineConfig::from_file(config_path)?;
    if let Some(index) = index_override {
        config.index_path = index;
    }
    if let Some(k) = k_override {
        config.k = k;
    }
    Ok(Engine::from_config(&config)?)
}

fn cmd_query(args: QueryArgs, json: bool) -> anyhow::Result<()> {
    let engine = load_engine(&args.config, args.index, args.k)?;
    let set = engine.run_pipeline(&args.query)?;
    if json {
        println!("{}", set.to_json());
        return Ok(());
    }
    if set.results.is_empty() {
        println!("no qualifying documents");
        return Ok(());
    }
    for result in &set.results {
        println!(
            "#{} {} (score {:.4})",
            result.hit.rank, result.hit.doc_id, result.hit.score
        );
        match &result.outcome {
            Ok(evidence) => {
                for (index, text) in &evidence.sentences {
                    println!("  [{index}] {text}");
                }
            }
            Err(reason) => println!("  no evidence: {reason}"),
        }
    }
    Ok(())
}

fn cmd_eval(golden: &PathBuf, config: &PathBuf, index: Option<PathBuf>) -> anyhow::Result<()> {
    let engine = load_engine(config, index, None)?;
    let entries = load_golden(golden).map_err(EngineError::Eval)?;
    let mut outputs = Vec::with_capacity(entries.len());
    for entry in &entries {
        match engine.run_pipeline(&entry.query) {
            Ok(set) => outputs.push(set),
            // A query that parses but matches nothing still evaluates; a
            // malformed golden query is a data error.
            Err(EngineError::EmptyQuery | EngineError::InvalidEntity(_)) => {
                return Err(EngineError::Config(format!(
                    "golden query \"{}\" is not a valid query",
                    entry.query
                ))
                .into())
            }
            Err(other) => return Err(other.into()),
        }
    }
    let report = evaluate(&outputs, &entries).map_err(EngineError::Eval)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
