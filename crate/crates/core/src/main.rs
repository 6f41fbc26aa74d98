use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use ski::assembly::Variant;
use ski::pipeline::{Pipeline, PipelineConfig};
use ski::retrieval::{doc_level_collapse, RetrieverKind};

#[derive(Parser)]
#[command(name = "ski", version, about = "Synthetic knowledge ingestion pipeline")]
struct Cli {
    /// Pipeline config (TOML).
    #[arg(long, global = true, default_value = "ski.toml")]
    config: PathBuf,
    /// Representation variant to index, search, answer from or evaluate.
    #[arg(long, global = true)]
    variant: Option<Variant>,
    /// Window order (per-n variants) or highest order (assembled variants).
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Hits per query in run files.
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    retriever: Option<RetrieverKind>,
    /// Hits expanded into RAG context.
    #[arg(long = "top-k", global = true)]
    top_k: Option<usize>,
    /// RAG context budget in estimated tokens.
    #[arg(long, global = true)]
    budget: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment the corpus and materialize windows.
    Ingest,
    /// Generate questions and QA pairs for every (document, n).
    Synthesize,
    /// Build the configured representation sets.
    Assemble,
    /// Build an index over one representation set.
    Index,
    /// Search one query, or every configured query into a run file.
    Search {
        #[arg(long)]
        query: Option<String>,
    },
    /// Answer one query, or every configured query, with retrieved context.
    Rag {
        #[arg(long)]
        query: Option<String>,
    },
    /// nDCG@k and Recall@k against the configured qrels.
    EvalRetrieval,
    /// Token F1 of RAG answers against the configured gold answers.
    EvalGen,
    /// Write SFT and CPT training files.
    Export,
    /// Every stage in order.
    Run,
}

fn print<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut config = PipelineConfig::load(&cli.config)
        .with_context(|| format!("loading {}", cli.config.display()))?;
    if let Some(v) = cli.variant {
        if !config.variants.contains(&v) {
            config.variants.push(v);
        }
        config.variant = Some(v);
    }
    config.n = cli.n.or(config.n);
    config.k = cli.k.unwrap_or(config.k);
    config.retriever = cli.retriever.unwrap_or(config.retriever);
    config.top_k = cli.top_k.unwrap_or(config.top_k);
    config.budget = cli.budget.unwrap_or(config.budget);

    let pipeline = Pipeline::open(config)?;
    let variant = pipeline.config().search_variant();
    let order = pipeline.config().order_for(variant);
    match cli.command {
        Command::Ingest => print(&pipeline.run_ingest()?),
        Command::Synthesize => print(&pipeline.run_synthesize()?),
        Command::Assemble => print(&pipeline.run_assemble()?),
        Command::Index => print(&pipeline.run_index(variant, order)?),
        Command::Search { query: Some(q) } => {
            let retriever = pipeline.load_retriever(variant, order)?;
            print(&doc_level_collapse(&retriever.search("query", &q, pipeline.config().k)?))
        }
        Command::Search { query: None } => {
            let (results, path) = pipeline.run_search(variant, order)?;
            eprintln!("wrote {} queries to {}", results.len(), path.display());
            Ok(())
        }
        Command::Rag { query: Some(q) } => print(&pipeline.run_rag(variant, order, "query", &q)?),
        Command::Rag { query: None } => {
            let (answers, path) = pipeline.run_rag_all(variant, order)?;
            eprintln!("wrote {} answers to {}", answers.len(), path.display());
            Ok(())
        }
        Command::EvalRetrieval => print(&pipeline.run_eval_retrieval(variant, order)?.macro_avg),
        Command::EvalGen => print(&pipeline.run_eval_generation(variant, order)?.macro_avg),
        Command::Export => print(&pipeline.run_export()?),
        Command::Run => {
            let summary = pipeline.run_all()?;
            print(&summary.assembly.sets)?;
            if let Some(r) = &summary.retrieval {
                print(&r.macro_avg)?;
            }
            if let Some(g) = &summary.generation {
                print(&g.macro_avg)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<ski::Error>().map_or(1, ski::Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
