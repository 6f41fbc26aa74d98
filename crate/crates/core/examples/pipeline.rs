//! Every stage over the 20-document fixture, offline, in a scratch work
//! directory.
//!
//! cargo run --example pipeline

use ski::pipeline::{Pipeline, PipelineConfig};

fn main() -> ski::Result<()> {
    let fixtures = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/small");
    let mut config = PipelineConfig::load(format!("{fixtures}/ski.toml"))?;
    let work = tempfile::tempdir().expect("temp dir");
    config.work_dir = work.path().to_path_buf();

    let pipeline = Pipeline::open(config)?;
    let summary = pipeline.run_all()?;
    println!("{} documents, {} sentences", summary.ingest.documents, summary.ingest.sentences);
    println!("{} questions, {} QA pairs", summary.synthesis.questions, summary.synthesis.qa_pairs);
    for (key, count) in &summary.assembly.sets {
        println!("  {key:<12} {count}");
    }
    if let Some(r) = &summary.retrieval {
        println!("retrieval over {} ({} queries): {:?}", summary.index.key, r.query_count, r.macro_avg);
    }
    if let Some(g) = &summary.generation {
        println!("generation F1 {:.3}", g.macro_avg["f1"]);
    }
    println!("{} export files", summary.export.files.len());
    Ok(())
}
