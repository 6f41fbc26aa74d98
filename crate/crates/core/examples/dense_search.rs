//! Exact cosine search with the feature-hashing embedder, over QC items.
//!
//! cargo run --example dense_search

use ski::assembly::build_qc;
use ski::corpus::{load_corpus, segment, windows};
use ski::pipeline::offline_provider;
use ski::retrieval::{build_dense_index, doc_level_collapse, DenseIndex, Embedder, HashingEmbedder};
use ski::synthesis::{SynthesisSettings, Synthesizer};

fn main() -> ski::Result<()> {
    let corpus = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/small/corpus.jsonl");
    let provider = offline_provider(Vec::<(String, String)>::new());
    let synth = Synthesizer::new(&provider, SynthesisSettings::default());
    let mut questions = Vec::new();
    let mut all = Vec::new();
    for doc in load_corpus(corpus)? {
        let ws = windows(&segment(&doc)?, 1)?;
        questions.extend(synth.questions(&ws, None)?);
        all.extend(ws);
    }
    let set = build_qc(&questions, &all)?;
    let embedder = HashingEmbedder::default();
    let index = build_dense_index(&set, &embedder)?;
    let dir = tempfile::tempdir().expect("temp dir");
    index.save(dir.path())?;
    let index = DenseIndex::load(dir.path())?;
    println!("{} vectors of dimension {} ({})", index.item_count(), index.dimension(), embedder.id());

    for q in ["largest moon of Saturn", "where did Gutenberg print books"] {
        let r = doc_level_collapse(&index.search(&embedder, "q", q, 10)?);
        let docs: Vec<_> = r.hits.iter().take(3).map(|h| format!("{} {:.3}", h.doc_id, h.score)).collect();
        println!("{q:?}: {}", docs.join(", "));
    }
    Ok(())
}
