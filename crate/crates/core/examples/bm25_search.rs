//! Okapi BM25 over raw articles, saved and reloaded, with a TREC run file.
//!
//! cargo run --example bm25_search -- "which river flows into the black sea"

use ski::assembly::build_raw_articles;
use ski::corpus::load_corpus;
use ski::retrieval::{build_sparse_index, doc_level_collapse, write_run, Bm25Params, SparseIndex};

fn main() -> ski::Result<()> {
    let query = std::env::args().nth(1).unwrap_or_else(|| "Who discovered penicillin?".into());
    let corpus = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/small/corpus.jsonl");
    let set = build_raw_articles(&load_corpus(corpus)?)?;
    let index = build_sparse_index(&set, Bm25Params::default());

    let dir = tempfile::tempdir().expect("temp dir");
    index.save(dir.path())?;
    let index = SparseIndex::load(dir.path())?;
    println!("{} items, {} terms, avg length {:.1}", index.item_count(), index.term_count(), index.avg_doc_length());

    let result = doc_level_collapse(&index.search("q1", &query, 5)?);
    for hit in &result.hits {
        println!("{:>2}  {:<16} {:.4}", hit.rank, hit.doc_id, hit.score);
    }
    write_run(std::io::stdout().lock(), &[result], "bm25-raw").expect("stdout");
    Ok(())
}
