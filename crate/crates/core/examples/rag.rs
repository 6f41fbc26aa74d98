//! Retrieval-augmented answering: Q-QC search, snippet consolidation under a
//! word budget, and one generator call.
//!
//! cargo run --example rag

use ski::assembly::build_qc;
use ski::corpus::{load_corpus, segment, windows};
use ski::llm::{CompletionRequest, Provider};
use ski::pipeline::{offline_provider, rag_prompt, RAG_MAX_TOKENS, RAG_TEMPERATURE, RAG_TOP_K};
use ski::retrieval::{build_sparse_index, consolidate_snippets, Bm25Params, SnippetSource};
use ski::synthesis::{SynthesisSettings, Synthesizer};

fn main() -> ski::Result<()> {
    let corpus = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/small/corpus.jsonl");
    let docs = load_corpus(corpus)?;
    let provider = offline_provider(Vec::<(String, String)>::new());
    let synth = Synthesizer::new(&provider, SynthesisSettings::default());
    let mut source = SnippetSource::new();
    let (mut questions, mut all) = (Vec::new(), Vec::new());
    for doc in &docs {
        let sentences = segment(doc)?;
        let ws = windows(&sentences, 2)?;
        questions.extend(synth.questions(&ws, None)?);
        all.extend(ws);
        source.add_sentences(&doc.id, sentences);
    }
    let set = build_qc(&questions, &all)?;
    source.add_set(&set);
    let index = build_sparse_index(&set, Bm25Params::default());

    let query = "Which town was buried by the eruption of Vesuvius?";
    let hits = index.search("q", query, 3)?;
    let context = consolidate_snippets(&source, &hits, 3, 60)?;
    println!("context ({} of {} words):\n{}\n", context.token_estimate(), context.budget_tokens, context.text());

    let request = CompletionRequest {
        temperature: RAG_TEMPERATURE,
        max_tokens: RAG_MAX_TOKENS,
        top_k: Some(RAG_TOP_K),
        ..CompletionRequest::new("gpt-3.5-turbo", rag_prompt(query, &context.text()))
    };
    println!("answer: {}", provider.complete(&request)?.text);
    Ok(())
}
