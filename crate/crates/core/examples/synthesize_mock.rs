//! Question and QA-pair synthesis against a scripted provider, with the
//! offline extractive responder as fallback and an on-disk cache.
//!
//! cargo run --example synthesize_mock

use ski::corpus::{segment, windows, Document};
use ski::llm::{CachedProvider, Provider};
use ski::pipeline::offline_provider;
use ski::synthesis::{render_prompt, PromptTemplate, SynthesisSettings, Synthesizer};

fn main() -> ski::Result<()> {
    let doc = Document {
        id: "ravens".into(),
        title: String::new(),
        text: "Ravens are large black birds. They live in many climates. Ravens can mimic sounds.".into(),
    };
    let ws = windows(&segment(&doc)?, 2)?;
    println!("{}\n---", render_prompt(&PromptTemplate::fine_grained_questions(), &ws)?);

    // A scripted reply for the question prompt; the QA prompt falls through
    // to the extractive responder.
    let script = [(
        "2. They live in many climates. Ravens can mimic sounds.\n\nReturn the questions in a list.\n\n[\"1.",
        r#"["1. What do ravens look like?", "2. Which sounds can ravens copy?"]"#,
    )];
    let cache = tempfile::tempdir().expect("temp dir");
    let provider = CachedProvider::new(offline_provider(script), cache.path());
    let synth = Synthesizer::new(&provider, SynthesisSettings::default());

    for q in synth.questions(&ws, Some(&doc))? {
        println!("Q  {}:{}  {}", q.n, q.start, q.text);
    }
    for p in synth.qa_pairs(&ws, Some(&doc))? {
        println!("QA {}:{}  {} -> {}", p.question.n, p.question.start, p.question.text, p.answer);
    }
    // Second pass is served from the cache.
    synth.questions(&ws, Some(&doc))?;
    println!("provider {}", provider.id());
    Ok(())
}
