//! SFT and CPT training files from the Vivaldi golden records, replayed
//! through a scripted provider with tiled windows.
//!
//! cargo run --example export

use std::collections::BTreeMap;

use ski::assembly::{build_qa, build_qc};
use ski::corpus::{load_corpus, segment, windows_with_layout, WindowLayout};
use ski::export::{cpt_records, export_cpt, export_manifest, export_sft};
use ski::llm::MockProvider;
use ski::synthesis::{PromptTemplate, SynthesisSettings, Synthesizer};

fn main() -> ski::Result<()> {
    let fixtures = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/vivaldi");
    let docs = load_corpus(format!("{fixtures}/corpus.jsonl"))?;
    let script: BTreeMap<String, String> =
        serde_json::from_slice(&std::fs::read(format!("{fixtures}/mock_script.json")).expect("script"))?;
    let provider = MockProvider::new(script);
    let synth = Synthesizer::new(&provider, SynthesisSettings::default());
    let ws = windows_with_layout(&segment(&docs[0])?, 1, WindowLayout::Tiled)?;

    let qa = build_qa(&synth.qa_pairs(&ws, None)?)?;
    let qc = build_qc(&synth.questions(&ws, None)?, &ws)?;
    for r in cpt_records(&qa)?.iter().take(2) {
        println!("{}\n", r.text);
    }

    let out = tempfile::tempdir().expect("temp dir");
    let n = export_sft(&qa, &out.path().join("qa.sft.json"))?;
    let m = export_cpt(&qc, &out.path().join("qc.cpt.jsonl"))?;
    let manifest = export_manifest(
        &[&qa, &qc],
        &[&PromptTemplate::fine_grained_questions(), &PromptTemplate::interleaved_qa()],
        "mock",
        &out.path().join("manifest.json"),
    )?;
    println!("{n} SFT records, {m} CPT records");
    println!("{}", serde_json::to_string_pretty(&manifest)?);
    Ok(())
}
