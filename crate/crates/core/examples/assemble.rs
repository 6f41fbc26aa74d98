//! Building representation sets from synthesis output: per-n QC/QA/QCA,
//! the QC_ASM article and the QA union across n.
//!
//! cargo run --example assemble

use std::collections::BTreeMap;

use ski::assembly::{assemble_qc_articles, assemble_union_qa, build_qa, build_qc, build_qca};
use ski::corpus::{segment, windows, Document};
use ski::pipeline::offline_provider;
use ski::synthesis::{SynthesisSettings, Synthesizer};

fn main() -> ski::Result<()> {
    let doc = Document {
        id: "glacier".into(),
        title: String::new(),
        text: "A glacier is a body of dense ice. It moves under its own weight. \
               Moving ice carves valleys. Most glacial ice lies in Antarctica."
            .into(),
    };
    let sentences = segment(&doc)?;
    let provider = offline_provider(Vec::<(String, String)>::new());
    let synth = Synthesizer::new(&provider, SynthesisSettings::default());

    let mut qc = BTreeMap::new();
    let mut qa = BTreeMap::new();
    for n in 1..=3 {
        let ws = windows(&sentences, n)?;
        let questions = synth.questions(&ws, None)?;
        let pairs = synth.qa_pairs(&ws, None)?;
        let qca = build_qca(&pairs, &ws)?;
        println!("n={n}: {} QC, {} QA, {} QCA", ws.len(), pairs.len(), qca.len());
        qc.insert(n, build_qc(&questions, &ws)?);
        qa.insert(n, build_qa(&pairs)?);
    }
    let article = assemble_qc_articles(&qc, 3, None)?;
    println!("QC_ASM: {} article(s), {} windows", article.len(), article.items[0].provenance.len());
    println!("{}", article.items[0].text.lines().take(4).collect::<Vec<_>>().join("\n"));
    let union = assemble_union_qa(&qa, 3)?;
    println!("QA_ASM: {} distinct pairs", union.len());
    Ok(())
}
