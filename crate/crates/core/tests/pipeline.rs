mod common;

use std::path::Path;

use common::{scratch, tree_bytes};
use ski::assembly::Variant;
use ski::pipeline::{Pipeline, PipelineConfig};
use ski::Error;

fn open(dir: &Path) -> Pipeline {
    Pipeline::open(PipelineConfig::load(dir.join("ski.toml")).unwrap()).unwrap()
}

fn one_doc(dir: &Path, variants: &str) -> PipelineConfig {
    std::fs::write(
        dir.join("corpus.jsonl"),
        r#"{"_id":"d","title":"","text":"Ravens are large black birds. They live in many climates. Ravens can mimic sounds. Pairs often stay together for life."}"#,
    )
    .unwrap();
    let mut c = PipelineConfig::parse(&format!("corpus = \"corpus.jsonl\"\nvariants = {variants}")).unwrap();
    c.resolve_paths(dir);
    c
}

#[test]
fn four_sentences_three_orders_count_law() {
    let tmp = tempfile::tempdir().unwrap();
    let config = one_doc(tmp.path(), r#"["QC", "QA", "QC_ASM", "QA_ASM", "C_ASM"]"#);
    let p = Pipeline::open(config).unwrap();
    let ingest = p.run_ingest().unwrap();
    assert_eq!(ingest.sentences, 4);
    assert_eq!(ingest.windows.values().copied().collect::<Vec<_>>(), [4, 3, 2]);

    let synth = p.run_synthesize().unwrap();
    assert_eq!((synth.batches, synth.questions, synth.qa_pairs), (3, 9, 9));

    let sets = p.run_assemble().unwrap().sets;
    assert_eq!(sets["QC-1"], 4);
    assert_eq!(sets["QC-2"], 3);
    assert_eq!(sets["QC-3"], 2);
    assert_eq!(sets["QC_ASM-3"], 1);
    assert!(sets["QA_ASM-3"] <= 9);
    assert_eq!(sets["C_ASM-3"], 9);

    let article = p.load_set(Variant::QcAsm, Some(3)).unwrap();
    assert_eq!(article.items[0].provenance.len(), 9);
}

#[test]
fn synthesis_resumes_from_stored_batches() {
    let tmp = tempfile::tempdir().unwrap();
    let config = one_doc(tmp.path(), r#"["QC"]"#);
    let first = {
        let p = Pipeline::open(config.clone()).unwrap();
        p.run_synthesize().unwrap()
    };
    assert_eq!(first.reused, 0);

    // Drop one batch: only that one is regenerated.
    let victim = std::fs::read_dir(first.dir.join("batches")).unwrap().next().unwrap().unwrap().path();
    std::fs::remove_file(&victim).unwrap();
    let p = Pipeline::open(config).unwrap();
    let second = p.run_synthesize().unwrap();
    assert_eq!(second.reused, 2);
    assert_eq!(second.questions, first.questions);
    assert!(victim.exists());
}

#[test]
fn second_open_of_a_work_dir_is_locked() {
    let tmp = tempfile::tempdir().unwrap();
    let config = one_doc(tmp.path(), r#"["QC"]"#);
    let held = Pipeline::open(config.clone()).unwrap();
    assert!(matches!(Pipeline::open(config.clone()), Err(Error::Locked(_))));
    drop(held);
    Pipeline::open(config).unwrap();
}

#[test]
fn full_run_scores_and_exports() {
    let (_tmp, dir) = scratch("small");
    let p = open(&dir);
    let summary = p.run_all().unwrap();

    let retrieval = summary.retrieval.unwrap();
    assert_eq!(retrieval.query_count, 12);
    let ndcg = retrieval.get("ndcg@10").unwrap();
    assert!(ndcg > 0.5, "QC_ASM nDCG@10 {ndcg}");

    let generation = summary.generation.unwrap();
    // The generator is scripted for the Lorman question only.
    assert_eq!(generation.per_query["q1"]["f1"], 1.0);

    let manifest = &summary.export.manifest;
    assert_eq!(manifest.counts["QC-1"], 100);
    assert_eq!(manifest.counts["QC-3"], 60);
    // Articles and raw documents are retrieval-only.
    assert!(!manifest.counts.contains_key("QC_ASM-3"));
    assert!(!manifest.counts.contains_key("RAW_ARTICLE"));
    assert!(summary.export.files.iter().all(|f| f.exists()));
}

#[test]
fn rag_answer_for_one_query() {
    let (_tmp, dir) = scratch("small");
    let p = open(&dir);
    p.run_ingest().unwrap();
    p.run_synthesize().unwrap();
    p.run_assemble().unwrap();
    p.run_index(Variant::QcAsm, Some(3)).unwrap();
    let a = p
        .run_rag(
            Variant::QcAsm,
            Some(3),
            "x",
            "In which town is the university where Charlie Spiller coaches located?",
        )
        .unwrap();
    assert_eq!(a.answer, "Lorman, Mississippi");
    assert!(!a.no_context);
    assert!(a.context.token_estimate() <= 256);
    assert!(a.context.text().contains("Charlie Spiller"), "{}", a.context.text());
}

#[test]
fn two_runs_are_byte_identical() {
    let (_a, dir_a) = scratch("small");
    let (_b, dir_b) = scratch("small");
    for dir in [&dir_a, &dir_b] {
        open(dir).run_all().unwrap();
    }
    let a = tree_bytes(&dir_a.join("work"));
    let b = tree_bytes(&dir_b.join("work"));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (path, bytes) in &a {
        assert!(bytes == &b[path], "{} differs", path.display());
    }
    assert!(a.keys().any(|p| p.to_string_lossy().ends_with(".trec")));
}
