mod common;

use common::{fold, golden_mismatches, replay};

#[test]
fn golden_records_replay() {
    let bad = golden_mismatches(&replay());
    assert!(bad.is_empty(), "{bad:#?}");
}

#[test]
fn fold_only_touches_known_noise() {
    assert_eq!(fold("1678\u{a0}\u{2013} 28"), "1678 - 28");
    assert_eq!(fold("Question:  Who?\"\n\nContext: \"x\""), "Question: Who?\n\nContext: x");
    assert_ne!(fold("Who was Vivaldi?"), fold("Who is Vivaldi?"));
}

#[test]
fn qa_answers_never_enter_indexed_text() {
    let r = replay();
    for (key, set) in &r.sets {
        for item in &set.items {
            if let Some(a) = &item.answer {
                assert!(!item.text.contains(a.as_str()), "{key}: {}", item.id);
            }
        }
    }
}

#[test]
fn pipeline_replay_matches_too() {
    let bad = golden_mismatches(&common::pipeline_replay());
    assert!(bad.is_empty(), "{bad:#?}");
}

#[test]
fn search_mode_fixture_ranks() {
    let [q, qc, raw] = common::search_mode_ranks("alwen");
    assert_eq!(q, Some(1));
    assert_eq!(qc, Some(1));
    println!("raw rank {raw:?}");
    assert!(raw.is_none_or(|r| r > 1));
}
