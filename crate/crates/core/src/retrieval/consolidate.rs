//! Turns ranked representation hits into a bounded, deduplicated context
//! made of source sentences.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::RetrievalResult;
use crate::assembly::{Representation, RepresentationSet};
use crate::corpus::{join_sentences, Sentence};
use crate::error::{Error, Result};

/// Whitespace word count; the budget unit for consolidated context.
pub fn estimate_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub doc_id: String,
    /// First sentence index, inclusive.
    pub start: usize,
    /// Last sentence index, exclusive.
    pub end: usize,
    pub text: String,
    /// Best rank among the hits that contributed to this range.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsolidatedContext {
    pub query_id: String,
    pub snippets: Vec<Snippet>,
    pub budget_tokens: usize,
}

impl ConsolidatedContext {
    pub fn is_empty(&self) -> bool {
        self.snippets.is_empty()
    }

    /// Snippet texts separated by blank lines.
    pub fn text(&self) -> String {
        self.snippets
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    pub fn token_estimate(&self) -> usize {
        self.snippets.iter().map(|s| estimate_tokens(&s.text)).sum()
    }
}

/// Lookup tables mapping hits back to source sentences.
#[derive(Debug, Default, Clone)]
pub struct SnippetSource {
    representations: HashMap<String, Representation>,
    sentences: HashMap<String, Vec<Sentence>>,
}

impl SnippetSource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_set(&mut self, set: &RepresentationSet) -> &mut Self {
        for r in &set.items {
            self.representations.insert(r.id.clone(), r.clone());
        }
        self
    }

    /// Registers one document's segmented sentences.
    pub fn add_sentences(&mut self, doc_id: &str, sentences: Vec<Sentence>) -> &mut Self {
        self.sentences.insert(doc_id.to_string(), sentences);
        self
    }

    fn ranges(&self, rep_id: &str) -> Result<(&str, Vec<(usize, usize)>)> {
        let rep = self.representations.get(rep_id).ok_or_else(|| {
            Error::Invariant(format!("hit names unknown representation `{rep_id}`"))
        })?;
        let m = self.doc_sentences(&rep.doc_id)?.len();
        let ranges = if rep.provenance.is_empty() {
            vec![(0, m)]
        } else {
            rep.provenance
                .iter()
                .map(|w| (w.start.min(m), (w.start + w.n).min(m)))
                .filter(|(s, e)| s < e)
                .collect()
        };
        Ok((&rep.doc_id, ranges))
    }

    fn doc_sentences(&self, doc_id: &str) -> Result<&[Sentence]> {
        self.sentences
            .get(doc_id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Invariant(format!("no sentences registered for `{doc_id}`")))
    }
}

/// Expands the first `top_k` hits into provenance sentences, merges
/// overlapping ranges within a document, orders snippets by (best hit rank,
/// start sentence) and keeps whole sentences until `budget_tokens` would be
/// exceeded.
pub fn consolidate_snippets(
    source: &SnippetSource,
    result: &RetrievalResult,
    top_k: usize,
    budget_tokens: usize,
) -> Result<ConsolidatedContext> {
    // doc -> (start, end, rank)
    let mut by_doc: BTreeMap<&str, Vec<(usize, usize, usize)>> = BTreeMap::new();
    for hit in result.hits.iter().take(top_k) {
        let (doc_id, ranges) = source.ranges(&hit.representation_id)?;
        by_doc
            .entry(doc_id)
            .or_default()
            .extend(ranges.into_iter().map(|(s, e)| (s, e, hit.rank)));
    }

    let mut merged: Vec<(usize, usize, &str, usize)> = Vec::new(); // (rank, start, doc, end)
    for (doc_id, mut ranges) in by_doc {
        ranges.sort();
        let mut current: Option<(usize, usize, usize)> = None;
        for (s, e, r) in ranges {
            current = match current {
                Some((cs, ce, cr)) if s < ce => Some((cs, ce.max(e), cr.min(r))),
                Some((cs, ce, cr)) => {
                    merged.push((cr, cs, doc_id, ce));
                    Some((s, e, r))
                }
                None => Some((s, e, r)),
            };
        }
        if let Some((cs, ce, cr)) = current {
            merged.push((cr, cs, doc_id, ce));
        }
    }
    merged.sort();

    let mut snippets = Vec::new();
    let mut used = 0usize;
    'outer: for (rank, start, doc_id, end) in merged {
        let sentences = source.doc_sentences(doc_id)?;
        for (cut, s) in (start..end).zip(&sentences[start..end]) {
            let cost = estimate_tokens(&s.text);
            if used + cost > budget_tokens {
                if cut > start {
                    snippets.push(snippet(doc_id, sentences, start, cut, rank));
                }
                break 'outer;
            }
            used += cost;
        }
        snippets.push(snippet(doc_id, sentences, start, end, rank));
    }
    Ok(ConsolidatedContext {
        query_id: result.query_id.clone(),
        snippets,
        budget_tokens,
    })
}

fn snippet(doc_id: &str, sentences: &[Sentence], start: usize, end: usize, rank: usize) -> Snippet {
    Snippet {
        doc_id: doc_id.to_string(),
        start,
        end,
        text: join_sentences(&sentences[start..end]),
        rank,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_qc_article, build_qc, build_raw_articles};
    use crate::corpus::{segment, windows, Document};
    use crate::retrieval::Hit;
    use crate::synthesis::HypotheticalQuestion;

    fn doc() -> Document {
        Document {
            id: "d1".into(),
            title: "T".into(),
            text: "Alpha one two. Beta three four five. Gamma six.".into(),
        }
    }

    fn result(ids: &[&str]) -> RetrievalResult {
        RetrievalResult {
            query_id: "q".into(),
            hits: ids
                .iter()
                .enumerate()
                .map(|(i, id)| Hit {
                    representation_id: id.to_string(),
                    doc_id: "d1".into(),
                    score: 1.0 / (i + 1) as f64,
                    rank: i + 1,
                })
                .collect(),
        }
    }

    fn qc_set(n: usize) -> RepresentationSet {
        let sentences = segment(&doc()).unwrap();
        let ws = windows(&sentences, n).unwrap();
        let qs: Vec<HypotheticalQuestion> = ws
            .iter()
            .map(|w| HypotheticalQuestion::for_window(w, format!("Question {}?", w.start)).unwrap())
            .collect();
        build_qc(&qs, &ws).unwrap()
    }

    fn source(set: &RepresentationSet) -> SnippetSource {
        let mut s = SnippetSource::new();
        s.add_set(set).add_sentences("d1", segment(&doc()).unwrap());
        s
    }

    #[test]
    fn raw_article_is_whole_text() {
        let set = build_raw_articles(&[doc()]).unwrap();
        let ctx = consolidate_snippets(&source(&set), &result(&[&set.items[0].id]), 10, 2048).unwrap();
        assert_eq!(ctx.snippets.len(), 1);
        assert_eq!(ctx.text(), doc().text);
    }

    #[test]
    fn shared_sentence_appears_once() {
        let set = qc_set(2);
        let ids: Vec<&str> = set.items.iter().map(|r| r.id.as_str()).collect();
        let ctx = consolidate_snippets(&source(&set), &result(&ids), 10, 2048).unwrap();
        assert_eq!(ctx.snippets.len(), 1);
        assert_eq!((ctx.snippets[0].start, ctx.snippets[0].end), (0, 3));
        assert_eq!(ctx.text().matches("Beta").count(), 1);
    }

    #[test]
    fn order_follows_rank_then_position() {
        let set = qc_set(1);
        let ids = [set.items[2].id.as_str(), set.items[0].id.as_str()];
        let ctx = consolidate_snippets(&source(&set), &result(&ids), 10, 2048).unwrap();
        let starts: Vec<usize> = ctx.snippets.iter().map(|s| s.start).collect();
        assert_eq!(starts, [2, 0]);
        let only_first = consolidate_snippets(&source(&set), &result(&ids), 1, 2048).unwrap();
        assert_eq!(only_first.snippets.len(), 1);
    }

    #[test]
    fn assembled_article_cut_at_budget() {
        let per_window = qc_set(1);
        let asm = assemble_qc_article(&per_window.items, "d1").unwrap();
        let set = RepresentationSet::new(crate::assembly::Variant::QcAsm, vec![asm], "").unwrap();
        // Sentence costs 3, 4, 2 words: budget 7 keeps the first two.
        let ctx = consolidate_snippets(&source(&set), &result(&[&set.items[0].id]), 10, 7).unwrap();
        assert_eq!(ctx.text(), "Alpha one two.\n\nBeta three four five.");
        assert!(ctx.token_estimate() <= 7);
        let ctx = consolidate_snippets(&source(&set), &result(&[&set.items[0].id]), 10, 2).unwrap();
        assert!(ctx.is_empty());
    }

    #[test]
    fn unknown_hit_is_an_error() {
        let set = qc_set(1);
        assert!(consolidate_snippets(&source(&set), &result(&["nope"]), 10, 100).is_err());
    }
}
