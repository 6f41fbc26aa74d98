//! Okapi BM25 over an in-memory inverted index.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenize::tokenize_with;
use super::{rank, read_manifest, write_manifest, IndexManifest, RetrievalResult, RetrieverKind};
use crate::assembly::{RepresentationSet, Variant};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
    #[serde(default)]
    pub stopwords: BTreeSet<String>,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params {
            k1: 1.2,
            b: 0.75,
            stopwords: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub ordinal: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseIndex {
    postings: HashMap<String, Vec<Posting>>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    item_ids: Vec<String>,
    doc_ids: Vec<String>,
    params: Bm25Params,
    variant: Variant,
    corpus_fingerprint: String,
}

pub fn build_sparse_index(set: &RepresentationSet, params: Bm25Params) -> SparseIndex {
    let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
    let mut doc_lengths = Vec::with_capacity(set.items.len());
    for (ordinal, item) in set.items.iter().enumerate() {
        let tokens = tokenize_with(&item.text, &params.stopwords);
        doc_lengths.push(tokens.len() as u32);
        let mut tf: HashMap<String, u32> = HashMap::new();
        for t in tokens {
            *tf.entry(t).or_default() += 1;
        }
        for (term, count) in tf {
            postings.entry(term).or_default().push(Posting {
                ordinal: ordinal as u32,
                tf: count,
            });
        }
    }
    // Ordinals were pushed in increasing order, so every list is sorted.
    let avg_doc_length = if doc_lengths.is_empty() {
        0.0
    } else {
        doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / doc_lengths.len() as f64
    };
    SparseIndex {
        postings,
        doc_lengths,
        avg_doc_length,
        item_ids: set.items.iter().map(|r| r.id.clone()).collect(),
        doc_ids: set.items.iter().map(|r| r.doc_id.clone()).collect(),
        params,
        variant: set.variant,
        corpus_fingerprint: set.corpus_fingerprint.clone(),
    }
}

/// BM25 score of one item: the sum over query terms (with multiplicity) of
/// `idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avglen))`, where
/// `idf = ln(1 + (N - df + 0.5) / (df + 0.5))`.
pub fn bm25_score(index: &SparseIndex, query_tokens: &[String], item_ordinal: usize) -> Result<f64> {
    if item_ordinal >= index.item_count() {
        return Err(Error::InvalidArgument(format!(
            "item ordinal {item_ordinal} out of range ({} items)",
            index.item_count()
        )));
    }
    let mut score = 0.0;
    for token in query_tokens {
        let Some(list) = index.postings.get(token) else {
            continue;
        };
        if let Ok(pos) = list.binary_search_by_key(&(item_ordinal as u32), |p| p.ordinal) {
            score += index.term_weight(list.len(), list[pos].tf, item_ordinal);
        }
    }
    Ok(score)
}

impl SparseIndex {
    pub fn item_count(&self) -> usize {
        self.item_ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn params(&self) -> &Bm25Params {
        &self.params
    }

    pub fn postings(&self, term: &str) -> Option<&[Posting]> {
        self.postings.get(term).map(Vec::as_slice)
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.item_count() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, df: usize, tf: u32, ordinal: usize) -> f64 {
        let Bm25Params { k1, b, .. } = self.params;
        let tf = tf as f64;
        let len = self.doc_lengths[ordinal] as f64;
        self.idf(df) * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / self.avg_doc_length))
    }

    pub fn tokenize_query(&self, query: &str) -> Vec<String> {
        tokenize_with(query, &self.params.stopwords)
    }

    /// Top `k` items. Every item is ranked, including zero scores; a query
    /// with no tokens returns no hits.
    pub fn search(&self, query_id: &str, query: &str, k: usize) -> Result<RetrievalResult> {
        if k < 1 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        if self.item_count() == 0 {
            return Err(Error::EmptyIndex);
        }
        let tokens = self.tokenize_query(query);
        if tokens.is_empty() {
            return Ok(RetrievalResult {
                query_id: query_id.to_string(),
                hits: Vec::new(),
            });
        }
        let mut scores = vec![0.0f64; self.item_count()];
        for token in &tokens {
            if let Some(list) = self.postings.get(token) {
                for p in list {
                    scores[p.ordinal as usize] += self.term_weight(list.len(), p.tf, p.ordinal as usize);
                }
            }
        }
        Ok(rank(
            query_id,
            scores.into_iter().enumerate().map(|(i, s)| (s, i)),
            &self.item_ids,
            &self.doc_ids,
            k,
        ))
    }

    /// Writes `manifest.json`, `items.jsonl` and term-sorted `postings.jsonl`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_manifest(
            dir,
            &IndexManifest {
                kind: RetrieverKind::Sparse,
                variant: self.variant,
                item_count: self.item_count(),
                corpus_fingerprint: self.corpus_fingerprint.clone(),
                k1: Some(self.params.k1),
                b: Some(self.params.b),
                stopwords: self.params.stopwords.iter().cloned().collect(),
                embedder_id: None,
                dimension: None,
            },
        )?;
        let items_path = dir.join("items.jsonl");
        let mut w = BufWriter::new(File::create(&items_path).map_err(|e| Error::io(&items_path, e))?);
        for i in 0..self.item_count() {
            let rec = ItemLine {
                id: self.item_ids[i].clone(),
                doc_id: self.doc_ids[i].clone(),
                length: self.doc_lengths[i],
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n").map_err(|e| Error::io(&items_path, e))?;
        }
        w.flush().map_err(|e| Error::io(&items_path, e))?;

        let postings_path = dir.join("postings.jsonl");
        let mut w =
            BufWriter::new(File::create(&postings_path).map_err(|e| Error::io(&postings_path, e))?);
        let sorted: BTreeMap<&String, &Vec<Posting>> = self.postings.iter().collect();
        for (term, list) in sorted {
            let line = PostingLine {
                term: term.clone(),
                postings: list.iter().map(|p| (p.ordinal, p.tf)).collect(),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n").map_err(|e| Error::io(&postings_path, e))?;
        }
        w.flush().map_err(|e| Error::io(&postings_path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = read_manifest(dir)?;
        if manifest.kind != RetrieverKind::Sparse {
            return Err(Error::Config(format!("{} is not a sparse index", dir.display())));
        }
        let items: Vec<ItemLine> = read_lines(&dir.join("items.jsonl"))?;
        let lines: Vec<PostingLine> = read_lines(&dir.join("postings.jsonl"))?;
        let doc_lengths: Vec<u32> = items.iter().map(|i| i.length).collect();
        let avg_doc_length = if doc_lengths.is_empty() {
            0.0
        } else {
            doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / doc_lengths.len() as f64
        };
        Ok(SparseIndex {
            postings: lines
                .into_iter()
                .map(|l| {
                    let list = l
                        .postings
                        .into_iter()
                        .map(|(ordinal, tf)| Posting { ordinal, tf })
                        .collect();
                    (l.term, list)
                })
                .collect(),
            doc_lengths,
            avg_doc_length,
            item_ids: items.iter().map(|i| i.id.clone()).collect(),
            doc_ids: items.into_iter().map(|i| i.doc_id).collect(),
            params: Bm25Params {
                k1: manifest.k1.unwrap_or(1.2),
                b: manifest.b.unwrap_or(0.75),
                stopwords: manifest.stopwords.into_iter().collect(),
            },
            variant: manifest.variant,
            corpus_fingerprint: manifest.corpus_fingerprint,
        })
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct ItemLine {
    pub id: String,
    pub doc_id: String,
    #[serde(default)]
    pub length: u32,
}

#[derive(Serialize, Deserialize)]
struct PostingLine {
    term: String,
    postings: Vec<(u32, u32)>,
}

pub(crate) fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{build_raw_articles, RepresentationSet};
    use crate::corpus::Document;

    fn raw_set(texts: &[&str]) -> RepresentationSet {
        let docs: Vec<Document> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document {
                id: format!("d{}", i + 1),
                title: String::new(),
                text: t.to_string(),
            })
            .collect();
        build_raw_articles(&docs).unwrap()
    }

    /// Straight-line BM25, written independently of the index: recount
    /// tf/df from raw token lists for every score.
    fn oracle(texts: &[&str], query: &str, k1: f64, b: f64) -> Vec<f64> {
        let toks: Vec<Vec<String>> = texts.iter().map(|t| super::super::tokenize(t)).collect();
        let n = toks.len() as f64;
        let avg = toks.iter().map(Vec::len).sum::<usize>() as f64 / n;
        toks.iter()
            .map(|doc| {
                let mut s = 0.0;
                for q in super::super::tokenize(query) {
                    let tf = doc.iter().filter(|t| **t == q).count() as f64;
                    if tf == 0.0 {
                        continue;
                    }
                    let df = toks.iter().filter(|d| d.contains(&q)).count() as f64;
                    let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
                    s += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * doc.len() as f64 / avg));
                }
                s
            })
            .collect()
    }

    #[test]
    fn toy_corpus_matches_oracle() {
        let texts = ["apple banana", "apple apple", "cherry"];
        let idx = build_sparse_index(&raw_set(&texts), Bm25Params::default());
        let expected = oracle(&texts, "apple", 1.2, 0.75);
        // Hand values: N=3, df(apple)=2, avgdl=5/3, idf=ln(1.6).
        let frozen = [0.4344571362775708, 0.6118390439885316, 0.0];
        for (e, f) in expected.iter().zip(frozen) {
            assert!((e - f).abs() < 1e-12, "oracle drifted: {e} vs {f}");
        }
        let q = idx.tokenize_query("apple");
        for (i, e) in expected.iter().enumerate() {
            assert!((bm25_score(&idx, &q, i).unwrap() - e).abs() < 1e-12);
        }
        let r = idx.search("q", "apple", 10).unwrap();
        assert_eq!(r.hits[0].doc_id, "d2");
        assert_eq!(r.hits[1].doc_id, "d1");
        assert_eq!(r.hits.len(), 3);
    }

    #[test]
    fn absent_term_scores_zero() {
        let idx = build_sparse_index(&raw_set(&["a b", "c d"]), Bm25Params::default());
        let q = idx.tokenize_query("zebra");
        assert_eq!(bm25_score(&idx, &q, 0).unwrap(), 0.0);
        assert_eq!(bm25_score(&idx, &q, 1).unwrap(), 0.0);
        assert!(bm25_score(&idx, &q, 2).is_err());
    }

    #[test]
    fn single_matching_item_wins() {
        let idx = build_sparse_index(&raw_set(&["rare word", "common text"]), Bm25Params::default());
        let q = idx.tokenize_query("rare");
        assert!(bm25_score(&idx, &q, 0).unwrap() > 0.0);
        assert_eq!(bm25_score(&idx, &q, 1).unwrap(), 0.0);
    }

    #[test]
    fn statistics_are_consistent() {
        let idx = build_sparse_index(&raw_set(&["a b c", "a"]), Bm25Params::default());
        assert_eq!(idx.doc_lengths(), [3, 1]);
        assert!((idx.avg_doc_length() - 2.0).abs() < 1e-12);
        assert_eq!(idx.postings("a").unwrap().len(), 2);
        assert_eq!(idx.item_count(), idx.item_ids().len());
    }

    #[test]
    fn edge_cases() {
        let idx = build_sparse_index(&raw_set(&["a b"]), Bm25Params::default());
        assert!(idx.search("q", "?!", 5).unwrap().hits.is_empty());
        assert!(idx.search("q", "a", 0).is_err());
        let empty = build_sparse_index(&raw_set(&[]), Bm25Params::default());
        assert!(matches!(empty.search("q", "a", 1), Err(Error::EmptyIndex)));
    }

    #[test]
    fn save_load_round_trip() {
        let idx = build_sparse_index(&raw_set(&["apple banana", "apple apple", "cherry"]), Bm25Params::default());
        let dir = tempfile::tempdir().unwrap();
        idx.save(dir.path()).unwrap();
        let loaded = SparseIndex::load(dir.path()).unwrap();
        assert_eq!(loaded, idx);
    }
}
