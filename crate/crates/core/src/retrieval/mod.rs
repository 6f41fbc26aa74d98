//! Sparse (BM25) and dense retrieval over representation sets.
//!
//! Searching a `Q` set is question-to-question search, a `QC` set
//! question-to-(question+context) search, and a `QC_ASM` set search over
//! one assembled article per document. Representation-level hits are
//! collapsed to documents before evaluation because relevance judgments
//! name corpus documents.

mod consolidate;
mod dense;
mod sparse;
mod tokenize;
mod trec;

use std::cmp::Ordering;
use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assembly::Variant;
use crate::error::{Error, Result};

pub use consolidate::{consolidate_snippets, estimate_tokens, ConsolidatedContext, Snippet, SnippetSource};
pub use dense::{
    build_dense_index, DenseIndex, Embedder, HashingEmbedder, HttpEmbedder, HASHING_DIMENSION,
};
pub use sparse::{bm25_score, build_sparse_index, Bm25Params, Posting, SparseIndex};
pub use tokenize::{tokenize, tokenize_with};
pub use trec::{read_run, write_run, RunEntry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub representation_id: String,
    pub doc_id: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query_id: String,
    pub hits: Vec<Hit>,
}

impl RetrievalResult {
    pub fn doc_ids(&self) -> Vec<&str> {
        self.hits.iter().map(|h| h.doc_id.as_str()).collect()
    }
}

/// Descending score, ties by ascending representation id.
pub(crate) fn hit_order(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.1.cmp(b.1))
}

/// Ranks `(score, ordinal)` pairs and keeps the top `k`.
pub(crate) fn rank(
    query_id: &str,
    scores: impl IntoIterator<Item = (f64, usize)>,
    item_ids: &[String],
    doc_ids: &[String],
    k: usize,
) -> RetrievalResult {
    let mut scored: Vec<(f64, usize)> = scores.into_iter().collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| {
        hit_order((a.0, &item_ids[a.1]), (b.0, &item_ids[b.1]))
    };
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
    }
    scored.sort_by(cmp);
    RetrievalResult {
        query_id: query_id.to_string(),
        hits: scored
            .into_iter()
            .enumerate()
            .map(|(i, (score, ord))| Hit {
                representation_id: item_ids[ord].clone(),
                doc_id: doc_ids[ord].clone(),
                score,
                rank: i + 1,
            })
            .collect(),
    }
}

/// Keeps the best-ranked hit per document and renumbers ranks.
pub fn doc_level_collapse(result: &RetrievalResult) -> RetrievalResult {
    let mut seen = HashSet::new();
    let hits = result
        .hits
        .iter()
        .filter(|h| seen.insert(h.doc_id.as_str()))
        .enumerate()
        .map(|(i, h)| Hit {
            rank: i + 1,
            ..h.clone()
        })
        .collect();
    RetrievalResult {
        query_id: result.query_id.clone(),
        hits,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrieverKind {
    #[default]
    Sparse,
    Dense,
}

impl std::str::FromStr for RetrieverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" | "bm25" => Ok(RetrieverKind::Sparse),
            "dense" => Ok(RetrieverKind::Dense),
            _ => Err(Error::InvalidArgument(format!("unknown retriever `{s}`"))),
        }
    }
}

/// Written as `manifest.json` in every index directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub kind: RetrieverKind,
    pub variant: Variant,
    pub item_count: usize,
    pub corpus_fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stopwords: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedder_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
}

pub(crate) fn write_manifest(dir: &Path, manifest: &IndexManifest) -> Result<()> {
    let path = dir.join("manifest.json");
    let mut body = serde_json::to_vec_pretty(manifest)?;
    body.push(b'\n');
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))
}

pub fn read_manifest(dir: &Path) -> Result<IndexManifest> {
    let path = dir.join("manifest.json");
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// A built index plus whatever it needs to embed queries.
pub enum Retriever {
    Sparse(SparseIndex),
    Dense {
        index: DenseIndex,
        embedder: Box<dyn Embedder>,
    },
}

impl Retriever {
    pub fn search(&self, query_id: &str, query: &str, k: usize) -> Result<RetrievalResult> {
        match self {
            Retriever::Sparse(index) => index.search(query_id, query, k),
            Retriever::Dense { index, embedder } => index.search(embedder.as_ref(), query_id, query, k),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Retriever::Sparse(index) => index.item_count(),
            Retriever::Dense { index, .. } => index.item_count(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
