//! Exact cosine search over unit vectors.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde_json::json;

use super::sparse::{read_lines, ItemLine};
use super::tokenize::tokenize;
use super::{rank, read_manifest, write_manifest, IndexManifest, RetrievalResult, RetrieverKind};
use crate::assembly::{RepresentationSet, Variant};
use crate::digest::Digester;
use crate::error::{Error, Result};
use crate::llm::HttpProviderConfig;
use crate::llm::http::JsonClient;

pub const HASHING_DIMENSION: usize = 256;

/// Turns text into a fixed-dimension vector. Outputs need not be
/// normalized; the index normalizes them.
pub trait Embedder: Send + Sync {
    fn id(&self) -> String;
    fn dimension(&self) -> usize;
    /// Inputs longer than this many tokens are cut, keeping the head.
    fn max_input_tokens(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

/// Feature-hashed bag of tokens with a hashed sign per token.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dimension: usize,
    max_input_tokens: usize,
}

impl HashingEmbedder {
    pub fn new(dimension: usize, max_input_tokens: usize) -> Result<Self> {
        if dimension == 0 || max_input_tokens == 0 {
            return Err(Error::InvalidArgument(
                "embedder dimension and input limit must be positive".into(),
            ));
        }
        Ok(HashingEmbedder {
            dimension,
            max_input_tokens,
        })
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder {
            dimension: HASHING_DIMENSION,
            max_input_tokens: 512,
        }
    }
}

impl Embedder for HashingEmbedder {
    fn id(&self) -> String {
        format!("hashing-d{}-t{}", self.dimension, self.max_input_tokens)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn max_input_tokens(&self) -> usize {
        self.max_input_tokens
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.dimension];
        for token in tokenize(text).iter().take(self.max_input_tokens) {
            let digest = Digester::new("hashing-embedder").field(token).finish_bytes();
            let bucket = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
            let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
            v[(bucket % self.dimension as u64) as usize] += sign;
        }
        Ok(v)
    }
}

/// OpenAI-style `/embeddings` endpoint.
pub struct HttpEmbedder {
    client: JsonClient,
    base_url: String,
    model: String,
    dimension: usize,
    max_input_tokens: usize,
}

impl HttpEmbedder {
    pub fn new(config: HttpProviderConfig, model: impl Into<String>, dimension: usize) -> Self {
        HttpEmbedder {
            client: JsonClient::new(&config),
            base_url: config.base_url.trim_end_matches('/').to_string(),
            model: model.into(),
            dimension,
            max_input_tokens: 512,
        }
    }

    pub fn with_max_input_tokens(mut self, limit: usize) -> Self {
        self.max_input_tokens = limit.max(1);
        self
    }
}

impl Embedder for HttpEmbedder {
    fn id(&self) -> String {
        format!("http:{}:{}", self.base_url, self.model)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn max_input_tokens(&self) -> usize {
        self.max_input_tokens
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        // Whitespace words stand in for model tokens when truncating.
        let input = text
            .split_whitespace()
            .take(self.max_input_tokens)
            .collect::<Vec<_>>()
            .join(" ");
        let reply = self
            .client
            .post("embeddings", &json!({"model": self.model, "input": input}))?;
        let values = reply
            .pointer("/data/0/embedding")
            .and_then(|v| v.as_array())
            .ok_or_else(|| Error::MalformedPayload("missing data[0].embedding".into()))?;
        let vector = values
            .iter()
            .map(|x| {
                x.as_f64()
                    .ok_or_else(|| Error::MalformedPayload("non-numeric embedding value".into()))
            })
            .collect::<Result<Vec<f64>>>()?;
        if vector.len() != self.dimension {
            return Err(Error::MalformedPayload(format!(
                "embedding has dimension {}, expected {}",
                vector.len(),
                self.dimension
            )));
        }
        Ok(vector)
    }
}

/// Scales to unit length. The zero vector maps to the first basis vector
/// so every stored and query vector is a valid unit vector.
pub(crate) fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        v.iter_mut().for_each(|x| *x = 0.0);
        if let Some(first) = v.first_mut() {
            *first = 1.0;
        }
    } else {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    vectors: Vec<Vec<f64>>,
    item_ids: Vec<String>,
    doc_ids: Vec<String>,
    embedder_id: String,
    dimension: usize,
    variant: Variant,
    corpus_fingerprint: String,
}

pub fn build_dense_index(set: &RepresentationSet, embedder: &dyn Embedder) -> Result<DenseIndex> {
    let dimension = embedder.dimension();
    let mut vectors = Vec::with_capacity(set.items.len());
    for item in &set.items {
        let v = embedder.embed(&item.text)?;
        if v.len() != dimension {
            return Err(Error::Invariant(format!(
                "embedder {} returned {} values, expected {dimension}",
                embedder.id(),
                v.len()
            )));
        }
        vectors.push(normalize(v));
    }
    Ok(DenseIndex {
        vectors,
        item_ids: set.items.iter().map(|r| r.id.clone()).collect(),
        doc_ids: set.items.iter().map(|r| r.doc_id.clone()).collect(),
        embedder_id: embedder.id(),
        dimension,
        variant: set.variant,
        corpus_fingerprint: set.corpus_fingerprint.clone(),
    })
}

impl DenseIndex {
    pub fn item_count(&self) -> usize {
        self.item_ids.len()
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    /// Cosine similarity against every item; top `k` returned.
    pub fn search(
        &self,
        embedder: &dyn Embedder,
        query_id: &str,
        query: &str,
        k: usize,
    ) -> Result<RetrievalResult> {
        if k < 1 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        if self.item_count() == 0 {
            return Err(Error::EmptyIndex);
        }
        if embedder.id() != self.embedder_id {
            return Err(Error::Config(format!(
                "index was built with embedder {}, query embedder is {}",
                self.embedder_id,
                embedder.id()
            )));
        }
        let q = normalize(embedder.embed(query)?);
        if q.len() != self.dimension {
            return Err(Error::Invariant(format!(
                "query vector has {} values, index has {}",
                q.len(),
                self.dimension
            )));
        }
        let scores = self
            .vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (v.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>(), i));
        Ok(rank(query_id, scores, &self.item_ids, &self.doc_ids, k))
    }

    /// Writes `manifest.json`, `items.jsonl` and `vectors.bin` (row-major
    /// little-endian f64).
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_manifest(
            dir,
            &IndexManifest {
                kind: RetrieverKind::Dense,
                variant: self.variant,
                item_count: self.item_count(),
                corpus_fingerprint: self.corpus_fingerprint.clone(),
                k1: None,
                b: None,
                stopwords: Vec::new(),
                embedder_id: Some(self.embedder_id.clone()),
                dimension: Some(self.dimension),
            },
        )?;
        let items_path = dir.join("items.jsonl");
        let mut w = BufWriter::new(File::create(&items_path).map_err(|e| Error::io(&items_path, e))?);
        for (id, doc_id) in self.item_ids.iter().zip(&self.doc_ids) {
            serde_json::to_writer(
                &mut w,
                &ItemLine {
                    id: id.clone(),
                    doc_id: doc_id.clone(),
                    length: 0,
                },
            )?;
            w.write_all(b"\n").map_err(|e| Error::io(&items_path, e))?;
        }
        w.flush().map_err(|e| Error::io(&items_path, e))?;

        let vec_path = dir.join("vectors.bin");
        let mut w = BufWriter::new(File::create(&vec_path).map_err(|e| Error::io(&vec_path, e))?);
        for x in self.vectors.iter().flatten() {
            w.write_all(&x.to_le_bytes()).map_err(|e| Error::io(&vec_path, e))?;
        }
        w.flush().map_err(|e| Error::io(&vec_path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = read_manifest(dir)?;
        if manifest.kind != RetrieverKind::Dense {
            return Err(Error::Config(format!("{} is not a dense index", dir.display())));
        }
        let dimension = manifest
            .dimension
            .ok_or_else(|| Error::Config("dense manifest lacks a dimension".into()))?;
        let items: Vec<ItemLine> = read_lines(&dir.join("items.jsonl"))?;
        let vec_path = dir.join("vectors.bin");
        let mut bytes = Vec::new();
        File::open(&vec_path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(&vec_path, e))?;
        if bytes.len() != items.len() * dimension * 8 {
            return Err(Error::Invariant(format!(
                "{} holds {} bytes, expected {}",
                vec_path.display(),
                bytes.len(),
                items.len() * dimension * 8
            )));
        }
        let flat: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(DenseIndex {
            vectors: flat.chunks(dimension.max(1)).map(<[f64]>::to_vec).collect(),
            item_ids: items.iter().map(|i| i.id.clone()).collect(),
            doc_ids: items.into_iter().map(|i| i.doc_id).collect(),
            embedder_id: manifest.embedder_id.unwrap_or_default(),
            dimension,
            variant: manifest.variant,
            corpus_fingerprint: manifest.corpus_fingerprint,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::build_raw_articles;
    use crate::corpus::Document;
    use proptest::prelude::*;

    fn set(texts: &[&str]) -> RepresentationSet {
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

    /// Scales every raw vector of an inner embedder by a constant.
    struct Scaled<E>(E, f64);

    impl<E: Embedder> Embedder for Scaled<E> {
        fn id(&self) -> String {
            self.0.id()
        }
        fn dimension(&self) -> usize {
            self.0.dimension()
        }
        fn max_input_tokens(&self) -> usize {
            self.0.max_input_tokens()
        }
        fn embed(&self, text: &str) -> Result<Vec<f64>> {
            Ok(self.0.embed(text)?.into_iter().map(|x| x * self.1).collect())
        }
    }

    #[test]
    fn vectors_are_unit_norm() {
        let e = HashingEmbedder::default();
        let idx = build_dense_index(&set(&["alpha beta", "?!", "gamma gamma delta"]), &e).unwrap();
        for v in idx.vectors() {
            assert_eq!(v.len(), HASHING_DIMENSION);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn identical_text_scores_one() {
        let e = HashingEmbedder::default();
        let texts = ["the red fox jumps", "a blue whale sings", "green tea leaves"];
        let idx = build_dense_index(&set(&texts), &e).unwrap();
        let r = idx.search(&e, "q", "a blue whale sings", 3).unwrap();
        assert_eq!(r.hits[0].doc_id, "d2");
        assert!((r.hits[0].score - 1.0).abs() < 1e-6);
        let r = idx.search(&e, "q", "", 5).unwrap();
        assert_eq!(r.hits.len(), 3);
    }

    #[test]
    fn head_truncation() {
        let e = HashingEmbedder::new(64, 2).unwrap();
        assert_eq!(e.embed("one two three").unwrap(), e.embed("one two").unwrap());
    }

    #[test]
    fn round_trip_and_embedder_mismatch() {
        let e = HashingEmbedder::default();
        let idx = build_dense_index(&set(&["x y", "z"]), &e).unwrap();
        let dir = tempfile::tempdir().unwrap();
        idx.save(dir.path()).unwrap();
        assert_eq!(DenseIndex::load(dir.path()).unwrap(), idx);
        let other = HashingEmbedder::new(128, 512).unwrap();
        assert!(matches!(idx.search(&other, "q", "x", 1), Err(Error::Config(_))));
        assert!(idx.search(&e, "q", "x", 0).is_err());
    }

    proptest! {
        #[test]
        fn scale_invariance(
            texts in proptest::collection::vec("[a-e]{1,3}( [a-e]{1,3}){0,5}", 1..12),
            query in "[a-e]{1,3}( [a-e]{1,3}){0,3}",
            scale in 0.001f64..1000.0,
        ) {
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let s = set(&refs);
            let base = HashingEmbedder::new(32, 64).unwrap();
            let scaled = Scaled(base.clone(), scale);
            let a = build_dense_index(&s, &base).unwrap().search(&base, "q", &query, 100).unwrap();
            let b = build_dense_index(&s, &scaled).unwrap().search(&scaled, "q", &query, 100).unwrap();
            let ids = |r: &RetrievalResult| r.hits.iter().map(|h| h.representation_id.clone()).collect::<Vec<_>>();
            // Rounding can flip near-ties, so compare rankings only where
            // scores are separated.
            for (x, y) in a.hits.iter().zip(&b.hits) {
                prop_assert!((x.score - y.score).abs() < 1e-9);
            }
            let separated = a.hits.windows(2).all(|w| (w[0].score - w[1].score).abs() > 1e-9);
            if separated {
                prop_assert_eq!(ids(&a), ids(&b));
            }
        }
    }
}
