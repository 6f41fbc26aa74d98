//! Retrieval metrics (nDCG@k, Recall@k) against qrels and token F1 for
//! generated answers.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::RetrievalResult;

/// Graded judgments for one query: doc id to relevance.
pub type Judgments = BTreeMap<String, u32>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Qrels {
    pub judgments: BTreeMap<String, Judgments>,
}

impl Qrels {
    /// Tab-separated `query-id  corpus-id  score`. A first line whose score
    /// column is not an integer is taken as a header.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), path)
    }

    pub fn read(reader: impl BufRead, origin: &Path) -> Result<Self> {
        let mut qrels = Qrels::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            let bad = |message: String| Error::MalformedRecord {
                path: origin.to_path_buf(),
                line: i + 1,
                message,
            };
            if fields.len() != 3 {
                return Err(bad(format!("expected 3 tab-separated fields, got {}", fields.len())));
            }
            let score: u32 = match fields[2].parse() {
                Ok(s) => s,
                Err(_) if i == 0 => continue,
                Err(_) => return Err(bad(format!("relevance `{}` is not a non-negative integer", fields[2]))),
            };
            qrels
                .judgments
                .entry(fields[0].to_string())
                .or_default()
                .insert(fields[1].to_string(), score);
        }
        Ok(qrels)
    }

    pub fn get(&self, query_id: &str) -> Option<&Judgments> {
        self.judgments.get(query_id)
    }
}

fn first_k_unique<'a>(ranked: &[&'a str], k: usize) -> Vec<&'a str> {
    let mut seen = HashSet::new();
    ranked
        .iter()
        .copied()
        .filter(|d| seen.insert(*d))
        .take(k)
        .collect()
}

fn gain(rel: u32) -> f64 {
    2f64.powi(rel as i32) - 1.0
}

/// DCG@k with gain `2^rel - 1` and discount `log2(i + 1)` for 1-based `i`,
/// divided by the DCG of the ideal ordering. Repeated doc ids count once.
pub fn ndcg_at_k(ranked_doc_ids: &[&str], judgments: &Judgments, k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let dcg: f64 = first_k_unique(ranked_doc_ids, k)
        .iter()
        .enumerate()
        .map(|(i, d)| gain(judgments.get(*d).copied().unwrap_or(0)) / ((i + 2) as f64).log2())
        .sum();
    let mut ideal: Vec<u32> = judgments.values().copied().filter(|&r| r > 0).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &r)| gain(r) / ((i + 2) as f64).log2())
        .sum();
    Ok(if idcg == 0.0 { 0.0 } else { dcg / idcg })
}

/// Fraction of positively judged docs found in the top `k`.
pub fn recall_at_k(ranked_doc_ids: &[&str], judgments: &Judgments, k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let relevant = judgments.values().filter(|&&r| r > 0).count();
    if relevant == 0 {
        return Ok(0.0);
    }
    let found = first_k_unique(ranked_doc_ids, k)
        .iter()
        .filter(|d| judgments.get(**d).is_some_and(|&r| r > 0))
        .count();
    Ok(found as f64 / relevant as f64)
}

static ARTICLES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(a|an|the)\b").expect("valid regex"));

/// Lowercase, drop ASCII punctuation, drop the articles a/an/the, collapse
/// whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lower = s.to_lowercase();
    let no_punct: String = lower.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let no_articles = ARTICLES.replace_all(&no_punct, " ");
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Bag-of-tokens F1 after [`normalize_answer`]. Two empty answers score 1;
/// one empty answer scores 0.
pub fn token_f1(prediction: &str, gold: &str) -> f64 {
    let p = normalize_answer(prediction);
    let g = normalize_answer(gold);
    let p: Vec<&str> = p.split_whitespace().collect();
    let g: Vec<&str> = g.split_whitespace().collect();
    if p.is_empty() || g.is_empty() {
        return if p.is_empty() && g.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / p.len() as f64;
    let recall = overlap as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_query: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(rename = "macro")]
    pub macro_avg: BTreeMap<String, f64>,
    pub ks: Vec<usize>,
    pub query_count: usize,
    /// Queries left out of the averages (no positive judgment).
    #[serde(default)]
    pub excluded: Vec<String>,
}

impl MetricsReport {
    fn from_per_query(
        per_query: BTreeMap<String, BTreeMap<String, f64>>,
        ks: Vec<usize>,
        excluded: Vec<String>,
    ) -> Self {
        let mut sums: BTreeMap<String, f64> = BTreeMap::new();
        for metrics in per_query.values() {
            for (name, v) in metrics {
                *sums.entry(name.clone()).or_default() += v;
            }
        }
        let count = per_query.len();
        let macro_avg = sums
            .into_iter()
            .map(|(name, s)| (name, s / count as f64))
            .collect();
        MetricsReport {
            per_query,
            macro_avg,
            ks,
            query_count: count,
            excluded,
        }
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        self.macro_avg.get(metric).copied()
    }

    /// Flat `name value` lines: counts first, then macro metrics by name.
    pub fn write_summary(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "query_count {}", self.query_count)?;
        writeln!(out, "excluded_count {}", self.excluded.len())?;
        for (name, v) in &self.macro_avg {
            writeln!(out, "{name} {v:?}")?;
        }
        Ok(())
    }

    /// One JSON object per query per metric.
    pub fn write_records(&self, mut out: impl Write) -> Result<()> {
        for (query_id, metrics) in &self.per_query {
            for (metric, value) in metrics {
                serde_json::to_writer(
                    &mut out,
                    &MetricRecord {
                        query_id: query_id.clone(),
                        metric: metric.clone(),
                        value: *value,
                    },
                )?;
                out.write_all(b"\n").map_err(|e| Error::io("<records>", e))?;
            }
        }
        Ok(())
    }

    /// Writes `<stem>.txt` and `<stem>.jsonl` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let txt = dir.join(format!("{stem}.txt"));
        let mut buf = Vec::new();
        self.write_summary(&mut buf).map_err(|e| Error::io(&txt, e))?;
        std::fs::write(&txt, buf).map_err(|e| Error::io(&txt, e))?;
        let jsonl = dir.join(format!("{stem}.jsonl"));
        let mut buf = Vec::new();
        self.write_records(&mut buf)?;
        std::fs::write(&jsonl, buf).map_err(|e| Error::io(&jsonl, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub query_id: String,
    pub metric: String,
    pub value: f64,
}

/// nDCG@k and Recall@k for each `k`, over every judged query with at least
/// one positive judgment. A judged query missing from `run` scores 0.
/// Runs should already be collapsed to documents.
pub fn evaluate_retrieval(run: &[RetrievalResult], qrels: &Qrels, ks: &[usize]) -> Result<MetricsReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidArgument("cutoffs must be non-empty and >= 1".into()));
    }
    let by_query: HashMap<&str, &RetrievalResult> =
        run.iter().map(|r| (r.query_id.as_str(), r)).collect();
    let mut per_query = BTreeMap::new();
    let mut excluded = Vec::new();
    for (query_id, judgments) in &qrels.judgments {
        if !judgments.values().any(|&r| r > 0) {
            excluded.push(query_id.clone());
            continue;
        }
        let ranked: Vec<&str> = by_query
            .get(query_id.as_str())
            .map(|r| r.doc_ids())
            .unwrap_or_default();
        let mut metrics = BTreeMap::new();
        for &k in ks {
            metrics.insert(format!("ndcg@{k}"), ndcg_at_k(&ranked, judgments, k)?);
            metrics.insert(format!("recall@{k}"), recall_at_k(&ranked, judgments, k)?);
        }
        per_query.insert(query_id.clone(), metrics);
    }
    Ok(MetricsReport::from_per_query(per_query, ks.to_vec(), excluded))
}

/// Token F1 per query, taking the best score over that query's gold
/// answers.
pub fn evaluate_generation(
    predictions: &BTreeMap<String, String>,
    golds: &BTreeMap<String, Vec<String>>,
) -> Result<MetricsReport> {
    if predictions.is_empty() {
        return Err(Error::InvalidArgument("no predictions to evaluate".into()));
    }
    let mut per_query = BTreeMap::new();
    for (query_id, prediction) in predictions {
        let answers = golds
            .get(query_id)
            .filter(|a| !a.is_empty())
            .ok_or_else(|| Error::MissingField {
                id: query_id.clone(),
                message: "no gold answer".into(),
            })?;
        let best = answers
            .iter()
            .map(|g| token_f1(prediction, g))
            .fold(0.0, f64::max);
        per_query.insert(query_id.clone(), BTreeMap::from([("f1".to_string(), best)]));
    }
    Ok(MetricsReport::from_per_query(per_query, Vec::new(), Vec::new()))
}

#[derive(Deserialize)]
struct AnswerLine {
    #[serde(alias = "_id", alias = "query_id")]
    id: String,
    #[serde(default)]
    answers: Vec<String>,
    #[serde(default)]
    answer: Option<String>,
}

/// JSONL gold answers: `{"id": .., "answers": [..]}` or `{"id": .., "answer": ..}`.
pub fn load_answers(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<String>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnswerLine = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let entry = out.entry(rec.id).or_default();
        entry.extend(rec.answers);
        entry.extend(rec.answer);
    }
    Ok(out)
}
