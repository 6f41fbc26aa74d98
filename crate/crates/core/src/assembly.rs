//! Representation variants built from windows and synthesis output.
//!
//! Per-window variants (`Q`, `QC`, `QA`, `QCA`, `C`) carry exactly one
//! provenance window each. Assembled variants either concatenate all QC
//! strings of a document into one article (`QC_ASM`) or take the union of
//! per-n sets with exact-match deduplication (`QA_ASM`, `QCA_ASM`,
//! `QC_PAIRS_ASM`, `C_ASM`).

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{ContextWindow, Document, WindowRef};
use crate::digest::Digester;
use crate::error::{Error, Result};
use crate::synthesis::{HypotheticalQuestion, QAPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "Q")]
    Q,
    #[serde(rename = "QC")]
    Qc,
    #[serde(rename = "QA")]
    Qa,
    #[serde(rename = "QCA")]
    Qca,
    #[serde(rename = "C")]
    C,
    /// One article per document: every QC string concatenated.
    #[serde(rename = "QC_ASM")]
    QcAsm,
    /// Union of QC pairs across n.
    #[serde(rename = "QC_PAIRS_ASM")]
    QcPairsAsm,
    #[serde(rename = "QA_ASM")]
    QaAsm,
    #[serde(rename = "QCA_ASM")]
    QcaAsm,
    #[serde(rename = "C_ASM")]
    CAsm,
    #[serde(rename = "RAW_ARTICLE")]
    RawArticle,
}

impl Variant {
    pub const ALL: [Variant; 11] = [
        Variant::Q,
        Variant::Qc,
        Variant::Qa,
        Variant::Qca,
        Variant::C,
        Variant::QcAsm,
        Variant::QcPairsAsm,
        Variant::QaAsm,
        Variant::QcaAsm,
        Variant::CAsm,
        Variant::RawArticle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Q => "Q",
            Variant::Qc => "QC",
            Variant::Qa => "QA",
            Variant::Qca => "QCA",
            Variant::C => "C",
            Variant::QcAsm => "QC_ASM",
            Variant::QcPairsAsm => "QC_PAIRS_ASM",
            Variant::QaAsm => "QA_ASM",
            Variant::QcaAsm => "QCA_ASM",
            Variant::CAsm => "C_ASM",
            Variant::RawArticle => "RAW_ARTICLE",
        }
    }

    /// Variants with one set per window order n.
    pub fn is_per_n(self) -> bool {
        matches!(
            self,
            Variant::Q | Variant::Qc | Variant::Qa | Variant::Qca | Variant::C
        )
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == upper)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Representation {
    pub id: String,
    pub variant: Variant,
    pub n_grams: BTreeSet<usize>,
    pub doc_id: String,
    /// Indexable payload. Answers never enter it.
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    pub provenance: Vec<WindowRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
}

impl Representation {
    fn new(
        variant: Variant,
        doc_id: &str,
        text: String,
        answer: Option<String>,
        provenance: Vec<WindowRef>,
    ) -> Self {
        let n_grams = provenance.iter().map(|w| w.n).collect();
        let mut r = Representation {
            id: String::new(),
            variant,
            n_grams,
            doc_id: doc_id.to_string(),
            text,
            answer,
            provenance,
            question: None,
            context: None,
        };
        r.id = r.content_id();
        r
    }

    fn with_parts(mut self, question: Option<&str>, context: Option<&str>) -> Self {
        self.question = question.map(str::to_string);
        self.context = context.map(str::to_string);
        self
    }

    /// Digest of variant, document, text, answer and provenance.
    pub fn content_id(&self) -> String {
        let mut d = Digester::new("representation");
        d.field(self.variant.as_str())
            .field(&self.doc_id)
            .field(&self.text)
            .field(self.answer.as_deref().unwrap_or("\u{0}none"));
        for w in &self.provenance {
            d.field(&w.doc_id).field(&w.n.to_string()).field(&w.start.to_string());
        }
        d.finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepresentationSet {
    pub variant: Variant,
    pub items: Vec<Representation>,
    pub corpus_fingerprint: String,
}

impl RepresentationSet {
    pub fn new(
        variant: Variant,
        items: Vec<Representation>,
        corpus_fingerprint: impl Into<String>,
    ) -> Result<Self> {
        let mut ids = HashSet::with_capacity(items.len());
        for item in &items {
            if item.variant != variant {
                return Err(Error::Invariant(format!(
                    "item {} has variant {} in a {variant} set",
                    item.id, item.variant
                )));
            }
            if item.text.trim().is_empty() {
                return Err(Error::Invariant(format!("item {} has empty text", item.id)));
            }
            if item.provenance.is_empty() && variant != Variant::RawArticle {
                return Err(Error::Invariant(format!("item {} has no provenance", item.id)));
            }
            if !ids.insert(item.id.as_str()) {
                return Err(Error::Invariant(format!("duplicate item id {}", item.id)));
            }
        }
        Ok(RepresentationSet {
            variant,
            items,
            corpus_fingerprint: corpus_fingerprint.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn with_fingerprint(mut self, fingerprint: impl Into<String>) -> Self {
        self.corpus_fingerprint = fingerprint.into();
        self
    }

    /// Line-delimited items plus a `<path>.meta.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for item in &self.items {
            serde_json::to_writer(&mut w, item)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        let meta = SetMeta {
            variant: self.variant,
            corpus_fingerprint: self.corpus_fingerprint.clone(),
            count: self.items.len(),
        };
        let meta_path = meta_path(path);
        std::fs::write(&meta_path, serde_json::to_vec_pretty(&meta)?)
            .map_err(|e| Error::io(&meta_path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let meta_path = meta_path(path);
        let meta: SetMeta = serde_json::from_slice(
            &std::fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?,
        )?;
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut items = Vec::with_capacity(meta.count);
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            items.push(serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Self::new(meta.variant, items, meta.corpus_fingerprint)
    }
}

#[derive(Serialize, Deserialize)]
struct SetMeta {
    variant: Variant,
    corpus_fingerprint: String,
    count: usize,
}

fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    s.into()
}

/// Indexable question-context string.
pub fn qc_text(question: &str, context: &str) -> String {
    format!("Question: {question}\nContext: {context}")
}

fn dedup_key(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn set(variant: Variant, items: Vec<Representation>) -> Result<RepresentationSet> {
    RepresentationSet::new(variant, items, "")
}

fn window_of<'w>(
    q: &HypotheticalQuestion,
    window: &'w ContextWindow,
) -> Result<&'w ContextWindow> {
    if q.doc_id != window.doc_id || q.n != window.n || q.start != window.start {
        return Err(Error::Invariant(format!(
            "question for {}:{}:{} paired with window {}:{}:{}",
            q.doc_id, q.n, q.start, window.doc_id, window.n, window.start
        )));
    }
    Ok(window)
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Alignment {
            expected: b,
            actual: a,
        });
    }
    Ok(())
}

fn qref(q: &HypotheticalQuestion) -> WindowRef {
    WindowRef {
        doc_id: q.doc_id.clone(),
        n: q.n,
        start: q.start,
    }
}

pub fn build_q(questions: &[HypotheticalQuestion]) -> Result<RepresentationSet> {
    let items = questions
        .iter()
        .map(|q| {
            Representation::new(Variant::Q, &q.doc_id, q.text.clone(), None, vec![qref(q)])
                .with_parts(Some(&q.text), None)
        })
        .collect();
    set(Variant::Q, items)
}

pub fn build_qc(
    questions: &[HypotheticalQuestion],
    windows: &[ContextWindow],
) -> Result<RepresentationSet> {
    check_lengths(questions.len(), windows.len())?;
    let items = questions
        .iter()
        .zip(windows)
        .map(|(q, w)| {
            let c = window_of(q, w)?.text();
            Ok(
                Representation::new(Variant::Qc, &q.doc_id, qc_text(&q.text, &c), None, vec![w.window_ref()])
                    .with_parts(Some(&q.text), Some(&c)),
            )
        })
        .collect::<Result<_>>()?;
    set(Variant::Qc, items)
}

pub fn build_qa(pairs: &[QAPair]) -> Result<RepresentationSet> {
    let items = pairs
        .iter()
        .map(|p| {
            let q = &p.question;
            Representation::new(
                Variant::Qa,
                &q.doc_id,
                q.text.clone(),
                Some(p.answer.clone()),
                vec![qref(q)],
            )
            .with_parts(Some(&q.text), None)
        })
        .collect();
    set(Variant::Qa, items)
}

pub fn build_qca(pairs: &[QAPair], windows: &[ContextWindow]) -> Result<RepresentationSet> {
    check_lengths(pairs.len(), windows.len())?;
    let items = pairs
        .iter()
        .zip(windows)
        .map(|(p, w)| {
            let q = &p.question;
            let c = window_of(q, w)?.text();
            Ok(Representation::new(
                Variant::Qca,
                &q.doc_id,
                qc_text(&q.text, &c),
                Some(p.answer.clone()),
                vec![w.window_ref()],
            )
            .with_parts(Some(&q.text), Some(&c)))
        })
        .collect::<Result<_>>()?;
    set(Variant::Qca, items)
}

pub fn build_c(windows: &[ContextWindow]) -> Result<RepresentationSet> {
    let items = windows
        .iter()
        .map(|w| {
            let c = w.text();
            Representation::new(Variant::C, &w.doc_id, c.clone(), None, vec![w.window_ref()])
                .with_parts(None, Some(&c))
        })
        .collect();
    set(Variant::C, items)
}

fn window_order(r: &Representation) -> (usize, usize) {
    r.provenance
        .first()
        .map_or((usize::MAX, usize::MAX), |w| (w.n, w.start))
}

/// Concatenates one document's QC strings, ordered by n then start, with a
/// blank line between them.
pub fn assemble_qc_article(doc_qc: &[Representation], doc_id: &str) -> Result<Representation> {
    if doc_qc.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no QC items to assemble for `{doc_id}`"
        )));
    }
    if let Some(bad) = doc_qc
        .iter()
        .find(|r| r.doc_id != doc_id || r.variant != Variant::Qc)
    {
        return Err(Error::InvalidArgument(format!(
            "item {} ({} of `{}`) cannot join the article for `{doc_id}`",
            bad.id, bad.variant, bad.doc_id
        )));
    }
    let mut ordered: Vec<&Representation> = doc_qc.iter().collect();
    ordered.sort_by_key(|r| window_order(r));
    let text = ordered
        .iter()
        .map(|r| r.text.as_str())
        .collect::<Vec<_>>()
        .join("\n\n");
    let provenance: Vec<WindowRef> = ordered
        .iter()
        .flat_map(|r| r.provenance.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut r = Representation::new(Variant::QcAsm, doc_id, text, None, provenance);
    r.n_grams = ordered.iter().flat_map(|r| r.n_grams.iter().copied()).collect();
    Ok(r)
}

fn required_sets(
    per_n: &BTreeMap<usize, RepresentationSet>,
    up_to_n: usize,
    variant: Variant,
) -> Result<Vec<&RepresentationSet>> {
    if up_to_n < 1 {
        return Err(Error::InvalidArgument("up_to_n must be >= 1".into()));
    }
    (1..=up_to_n)
        .map(|n| {
            let s = per_n.get(&n).ok_or_else(|| {
                Error::InvalidArgument(format!("missing {variant} set for n={n}"))
            })?;
            if s.variant != variant {
                return Err(Error::InvalidArgument(format!(
                    "set for n={n} is {}, expected {variant}",
                    s.variant
                )));
            }
            Ok(s)
        })
        .collect()
}

/// One QC_ASM article per document, in first-appearance document order.
///
/// With `only_n = Some(n)` each article holds the n-gram pairs of that
/// order alone; otherwise orders 1..=up_to_n are combined.
pub fn assemble_qc_articles(
    qc_per_n: &BTreeMap<usize, RepresentationSet>,
    up_to_n: usize,
    only_n: Option<usize>,
) -> Result<RepresentationSet> {
    let sets = match only_n {
        Some(n) => vec![qc_per_n
            .get(&n)
            .ok_or_else(|| Error::InvalidArgument(format!("missing QC set for n={n}")))?],
        None => required_sets(qc_per_n, up_to_n, Variant::Qc)?,
    };
    let mut order: Vec<&str> = Vec::new();
    let mut by_doc: HashMap<&str, Vec<Representation>> = HashMap::new();
    for s in sets {
        for item in &s.items {
            by_doc
                .entry(item.doc_id.as_str())
                .or_insert_with(|| {
                    order.push(item.doc_id.as_str());
                    Vec::new()
                })
                .push(item.clone());
        }
    }
    let items = order
        .iter()
        .map(|doc| assemble_qc_article(&by_doc[doc], doc))
        .collect::<Result<_>>()?;
    set(Variant::QcAsm, items)
}

/// Union over n = 1..=up_to_n, removing items whose dedup key repeats
/// within a document. Survivors keep the first occurrence's text and
/// accumulate every n and window they appeared under.
fn union_by<K>(
    per_n: &BTreeMap<usize, RepresentationSet>,
    up_to_n: usize,
    from: Variant,
    to: Variant,
    key: K,
) -> Result<RepresentationSet>
where
    K: Fn(&Representation) -> String,
{
    let sets = required_sets(per_n, up_to_n, from)?;
    let mut slots: HashMap<(String, String), usize> = HashMap::new();
    let mut out: Vec<Representation> = Vec::new();
    for s in sets {
        for item in &s.items {
            let k = (item.doc_id.clone(), key(item));
            match slots.get(&k) {
                Some(&i) => {
                    let kept = &mut out[i];
                    kept.n_grams.extend(item.n_grams.iter().copied());
                    for w in &item.provenance {
                        if !kept.provenance.contains(w) {
                            kept.provenance.push(w.clone());
                        }
                    }
                }
                None => {
                    slots.insert(k, out.len());
                    let mut r = item.clone();
                    r.variant = to;
                    out.push(r);
                }
            }
        }
    }
    for r in &mut out {
        r.provenance.sort();
        r.id = r.content_id();
    }
    set(to, out)
}

fn part(r: &Representation, field: Option<&String>) -> String {
    dedup_key(field.map_or(r.text.as_str(), String::as_str))
}

pub fn assemble_union_qa(
    per_n: &BTreeMap<usize, RepresentationSet>,
    up_to_n: usize,
) -> Result<RepresentationSet> {
    union_by(per_n, up_to_n, Variant::Qa, Variant::QaAsm, |r| {
        format!("{}\u{0}{}", part(r, r.question.as_ref()), part(r, r.answer.as_ref()))
    })
}

pub fn assemble_union_qca(
    per_n: &BTreeMap<usize, RepresentationSet>,
    up_to_n: usize,
) -> Result<RepresentationSet> {
    union_by(per_n, up_to_n, Variant::Qca, Variant::QcaAsm, |r| {
        format!(
            "{}\u{0}{}\u{0}{}",
            part(r, r.question.as_ref()),
            part(r, r.context.as_ref()),
            part(r, r.answer.as_ref())
        )
    })
}

pub fn assemble_union_qc(
    per_n: &BTreeMap<usize, RepresentationSet>,
    up_to_n: usize,
) -> Result<RepresentationSet> {
    union_by(per_n, up_to_n, Variant::Qc, Variant::QcPairsAsm, |r| {
        format!("{}\u{0}{}", part(r, r.question.as_ref()), part(r, r.context.as_ref()))
    })
}

/// Context windows of every order 1..=up_to_n, deduplicated by text.
pub fn build_c_asm(
    windows_per_n: &BTreeMap<usize, Vec<ContextWindow>>,
    up_to_n: usize,
) -> Result<RepresentationSet> {
    let per_n = windows_per_n
        .iter()
        .map(|(n, w)| Ok((*n, build_c(w)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    union_by(&per_n, up_to_n, Variant::C, Variant::CAsm, |r| dedup_key(&r.text))
}

pub fn build_raw_articles(documents: &[Document]) -> Result<RepresentationSet> {
    let items = documents
        .iter()
        .map(|d| {
            let text = if d.title.is_empty() {
                d.text.clone()
            } else {
                format!("{}\n{}", d.title, d.text)
            };
            Representation::new(Variant::RawArticle, &d.id, text, None, Vec::new())
                .with_parts(None, Some(&d.text))
        })
        .collect();
    set(Variant::RawArticle, items)
}

/// Every provenance window of every item exists in `known`.
pub fn provenance_closed(set: &RepresentationSet, known: &HashSet<WindowRef>) -> bool {
    set.items
        .iter()
        .all(|r| r.provenance.iter().all(|w| known.contains(w)))
}
