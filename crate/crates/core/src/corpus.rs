//! Corpus loading, sentence segmentation and n-gram context windows.
//!
//! Corpora use the BEIR layout: a line-delimited JSON file with `_id`,
//! `title` and `text` fields per document. Text is NFC-normalized and runs of
//! ASCII whitespace are collapsed on load; every offset and sentence boundary
//! is computed over that normalized form.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::digest::Digester;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub doc_id: String,
    pub index: usize,
    pub text: String,
}

/// A reference to one window: `(doc_id, n, start)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WindowRef {
    pub doc_id: String,
    pub n: usize,
    pub start: usize,
}

/// `n` consecutive sentences of one document, starting at sentence `start`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextWindow {
    pub doc_id: String,
    pub n: usize,
    pub start: usize,
    pub sentences: Vec<Sentence>,
}

impl ContextWindow {
    /// Window sentences joined by single spaces.
    pub fn text(&self) -> String {
        join_sentences(&self.sentences)
    }

    pub fn window_ref(&self) -> WindowRef {
        WindowRef {
            doc_id: self.doc_id.clone(),
            n: self.n,
            start: self.start,
        }
    }

    /// Exclusive end sentence index.
    pub fn end(&self) -> usize {
        self.start + self.sentences.len()
    }
}

/// How windows of order `n` are laid over a document.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowLayout {
    /// Stride 1: `max(1, m - n + 1)` overlapping windows.
    #[default]
    Sliding,
    /// Stride `n`: `ceil(m / n)` disjoint windows, the last one possibly
    /// shorter than `n`.
    Tiled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
}

#[derive(Deserialize)]
struct CorpusLine {
    #[serde(rename = "_id")]
    id: String,
    #[serde(default)]
    title: String,
    text: String,
}

#[derive(Deserialize)]
struct QueryLine {
    #[serde(rename = "_id")]
    id: String,
    text: String,
}

/// NFC-normalize, collapse ASCII whitespace runs to one space, trim.
///
/// Only ASCII whitespace is collapsed: non-breaking spaces are content in
/// several corpora (dates such as `1678\u{a0}\u{2013} 1741`) and survive.
pub fn normalize_text(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    let mut out = String::with_capacity(nfc.len());
    let mut pending_space = false;
    for c in nfc.chars() {
        if c.is_ascii_whitespace() {
            pending_space = !out.is_empty();
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(c);
        }
    }
    out
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(file, path)
}

/// Parses a BEIR corpus from any reader; `origin` is only used in errors.
pub fn read_corpus(reader: impl Read, origin: &Path) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::MalformedRecord {
            path: origin.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let rec: CorpusLine = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if rec.id.is_empty() {
            return Err(malformed("empty `_id`".into()));
        }
        let text = normalize_text(&rec.text);
        if text.is_empty() {
            return Err(malformed(format!("document `{}` has empty text", rec.id)));
        }
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        docs.push(Document {
            id: rec.id,
            title: normalize_text(&rec.title),
            text,
        });
    }
    Ok(docs)
}

pub fn load_queries(path: impl AsRef<Path>) -> Result<Vec<Query>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut queries = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: QueryLine = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        queries.push(Query {
            id: rec.id,
            text: normalize_text(&rec.text),
        });
    }
    Ok(queries)
}

/// Content digest over ids, titles and texts, in corpus order.
pub fn corpus_fingerprint(docs: &[Document]) -> String {
    let mut d = Digester::new("corpus");
    for doc in docs {
        d.field(&doc.id).field(&doc.title).field(&doc.text);
    }
    d.finish()
}

const ABBREVIATIONS: &[&str] = &[
    "dr.", "mr.", "mrs.", "ms.", "st.", "vs.", "e.g.", "i.e.", "u.s.", "no.", "fig.", "eq.",
];

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '”' | '’' | '»')
}

fn is_opener(c: char) -> bool {
    c.is_uppercase()
        || c.is_ascii_digit()
        || matches!(c, '"' | '\'' | '“' | '‘' | '(' | '[' | '«')
}

/// Splits a document into sentences.
///
/// A boundary is a run of `.`, `?` or `!` (plus any closing quotes or
/// brackets) followed by a space and a sentence opener: an uppercase
/// letter, a digit, or an opening quote/bracket. A period ending one of a
/// fixed set of abbreviations never splits.
pub fn segment(document: &Document) -> Result<Vec<Sentence>> {
    let text = normalize_text(&document.text);
    if text.is_empty() {
        return Err(Error::EmptyDocument(document.id.clone()));
    }
    Ok(split_sentences(&text)
        .into_iter()
        .enumerate()
        .map(|(index, s)| Sentence {
            doc_id: document.id.clone(),
            index,
            text: s.to_string(),
        })
        .collect())
}

/// Sentence split over already-normalized text.
pub(crate) fn split_sentences(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (_, c) = chars[i];
        if !matches!(c, '.' | '?' | '!') {
            i += 1;
            continue;
        }
        // Absorb "?!", "..." and trailing closers.
        let mut j = i;
        while j + 1 < chars.len() && matches!(chars[j + 1].1, '.' | '?' | '!') {
            j += 1;
        }
        while j + 1 < chars.len() && is_closer(chars[j + 1].1) {
            j += 1;
        }
        let boundary = j + 2 < chars.len()
            && chars[j + 1].1 == ' '
            && is_opener(chars[j + 2].1)
            && !(c == '.' && j == i && is_protected(text, chars[i].0));
        if boundary {
            let end = chars[j + 1].0;
            out.push(text[start..end].trim());
            start = chars[j + 2].0;
            i = j + 2;
        } else {
            i = j + 1;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Whether the period at byte `dot` ends a protected abbreviation.
fn is_protected(text: &str, dot: usize) -> bool {
    let word_start = text[..dot].rfind(' ').map_or(0, |p| p + 1);
    let word = text[word_start..=dot].trim_start_matches(|c: char| !c.is_alphanumeric());
    let lower = word.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
}

pub fn join_sentences(sentences: &[Sentence]) -> String {
    let mut out = String::new();
    for (i, s) in sentences.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&s.text);
    }
    out
}

/// Sliding n-gram windows over a document's sentences.
///
/// Returns `max(1, m - n + 1)` windows; window `j` covers sentences
/// `j..j + n`. A document shorter than `n` yields one window over all of it.
pub fn windows(sentences: &[Sentence], n: usize) -> Result<Vec<ContextWindow>> {
    windows_with_layout(sentences, n, WindowLayout::Sliding)
}

pub fn windows_with_layout(
    sentences: &[Sentence],
    n: usize,
    layout: WindowLayout,
) -> Result<Vec<ContextWindow>> {
    if n < 1 {
        return Err(Error::InvalidArgument("window order n must be >= 1".into()));
    }
    let Some(first) = sentences.first() else {
        return Err(Error::InvalidArgument("no sentences to window".into()));
    };
    let doc_id = &first.doc_id;
    for (i, s) in sentences.iter().enumerate() {
        if s.index != i || &s.doc_id != doc_id {
            return Err(Error::InvalidArgument(format!(
                "sentences of `{doc_id}` are not contiguous from 0"
            )));
        }
    }
    let m = sentences.len();
    let starts: Vec<usize> = match layout {
        WindowLayout::Sliding => (0..=m.saturating_sub(n)).collect(),
        WindowLayout::Tiled => (0..m).step_by(n).collect(),
    };
    Ok(starts
        .into_iter()
        .map(|start| ContextWindow {
            doc_id: doc_id.clone(),
            n,
            start,
            sentences: sentences[start..(start + n).min(m)].to_vec(),
        })
        .collect())
}
