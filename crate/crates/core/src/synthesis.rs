//! Question and question-answer synthesis over n-gram windows.
//!
//! One provider call covers every window of a `(document, n)` batch: the
//! windows are rendered as a numbered series of paragraphs into the meta
//! prompt and the provider returns one item per paragraph. Items are
//! aligned with windows by position.

use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{ContextWindow, Document};
use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::llm::{CompletionRequest, Provider};

pub const PLACEHOLDER: &str = "{paragraphs}";

const FINE_GRAINED_QUESTIONS: &str = include_str!("../prompts/fine_grained_questions.txt");
const INTERLEAVED_QA: &str = include_str!("../prompts/interleaved_qa.txt");

const RETRY_REMINDER: &str = "\n\nReturn only the list.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    FineGrainedQuestions,
    InterleavedQa,
}

impl TemplateName {
    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::FineGrainedQuestions => "fine_grained_questions",
            TemplateName::InterleavedQa => "interleaved_qa",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    name: TemplateName,
    body: String,
}

impl PromptTemplate {
    pub fn new(name: TemplateName, body: impl Into<String>) -> Result<Self> {
        let body = body.into();
        let count = body.matches(PLACEHOLDER).count();
        if count != 1 {
            return Err(Error::Config(format!(
                "template {} must contain exactly one {PLACEHOLDER} placeholder, found {count}",
                name.as_str()
            )));
        }
        Ok(PromptTemplate { name, body })
    }

    pub fn fine_grained_questions() -> Self {
        PromptTemplate {
            name: TemplateName::FineGrainedQuestions,
            body: FINE_GRAINED_QUESTIONS.to_string(),
        }
    }

    pub fn interleaved_qa() -> Self {
        PromptTemplate {
            name: TemplateName::InterleavedQa,
            body: INTERLEAVED_QA.to_string(),
        }
    }

    pub fn builtin(name: TemplateName) -> Self {
        match name {
            TemplateName::FineGrainedQuestions => Self::fine_grained_questions(),
            TemplateName::InterleavedQa => Self::interleaved_qa(),
        }
    }

    /// Loads `<dir>/<name>.txt`.
    pub fn load(name: TemplateName, dir: &Path) -> Result<Self> {
        let path = dir.join(format!("{}.txt", name.as_str()));
        let body = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::new(name, body)
    }

    pub fn name(&self) -> TemplateName {
        self.name
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.body.as_bytes())
    }
}

fn check_batch(windows: &[ContextWindow]) -> Result<()> {
    let Some(first) = windows.first() else {
        return Err(Error::InvalidArgument("no windows to render".into()));
    };
    if windows
        .iter()
        .any(|w| w.doc_id != first.doc_id || w.n != first.n)
    {
        return Err(Error::InvalidArgument(
            "windows in one batch must share document and n".into(),
        ));
    }
    Ok(())
}

/// Numbered paragraph blocks, one per window, separated by blank lines.
fn paragraphs_block(windows: &[ContextWindow]) -> String {
    windows
        .iter()
        .enumerate()
        .map(|(i, w)| format!("{}. {}", i + 1, w.text()))
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub fn render_prompt(template: &PromptTemplate, windows: &[ContextWindow]) -> Result<String> {
    render_prompt_with_article(template, windows, None)
}

/// Like [`render_prompt`], optionally appending the whole document under a
/// `##Full Article:` section after the paragraphs.
pub fn render_prompt_with_article(
    template: &PromptTemplate,
    windows: &[ContextWindow],
    article: Option<&str>,
) -> Result<String> {
    check_batch(windows)?;
    let mut block = paragraphs_block(windows);
    if let Some(article) = article {
        block.push_str("\n\n##Full Article:\n");
        block.push_str(article);
    }
    Ok(template.body.replacen(PLACEHOLDER, &block, 1))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypotheticalQuestion {
    pub doc_id: String,
    pub n: usize,
    pub start: usize,
    pub text: String,
    /// False when the text does not end in `?`.
    pub interrogative: bool,
}

impl HypotheticalQuestion {
    pub fn for_window(window: &ContextWindow, text: impl Into<String>) -> Result<Self> {
        let text = text.into().trim().to_string();
        if text.is_empty() {
            return Err(Error::Invariant(format!(
                "empty question for window {}:{}:{}",
                window.doc_id, window.n, window.start
            )));
        }
        Ok(HypotheticalQuestion {
            doc_id: window.doc_id.clone(),
            n: window.n,
            start: window.start,
            interrogative: text.ends_with('?'),
            text,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAPair {
    pub question: HypotheticalQuestion,
    pub answer: String,
    /// Answer exceeds the configured word cap. Flagged, never truncated.
    pub over_length: bool,
}

/// One line of a persisted synthesis store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisRecord {
    pub doc_id: String,
    pub n: usize,
    pub start: usize,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

impl From<&HypotheticalQuestion> for SynthesisRecord {
    fn from(q: &HypotheticalQuestion) -> Self {
        SynthesisRecord {
            doc_id: q.doc_id.clone(),
            n: q.n,
            start: q.start,
            question: q.text.clone(),
            answer: None,
        }
    }
}

impl From<&QAPair> for SynthesisRecord {
    fn from(p: &QAPair) -> Self {
        SynthesisRecord {
            answer: Some(p.answer.clone()),
            ..SynthesisRecord::from(&p.question)
        }
    }
}

impl SynthesisRecord {
    pub fn to_question(&self) -> HypotheticalQuestion {
        HypotheticalQuestion {
            doc_id: self.doc_id.clone(),
            n: self.n,
            start: self.start,
            interrogative: self.question.trim_end().ends_with('?'),
            text: self.question.clone(),
        }
    }

    pub fn to_pair(&self, answer_word_cap: usize) -> Result<QAPair> {
        let answer = self.answer.clone().ok_or_else(|| {
            Error::Invariant(format!(
                "record {}:{}:{} has no answer",
                self.doc_id, self.n, self.start
            ))
        })?;
        Ok(QAPair {
            question: self.to_question(),
            over_length: answer.split_whitespace().count() > answer_word_cap,
            answer,
        })
    }
}

fn fence_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)```[A-Za-z]*\s*(.*?)\s*```").unwrap())
}

fn trailing_comma_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r",\s*([\]}])").unwrap())
}

fn numbering_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(?:\*\*)?(?:(?i:q(?:uestion)?)\s*)?\d+\s*[.):\-]\s*(?:\*\*)?\s*").unwrap()
    })
}

fn quoted_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#""((?:[^"\\]|\\.)*)"|'((?:[^'\\]|\\.)*)'"#).unwrap())
}

/// Removes a code fence wrapper, smart quotes and an echoed `##Questions:`
/// header.
fn preclean(raw: &str) -> String {
    let mut s = raw.trim().to_string();
    if let Some(c) = fence_re().captures(&s) {
        s = c[1].to_string();
    }
    s = s
        .replace(['\u{201c}', '\u{201d}'], "\"")
        .replace(['\u{2018}', '\u{2019}'], "'");
    let s = s.trim();
    s.strip_prefix("##Questions:").unwrap_or(s).trim().to_string()
}

fn bracket_slice(s: &str) -> Option<&str> {
    let open = s.find('[')?;
    match s.rfind(']') {
        Some(close) if close > open => Some(&s[open..=close]),
        _ => Some(&s[open..]),
    }
}

fn clean_item(item: &str) -> String {
    let t = item
        .trim()
        .trim_end_matches(',')
        .trim()
        .trim_matches(|c| c == '"' || c == '\'')
        .trim();
    let t = t.trim_start_matches(['-', '*', '\u{2022}']).trim_start();
    numbering_re().replace(t, "").trim().to_string()
}

fn json_string_items(slice: &str) -> Option<Vec<String>> {
    let parse = |s: &str| serde_json::from_str::<Vec<Value>>(s).ok();
    let values = parse(slice).or_else(|| parse(&trailing_comma_re().replace_all(slice, "$1")))?;
    values
        .into_iter()
        .map(|v| v.as_str().map(str::to_string))
        .collect()
}

fn quoted_items(slice: &str) -> Option<Vec<String>> {
    let items: Vec<String> = quoted_re()
        .captures_iter(slice)
        .map(|c| {
            c.get(1)
                .or_else(|| c.get(2))
                .map_or(String::new(), |m| m.as_str().replace("\\\"", "\"").replace("\\'", "'"))
        })
        .collect();
    (!items.is_empty()).then_some(items)
}

fn line_items(s: &str) -> Vec<String> {
    let lines: Vec<&str> = s
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !(l.ends_with(':') && !l.contains('?')))
        .filter(|l| !matches!(*l, "[" | "]"))
        .collect();
    let marked = |l: &&str| {
        numbering_re().is_match(l.trim_start_matches(['"', '\'']))
            || l.starts_with(['-', '*', '\u{2022}'])
    };
    let any_marked = lines.iter().any(marked);
    lines
        .into_iter()
        .filter(|l| !any_marked || marked(l))
        .map(clean_item)
        .collect()
}

fn finish_items(items: Vec<String>, expected: usize, raw: &str) -> Result<Vec<String>> {
    let items: Vec<String> = items.iter().map(|i| clean_item(i)).collect();
    if items.iter().any(String::is_empty) {
        return Err(Error::Unparseable {
            reason: "empty item".into(),
            raw: raw.to_string(),
        });
    }
    if items.len() != expected {
        return Err(Error::Alignment {
            expected,
            actual: items.len(),
        });
    }
    Ok(items)
}

/// Parses a question list such as `["1. question 1", "2. question 2"]`.
///
/// Tolerates code fences, trailing commas, single quotes, bullet or
/// numbered lines without brackets, and a leading preamble line.
pub fn parse_question_list(raw: &str, expected: usize) -> Result<Vec<String>> {
    if expected < 1 {
        return Err(Error::InvalidArgument("expected item count must be >= 1".into()));
    }
    let s = preclean(raw);
    let items = match bracket_slice(&s) {
        Some(slice) => json_string_items(slice)
            .or_else(|| quoted_items(slice))
            .unwrap_or_else(|| line_items(&s)),
        None if s.starts_with(['"', '\'']) => quoted_items(&s).unwrap_or_default(),
        None => line_items(&s),
    };
    if items.is_empty() {
        return Err(Error::Unparseable {
            reason: "no list items found".into(),
            raw: raw.to_string(),
        });
    }
    finish_items(items, expected, raw)
}

/// Parses `[{"q": ..., "a": ...}, ...]`; `question`/`answer` keys are
/// accepted too.
pub fn parse_qa_list(raw: &str, expected: usize) -> Result<Vec<(String, String)>> {
    if expected < 1 {
        return Err(Error::InvalidArgument("expected item count must be >= 1".into()));
    }
    let unparseable = |reason: String| Error::Unparseable {
        reason,
        raw: raw.to_string(),
    };
    let s = preclean(raw);
    let slice = match bracket_slice(&s) {
        Some(slice) => slice.to_string(),
        None => match (s.find('{'), s.rfind('}')) {
            (Some(a), Some(b)) if b > a => format!("[{}]", &s[a..=b]),
            _ => return Err(unparseable("no JSON array found".into())),
        },
    };
    let values: Vec<Value> = serde_json::from_str(&slice)
        .or_else(|_| serde_json::from_str(&trailing_comma_re().replace_all(&slice, "$1")))
        .map_err(|e| unparseable(format!("invalid JSON: {e}")))?;
    let field = |obj: &serde_json::Map<String, Value>, keys: [&str; 2]| {
        keys.iter()
            .find_map(|k| obj.get(*k).and_then(Value::as_str))
            .map(|s| s.trim().to_string())
    };
    let mut pairs = Vec::with_capacity(values.len());
    for (i, v) in values.iter().enumerate() {
        let obj = v
            .as_object()
            .ok_or_else(|| unparseable(format!("item {} is not an object", i + 1)))?;
        let q = field(obj, ["q", "question"])
            .ok_or_else(|| unparseable(format!("item {} is missing `q`", i + 1)))?;
        let a = field(obj, ["a", "answer"])
            .ok_or_else(|| unparseable(format!("item {} is missing `a`", i + 1)))?;
        let q = clean_item(&q);
        if q.is_empty() || a.is_empty() {
            return Err(unparseable(format!("item {} is empty", i + 1)));
        }
        pairs.push((q, a));
    }
    if pairs.len() != expected {
        return Err(Error::Alignment {
            expected,
            actual: pairs.len(),
        });
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisSettings {
    pub model: String,
    pub system_prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Append the whole document after the paragraphs.
    pub include_full_article: bool,
    /// Fall back to one call per window when a batch stays misaligned.
    pub per_window_fallback: bool,
    pub answer_word_cap: usize,
}

impl Default for SynthesisSettings {
    fn default() -> Self {
        SynthesisSettings {
            model: "gpt-3.5-turbo".into(),
            system_prompt: String::new(),
            temperature: 0.0,
            max_tokens: 2048,
            include_full_article: false,
            per_window_fallback: false,
            answer_word_cap: 100,
        }
    }
}

pub struct Synthesizer<'a, P: ?Sized> {
    provider: &'a P,
    settings: SynthesisSettings,
    questions: PromptTemplate,
    qa: PromptTemplate,
}

impl<'a, P: Provider + ?Sized> Synthesizer<'a, P> {
    pub fn new(provider: &'a P, settings: SynthesisSettings) -> Self {
        Synthesizer {
            provider,
            settings,
            questions: PromptTemplate::fine_grained_questions(),
            qa: PromptTemplate::interleaved_qa(),
        }
    }

    pub fn with_templates(mut self, questions: PromptTemplate, qa: PromptTemplate) -> Self {
        self.questions = questions;
        self.qa = qa;
        self
    }

    pub fn settings(&self) -> &SynthesisSettings {
        &self.settings
    }

    fn request(&self, prompt: String) -> CompletionRequest {
        CompletionRequest {
            model: self.settings.model.clone(),
            system_prompt: self.settings.system_prompt.clone(),
            user_prompt: prompt,
            temperature: self.settings.temperature,
            max_tokens: self.settings.max_tokens,
            top_k: None,
        }
    }

    /// Render, call, parse; on a parse or alignment failure, one retry with
    /// a reminder appended, then optionally per-window calls.
    fn run_batch<T>(
        &self,
        template: &PromptTemplate,
        windows: &[ContextWindow],
        article: Option<&Document>,
        parse: &dyn Fn(&str, usize) -> Result<Vec<T>>,
    ) -> Result<Vec<T>> {
        let article_text = article
            .filter(|_| self.settings.include_full_article)
            .map(|d| d.text.as_str());
        let prompt = render_prompt_with_article(template, windows, article_text)?;
        let first = self.provider.complete(&self.request(prompt.clone()))?;
        let err = match parse(&first.text, windows.len()) {
            Ok(items) => return Ok(items),
            Err(e) => e,
        };
        log::warn!(
            "{}:n={} {}: {err}; retrying",
            windows[0].doc_id,
            windows[0].n,
            template.name.as_str()
        );
        let retry = self
            .provider
            .complete(&self.request(format!("{prompt}{RETRY_REMINDER}")))?;
        let err = match parse(&retry.text, windows.len()) {
            Ok(items) => return Ok(items),
            Err(e) => e,
        };
        if self.settings.per_window_fallback && windows.len() > 1 {
            log::warn!("falling back to per-window calls");
            let mut out = Vec::with_capacity(windows.len());
            for w in windows {
                out.extend(self.run_batch(template, std::slice::from_ref(w), article, parse)?);
            }
            return Ok(out);
        }
        Err(err)
    }

    pub fn questions(
        &self,
        windows: &[ContextWindow],
        article: Option<&Document>,
    ) -> Result<Vec<HypotheticalQuestion>> {
        check_batch(windows)?;
        let texts = self.run_batch(&self.questions, windows, article, &parse_question_list)?;
        windows
            .iter()
            .zip(texts)
            .map(|(w, t)| HypotheticalQuestion::for_window(w, t))
            .collect()
    }

    pub fn qa_pairs(
        &self,
        windows: &[ContextWindow],
        article: Option<&Document>,
    ) -> Result<Vec<QAPair>> {
        check_batch(windows)?;
        let pairs = self.run_batch(&self.qa, windows, article, &parse_qa_list)?;
        windows
            .iter()
            .zip(pairs)
            .map(|(w, (q, a))| {
                if a.trim().is_empty() {
                    return Err(Error::Invariant("empty answer".into()));
                }
                Ok(QAPair {
                    question: HypotheticalQuestion::for_window(w, q)?,
                    over_length: a.split_whitespace().count() > self.settings.answer_word_cap,
                    answer: a,
                })
            })
            .collect()
    }
}

/// One hypothetical question per window, with default settings.
pub fn synthesize_questions<P: Provider + ?Sized>(
    windows: &[ContextWindow],
    provider: &P,
) -> Result<Vec<HypotheticalQuestion>> {
    Synthesizer::new(provider, SynthesisSettings::default()).questions(windows, None)
}

/// One question-answer pair per window, with default settings.
pub fn synthesize_qa<P: Provider + ?Sized>(
    windows: &[ContextWindow],
    provider: &P,
) -> Result<Vec<QAPair>> {
    Synthesizer::new(provider, SynthesisSettings::default()).qa_pairs(windows, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{segment, windows};
    use crate::llm::mock_provider;

    fn doc_windows(text: &str, n: usize) -> Vec<ContextWindow> {
        let d = Document {
            id: "d".into(),
            title: String::new(),
            text: text.into(),
        };
        windows(&segment(&d).unwrap(), n).unwrap()
    }

    #[test]
    fn templates_have_one_placeholder() {
        for t in [PromptTemplate::fine_grained_questions(), PromptTemplate::interleaved_qa()] {
            assert_eq!(t.body().matches(PLACEHOLDER).count(), 1);
            assert!(PromptTemplate::new(t.name(), t.body()).is_ok());
        }
        assert!(PromptTemplate::new(TemplateName::InterleavedQa, "no slot").is_err());
        assert!(PromptTemplate::new(TemplateName::InterleavedQa, "{paragraphs}{paragraphs}").is_err());
    }

    #[test]
    fn render_question_prompt() {
        let w = doc_windows("Alpha is a thing.", 1);
        let p = render_prompt(&PromptTemplate::fine_grained_questions(), &w).unwrap();
        assert!(p.contains("generate questions for each paragraph"));
        assert!(p.contains("##Paragraphs:\n1. Alpha is a thing.\n\nReturn the questions in a list."));
    }

    #[test]
    fn render_qa_prompt() {
        let w = doc_windows("Alpha is a thing.", 1);
        let p = render_prompt(&PromptTemplate::interleaved_qa(), &w).unwrap();
        assert!(p.contains("abstract the corresponding answers"));
    }

    #[test]
    fn render_is_byte_faithful_around_substitution() {
        let t = PromptTemplate::fine_grained_questions();
        let w = doc_windows("One here. Two here.", 1);
        let p = render_prompt(&t, &w).unwrap();
        let (head, tail) = t.body().split_once(PLACEHOLDER).unwrap();
        assert!(p.starts_with(head));
        assert!(p.ends_with(tail));
        assert_eq!(&p[head.len()..p.len() - tail.len()], "1. One here.\n\n2. Two here.");
    }

    #[test]
    fn render_rejects_empty_and_mixed() {
        let t = PromptTemplate::fine_grained_questions();
        assert!(render_prompt(&t, &[]).is_err());
        let mut w = doc_windows("One here. Two here.", 1);
        w[1].n = 2;
        assert!(render_prompt(&t, &w).is_err());
    }

    #[test]
    fn full_article_section() {
        let t = PromptTemplate::fine_grained_questions();
        let w = doc_windows("One here. Two here.", 1);
        let p = render_prompt_with_article(&t, &w, Some("One here. Two here.")).unwrap();
        assert!(p.contains("2. Two here.\n\n##Full Article:\nOne here. Two here.\n\nReturn"));
    }

    #[test]
    fn parse_bracketed_numbered_list() {
        let raw = r#"["1. Who was X?", "2. Where was X born?"]"#;
        assert_eq!(
            parse_question_list(raw, 2).unwrap(),
            vec!["Who was X?", "Where was X born?"]
        );
    }

    #[test]
    fn parse_count_mismatch() {
        let raw = r#"["1. Who was X?", "2. Where was X born?"]"#;
        assert!(matches!(
            parse_question_list(raw, 3),
            Err(Error::Alignment { expected: 3, actual: 2 })
        ));
    }

    /// Hand-built malformed outputs that the repair path must accept.
    #[test]
    fn repair_fixtures() {
        let expected = vec!["Who was X?".to_string(), "Where was X born?".to_string()];
        let fixtures = [
            "1. Who was X?\n2. Where was X born?",
            "```json\n[\"1. Who was X?\", \"2. Where was X born?\"]\n```",
            "[\"1. Who was X?\", \"2. Where was X born?\",]",
            "['1. Who was X?', '2. Where was X born?']",
            "- Who was X?\n- Where was X born?",
            "1) Who was X?\n2) Where was X born?",
            "Here are the questions:\n1. Who was X?\n2. Where was X born?",
            "[\"Who was X?\", \"Where was X born?\"]",
            "[\"1. Who was X?\", \"2. Where was X born?\"",
            "##Questions:\n**1.** Who was X?\n**2.** Where was X born?",
            "\u{201c}1. Who was X?\u{201d}, \u{201c}2. Where was X born?\u{201d}",
            "[\n  \"1. Who was X?\",\n  \"2. Where was X born?\"\n]",
        ];
        for raw in fixtures {
            assert_eq!(parse_question_list(raw, 2).unwrap(), expected, "fixture {raw:?}");
        }
    }

    #[test]
    fn parse_qa() {
        assert_eq!(
            parse_qa_list(r#"[{"q":"Q1","a":"A1"}]"#, 1).unwrap(),
            vec![("Q1".to_string(), "A1".to_string())]
        );
        assert_eq!(
            parse_qa_list("```json\n[{\"q\":\"Q1\",\"a\":\"A1\"},]\n```", 1).unwrap(),
            vec![("Q1".to_string(), "A1".to_string())]
        );
        assert_eq!(
            parse_qa_list(r#"[{"question":"Q1","answer":"A1"}]"#, 1).unwrap(),
            vec![("Q1".to_string(), "A1".to_string())]
        );
        assert!(matches!(
            parse_qa_list(r#"[{"q":"Q1"}]"#, 1),
            Err(Error::Unparseable { .. })
        ));
        assert!(matches!(
            parse_qa_list(r#"[{"q":"Q1","a":"A1"}]"#, 2),
            Err(Error::Alignment { expected: 2, actual: 1 })
        ));
    }

    #[test]
    fn questions_align_with_windows() {
        let w = doc_windows("A one. B two. C three.", 1);
        let p = mock_provider([("1. A one.", r#"["1. Q1?", "2. Q2?", "3. Q3"]"#)]);
        let qs = synthesize_questions(&w, &p).unwrap();
        assert_eq!(qs.len(), 3);
        assert_eq!((qs[1].start, qs[1].text.as_str()), (1, "Q2?"));
        assert!(!qs[2].interrogative);
    }

    #[test]
    fn short_list_is_an_alignment_error() {
        let w = doc_windows("A one. B two. C three.", 1);
        let p = mock_provider([("1. A one.", r#"["1. Q1?", "2. Q2?"]"#)]);
        assert!(matches!(
            synthesize_questions(&w, &p),
            Err(Error::Alignment { expected: 3, actual: 2 })
        ));
    }

    #[test]
    fn retry_with_reminder_recovers() {
        let w = doc_windows("A one. B two.", 1);
        // The first prompt matches no key and gets an unparseable digest string.
        let p = mock_provider([("Return only the list.", r#"["1. Q1?", "2. Q2?"]"#)]);
        assert_eq!(synthesize_questions(&w, &p).unwrap().len(), 2);
    }

    #[test]
    fn per_window_fallback() {
        let w = doc_windows("A one. B two.", 1);
        let p = mock_provider([
            ("1. A one.\n\n2. B two.", r#"["1. only one?"]"#),
            ("1. A one.\n\nReturn", r#"["1. QA?"]"#),
            ("1. B two.\n\nReturn", r#"["1. QB?"]"#),
        ]);
        let settings = SynthesisSettings {
            per_window_fallback: true,
            ..Default::default()
        };
        let qs = Synthesizer::new(&p, settings).questions(&w, None).unwrap();
        assert_eq!(qs.iter().map(|q| q.text.as_str()).collect::<Vec<_>>(), ["QA?", "QB?"]);
        assert_eq!(qs[1].start, 1);
    }

    #[test]
    fn empty_answer_is_rejected() {
        let w = doc_windows("A one.", 1);
        let p = mock_provider([("1. A one.", r#"[{"q":"Q?","a":""}]"#)]);
        assert!(synthesize_qa(&w, &p).is_err());
    }

    #[test]
    fn long_answers_are_flagged() {
        let w = doc_windows("A one.", 1);
        let long = vec!["word"; 101].join(" ");
        let p = mock_provider([("1. A one.", format!(r#"[{{"q":"Q?","a":"{long}"}}]"#))]);
        let pairs = synthesize_qa(&w, &p).unwrap();
        assert!(pairs[0].over_length);
        assert_eq!(pairs[0].answer, long);
    }
}
