//! Deterministic stand-in for a language model, used when a run has no
//! network provider. It answers the synthesis prompts with questions and
//! answers lifted from each paragraph, and RAG prompts with the first
//! context sentence.

use serde_json::json;

use crate::corpus::split_sentences;
use crate::llm::{CompletionRequest, MockProvider};

const PARAGRAPHS_HEADER: &str = "##Paragraphs:\n";
const PARAGRAPHS_END: &str = "\n\nReturn the questions in a list.";
const QA_MARKER: &str = "\"q\":";
const NO_ANSWER: &str = "unknown";

/// The paragraphs of a rendered synthesis prompt, without their numbers.
pub fn prompt_paragraphs(prompt: &str) -> Option<Vec<String>> {
    let start = prompt.find(PARAGRAPHS_HEADER)? + PARAGRAPHS_HEADER.len();
    let rest = &prompt[start..];
    let block = &rest[..rest.find(PARAGRAPHS_END).unwrap_or(rest.len())];
    let mut out = Vec::new();
    for (i, chunk) in block.split("\n\n").enumerate() {
        let label = format!("{}. ", i + 1);
        out.push(chunk.strip_prefix(label.as_str())?.to_string());
    }
    Some(out)
}

fn first_sentence(text: &str) -> String {
    split_sentences(text)
        .first()
        .map(|s| s.to_string())
        .unwrap_or_default()
}

/// A question over the head of a paragraph's first sentence.
pub fn extractive_question(paragraph: &str) -> String {
    let sentence = first_sentence(paragraph);
    let head: Vec<&str> = sentence.split_whitespace().take(12).collect();
    let head = head
        .join(" ")
        .trim_end_matches(|c: char| c.is_ascii_punctuation())
        .to_string();
    format!("What does the passage state about {head}?")
}

/// Responder for any request: synthesis prompts get a parseable list, RAG
/// prompts get the first context sentence.
pub fn extractive_response(request: &CompletionRequest) -> String {
    let prompt = &request.user_prompt;
    if let Some(paragraphs) = prompt_paragraphs(prompt) {
        if prompt.contains(QA_MARKER) {
            let items: Vec<_> = paragraphs
                .iter()
                .map(|p| json!({"q": extractive_question(p), "a": first_sentence(p)}))
                .collect();
            return serde_json::Value::Array(items).to_string();
        }
        let items: Vec<String> = paragraphs
            .iter()
            .enumerate()
            .map(|(i, p)| format!("{}. {}", i + 1, extractive_question(p)))
            .collect();
        return serde_json::to_string(&items).expect("strings serialize");
    }
    if let Some(context) = super::rag_prompt_context(prompt) {
        let first = first_sentence(context.trim());
        return if first.is_empty() { NO_ANSWER.into() } else { first };
    }
    crate::llm::mock::digest_fallback(request)
}

/// A mock provider whose unscripted requests go to [`extractive_response`].
pub fn offline_provider<K, V>(script: impl IntoIterator<Item = (K, V)>) -> MockProvider
where
    K: Into<String>,
    V: Into<String>,
{
    MockProvider::new(script).with_fallback(extractive_response)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{segment, windows, Document};
    use crate::pipeline::rag_prompt;
    use crate::synthesis::{parse_qa_list, parse_question_list, render_prompt, PromptTemplate};

    fn doc_windows() -> Vec<crate::corpus::ContextWindow> {
        let d = Document {
            id: "d".into(),
            title: String::new(),
            text: "Lorman is a town in Mississippi. It has a college. The college fields a team.".into(),
        };
        windows(&segment(&d).unwrap(), 2).unwrap()
    }

    #[test]
    fn synthesis_responses_parse() {
        let ws = doc_windows();
        let q = render_prompt(&PromptTemplate::fine_grained_questions(), &ws).unwrap();
        let reply = extractive_response(&CompletionRequest::new("m", q));
        let qs = parse_question_list(&reply, 2).unwrap();
        assert_eq!(qs[0], "What does the passage state about Lorman is a town in Mississippi?");

        let qa = render_prompt(&PromptTemplate::interleaved_qa(), &ws).unwrap();
        let reply = extractive_response(&CompletionRequest::new("m", qa));
        let pairs = parse_qa_list(&reply, 2).unwrap();
        assert_eq!(pairs[1].1, "It has a college.");
    }

    #[test]
    fn rag_echoes_first_context_sentence() {
        let p = rag_prompt("Where?", "Lorman is a town. Other text.");
        assert_eq!(extractive_response(&CompletionRequest::new("m", p)), "Lorman is a town.");
        let p = rag_prompt("Where?", "");
        assert_eq!(extractive_response(&CompletionRequest::new("m", p)), NO_ANSWER);
    }

    #[test]
    fn other_prompts_get_digest_text() {
        assert!(extractive_response(&CompletionRequest::new("m", "hello")).starts_with("mock-"));
    }
}
