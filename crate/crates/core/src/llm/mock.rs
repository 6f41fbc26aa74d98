use std::collections::BTreeMap;
use std::fmt;

use super::{CompletionRequest, CompletionResponse, Provider};
use crate::error::{Error, Result};

type Responder = Box<dyn Fn(&CompletionRequest) -> String + Send + Sync>;

/// Scripted provider: answers with the canned response whose key occurs in
/// the user prompt.
///
/// Requests matching no key get the fallback responder's output, by default
/// a string derived from the request digest. The provider is a pure function
/// of the request, so replays are identical across processes.
pub struct MockProvider {
    id: String,
    script: BTreeMap<String, String>,
    fallback: Responder,
}

impl fmt::Debug for MockProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MockProvider")
            .field("id", &self.id)
            .field("script_keys", &self.script.len())
            .finish()
    }
}

pub fn mock_provider<K, V>(script: impl IntoIterator<Item = (K, V)>) -> MockProvider
where
    K: Into<String>,
    V: Into<String>,
{
    MockProvider::new(script)
}

impl MockProvider {
    pub fn new<K, V>(script: impl IntoIterator<Item = (K, V)>) -> Self
    where
        K: Into<String>,
        V: Into<String>,
    {
        MockProvider {
            id: "mock".into(),
            script: script
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
            fallback: Box::new(digest_fallback),
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn with_fallback(
        mut self,
        fallback: impl Fn(&CompletionRequest) -> String + Send + Sync + 'static,
    ) -> Self {
        self.fallback = Box::new(fallback);
        self
    }

    pub fn script_len(&self) -> usize {
        self.script.len()
    }
}

pub(crate) fn digest_fallback(request: &CompletionRequest) -> String {
    format!("mock-{}", &request.cache_key().digest[..16])
}

impl Provider for MockProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        request.validate()?;
        let mut hits = self
            .script
            .iter()
            .filter(|(key, _)| request.user_prompt.contains(key.as_str()));
        let text = match (hits.next(), hits.next()) {
            (Some((_, response)), None) => response.clone(),
            (None, _) => (self.fallback)(request),
            (Some((a, _)), Some((b, _))) => {
                return Err(Error::Provider(format!(
                    "mock script keys overlap in one prompt: {a:?} and {b:?}"
                )))
            }
        };
        Ok(CompletionResponse {
            text,
            provider_id: self.id.clone(),
            cached: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(prompt: &str) -> CompletionRequest {
        CompletionRequest::new("m", prompt)
    }

    #[test]
    fn scripted_response() {
        let p = mock_provider([("Vivaldi", "composer")]);
        assert_eq!(p.complete(&req("who is Vivaldi?")).unwrap().text, "composer");
    }

    #[test]
    fn fallback_is_deterministic() {
        let p = mock_provider(Vec::<(String, String)>::new());
        let a = p.complete(&req("anything")).unwrap();
        let b = p.complete(&req("anything")).unwrap();
        assert_eq!(a, b);
        assert!(a.text.starts_with("mock-"));
        assert_ne!(a.text, p.complete(&req("other")).unwrap().text);
    }

    #[test]
    fn overlapping_keys_are_an_error() {
        let p = mock_provider([("Viv", "a"), ("aldi", "b")]);
        assert!(p.complete(&req("Vivaldi")).is_err());
    }

    #[test]
    fn custom_fallback() {
        let p = mock_provider(Vec::<(String, String)>::new())
            .with_fallback(|r| r.user_prompt.to_uppercase());
        assert_eq!(p.complete(&req("abc")).unwrap().text, "ABC");
    }
}
