//! Text-completion providers.
//!
//! [`Provider`] is the one abstraction the rest of the crate talks to. Three
//! implementations ship here: [`HttpProvider`] for chat-completion style HTTP
//! endpoints, [`MockProvider`] for scripted offline runs, and
//! [`CachedProvider`], a content-addressed on-disk cache that wraps either.

mod cache;
pub(crate) mod http;
pub(crate) mod mock;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::digest::Digester;
use crate::error::{Error, Result};

pub use cache::{cached_complete, CacheEntry, CachedProvider};
pub use http::{HttpProvider, HttpProviderConfig, RetryPolicy};
pub use mock::{mock_provider, MockProvider};

pub const API_KEY_ENV: &str = "SKI_API_KEY";
pub const API_BASE_ENV: &str = "SKI_API_BASE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    /// May be empty, in which case no system message is sent.
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Top-k sampling cutoff, only for providers that accept it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<u32>,
}

impl CompletionRequest {
    pub fn new(model: impl Into<String>, user_prompt: impl Into<String>) -> Self {
        CompletionRequest {
            model: model.into(),
            system_prompt: String::new(),
            user_prompt: user_prompt.into(),
            temperature: 0.0,
            max_tokens: 1024,
            top_k: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.user_prompt.trim().is_empty() {
            return Err(Error::InvalidArgument("user prompt is empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(Error::InvalidArgument(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens < 1 {
            return Err(Error::InvalidArgument("max_tokens must be >= 1".into()));
        }
        Ok(())
    }

    pub fn cache_key(&self) -> CacheKey {
        CacheKey::of(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    /// Provider output, unmodified.
    pub text: String,
    pub provider_id: String,
    pub cached: bool,
}

/// Content hash of every request field that can change the output.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey {
    pub digest: String,
}

impl CacheKey {
    pub fn of(request: &CompletionRequest) -> Self {
        let mut d = Digester::new("completion");
        d.field(&request.model)
            .field(&request.system_prompt)
            .field(&request.user_prompt)
            .bytes(&request.temperature.to_bits().to_le_bytes())
            .bytes(&request.max_tokens.to_le_bytes());
        // Absent top_k hashes exactly like the five base fields alone.
        if let Some(k) = request.top_k {
            d.field("top_k").bytes(&k.to_le_bytes());
        }
        CacheKey { digest: d.finish() }
    }
}

pub trait Provider: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse>;
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        (**self).complete(request)
    }
}

impl<P: Provider + ?Sized> Provider for Arc<P> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        (**self).complete(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req() -> CompletionRequest {
        CompletionRequest {
            model: "m".into(),
            system_prompt: "s".into(),
            user_prompt: "u".into(),
            temperature: 0.0,
            max_tokens: 16,
            top_k: None,
        }
    }

    #[test]
    fn identical_requests_share_a_digest() {
        assert_eq!(req().cache_key(), req().cache_key());
        assert_eq!(req().cache_key().digest.len(), 64);
    }

    #[test]
    fn every_field_changes_the_digest() {
        let base = req().cache_key();
        let variants = [
            CompletionRequest { model: "m2".into(), ..req() },
            CompletionRequest { system_prompt: "s2".into(), ..req() },
            CompletionRequest { user_prompt: "u2".into(), ..req() },
            CompletionRequest { temperature: 0.5, ..req() },
            CompletionRequest { max_tokens: 17, ..req() },
            CompletionRequest { top_k: Some(50), ..req() },
        ];
        for v in variants {
            assert_ne!(v.cache_key(), base, "{v:?}");
        }
    }

    #[test]
    fn validation() {
        assert!(req().validate().is_ok());
        assert!(CompletionRequest { user_prompt: " ".into(), ..req() }.validate().is_err());
        assert!(CompletionRequest { temperature: 2.5, ..req() }.validate().is_err());
        assert!(CompletionRequest { max_tokens: 0, ..req() }.validate().is_err());
    }
}
