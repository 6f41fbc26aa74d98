use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::{CompletionRequest, CompletionResponse, Provider, API_BASE_ENV, API_KEY_ENV};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 4,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (0-based): `base * 2^attempt`, capped.
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base_delay
            .checked_mul(factor)
            .unwrap_or(self.max_delay)
            .min(self.max_delay)
    }
}

#[derive(Debug, Clone)]
pub struct HttpProviderConfig {
    /// Endpoint root, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    pub api_key: String,
    pub retry: RetryPolicy,
    pub timeout: Duration,
    pub max_in_flight: usize,
}

impl HttpProviderConfig {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        HttpProviderConfig {
            base_url: base_url.into(),
            api_key: api_key.into(),
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(120),
            max_in_flight: 4,
        }
    }

    /// Reads `SKI_API_BASE` and `SKI_API_KEY`.
    pub fn from_env() -> Result<Self> {
        let base = std::env::var(API_BASE_ENV)
            .map_err(|_| Error::Config(format!("{API_BASE_ENV} is not set")))?;
        let key = std::env::var(API_KEY_ENV)
            .map_err(|_| Error::Config(format!("{API_KEY_ENV} is not set")))?;
        Ok(Self::new(base, key))
    }
}

/// Counting semaphore bounding concurrent requests.
pub(crate) struct InFlight {
    free: Mutex<usize>,
    cond: Condvar,
}

pub(crate) struct Permit<'a>(&'a InFlight);

impl InFlight {
    pub fn new(limit: usize) -> Self {
        InFlight {
            free: Mutex::new(limit.max(1)),
            cond: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cond.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut free = self.0.free.lock().unwrap_or_else(|e| e.into_inner());
        *free += 1;
        self.0.cond.notify_one();
    }
}

/// Minimal blocking JSON-over-HTTP client with bearer auth, retry and an
/// in-flight limit. Shared by the completion provider and the HTTP embedder.
pub(crate) struct JsonClient {
    agent: ureq::Agent,
    base_url: String,
    api_key: String,
    retry: RetryPolicy,
    in_flight: InFlight,
}

impl JsonClient {
    pub fn new(config: &HttpProviderConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        JsonClient {
            agent,
            base_url: config.base_url.trim_end_matches('/').to_string(),
            api_key: config.api_key.clone(),
            retry: config.retry.clone(),
            in_flight: InFlight::new(config.max_in_flight),
        }
    }

    pub fn post(&self, path: &str, body: &Value) -> Result<Value> {
        let _permit = self.in_flight.acquire();
        let url = format!("{}/{}", self.base_url, path.trim_start_matches('/'));
        let payload = body.to_string();
        let mut attempt = 0u32;
        loop {
            let outcome = self
                .agent
                .post(&url)
                .header("Authorization", &format!("Bearer {}", self.api_key))
                .header("Content-Type", "application/json")
                .send(payload.as_str());
            let retryable = match outcome {
                Ok(response) => {
                    let status = response.status().as_u16();
                    let text = response
                        .into_body()
                        .read_to_string()
                        .map_err(|e| Error::Provider(format!("reading response body: {e}")));
                    match status {
                        200..=299 => {
                            let text = text?;
                            return serde_json::from_str(&text).map_err(|e| {
                                Error::MalformedPayload(format!("{e}: {}", truncate(&text)))
                            });
                        }
                        401 | 403 => {
                            return Err(Error::Auth(format!(
                                "HTTP {status}: {}",
                                truncate(&text.unwrap_or_default())
                            )))
                        }
                        429 => Error::RateLimited {
                            attempts: attempt + 1,
                        },
                        500..=599 => Error::Provider(format!("HTTP {status}")),
                        _ => {
                            return Err(Error::Provider(format!(
                                "HTTP {status}: {}",
                                truncate(&text.unwrap_or_default())
                            )))
                        }
                    }
                }
                Err(e) => Error::Provider(format!("transport: {e}")),
            };
            if attempt >= self.retry.max_retries {
                return Err(retryable);
            }
            let delay = self.retry.delay(attempt);
            log::warn!("{url}: {retryable}; retrying in {delay:?}");
            std::thread::sleep(delay);
            attempt += 1;
        }
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}

/// Chat-completion provider: one system message (if non-empty) plus one
/// user message per request.
pub struct HttpProvider {
    id: String,
    client: JsonClient,
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig) -> Self {
        HttpProvider {
            id: format!("http:{}", config.base_url.trim_end_matches('/')),
            client: JsonClient::new(&config),
        }
    }
}

pub(crate) fn chat_body(request: &CompletionRequest) -> Value {
    let mut messages = Vec::new();
    if !request.system_prompt.is_empty() {
        messages.push(json!({"role": "system", "content": request.system_prompt}));
    }
    messages.push(json!({"role": "user", "content": request.user_prompt}));
    let mut body = json!({
        "model": request.model,
        "messages": messages,
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    });
    if let Some(k) = request.top_k {
        body["top_k"] = json!(k);
    }
    body
}

impl Provider for HttpProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        request.validate()?;
        let value = self.client.post("chat/completions", &chat_body(request))?;
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| {
                Error::MalformedPayload("missing choices[0].message.content".into())
            })?;
        Ok(CompletionResponse {
            text: text.to_string(),
            provider_id: self.id.clone(),
            cached: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            max_retries: 10,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(500),
        };
        assert_eq!(p.delay(0), Duration::from_millis(100));
        assert_eq!(p.delay(1), Duration::from_millis(200));
        assert_eq!(p.delay(2), Duration::from_millis(400));
        assert_eq!(p.delay(3), Duration::from_millis(500));
        assert_eq!(p.delay(40), Duration::from_millis(500));
    }

    #[test]
    fn body_omits_empty_system_prompt() {
        let req = CompletionRequest::new("gpt", "hi");
        let body = chat_body(&req);
        assert_eq!(body["messages"].as_array().unwrap().len(), 1);
        assert!(body.get("top_k").is_none());
    }
}
