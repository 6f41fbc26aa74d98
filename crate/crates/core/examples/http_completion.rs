//! A cached completion against an OpenAI-compatible endpoint.
//!
//! SKI_API_BASE=https://api.openai.com/v1 SKI_API_KEY=... \
//!     cargo run --example http_completion -- "Where was Vivaldi born?"

use ski::llm::{CachedProvider, CompletionRequest, HttpProvider, HttpProviderConfig, Provider};

fn main() -> ski::Result<()> {
    let prompt = std::env::args().nth(1).unwrap_or_else(|| "Say hello.".into());
    let config = match HttpProviderConfig::from_env() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}; set SKI_API_BASE and SKI_API_KEY to try this example");
            return Ok(());
        }
    };
    let provider = CachedProvider::new(HttpProvider::new(config), ".ski-cache");
    let request = CompletionRequest::new("gpt-3.5-turbo", prompt);
    for _ in 0..2 {
        let r = provider.complete(&request)?;
        println!("[cached={}] {}", r.cached, r.text);
    }
    Ok(())
}
