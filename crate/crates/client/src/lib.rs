//! Annotation backend: renders prompts from the core crate, obtains
//! completions from a chat-completion endpoint or a content-addressed
//! replay cache, and parses them into evaluation records and inspection
//! verdicts. With a primed cache the whole module is deterministic.

mod cache;
mod collect;
mod http;

pub use cache::{cache_key, ReplayCache};
pub use collect::{
    collect_evaluations, inspect_evaluations, CollectFailure, CollectOptions, CollectOutcome,
    InspectOutcome,
};
pub use http::{HttpBackend, HttpConfig, RetryPolicy};

/// Name of the environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "EVALFORGE_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("no cached response for key {key} and live requests are disabled")]
    CacheMiss { key: String },
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed endpoint response: {0}")]
    BadResponse(String),
    #[error("cache I/O error at {path}: {source}")]
    CacheIo {
        path: String,
        source: std::io::Error,
    },
}

/// One completion request: the rendered prompt, the sampling temperature,
/// and a sampling index that keeps repeated samplings of the same prompt
/// distinct (and idempotent across runs).
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest<'a> {
    pub prompt: &'a str,
    pub temperature: f64,
    pub index: u32,
}

/// Anything that can answer completion requests. Implementations must be
/// safe to call from several worker threads at once.
pub trait CompletionBackend: Sync {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError>;
}

/// A backend that serves from the replay cache first and falls back to a
/// live backend when one is configured. Live responses are written back to
/// the cache, so a completed run is replayable.
pub struct CachedBackend<B> {
    cache: ReplayCache,
    live: Option<B>,
}

impl<B: CompletionBackend> CachedBackend<B> {
    pub fn new(cache: ReplayCache, live: Option<B>) -> Self {
        CachedBackend { cache, live }
    }
}

impl<B: CompletionBackend> CompletionBackend for CachedBackend<B> {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        let key = cache_key(request.prompt, request.temperature, request.index);
        if let Some(hit) = self.cache.get(&key)? {
            return Ok(hit);
        }
        match &self.live {
            Some(backend) => {
                let response = backend.complete(request)?;
                self.cache.put(&key, &response)?;
                Ok(response)
            }
            None => Err(BackendError::CacheMiss { key }),
        }
    }
}
