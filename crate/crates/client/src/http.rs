//! Chat-completion HTTP backend: JSON POST with bearer auth, bounded
//! retries with exponential backoff on transport errors and retryable
//! statuses.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::{BackendError, CompletionBackend, CompletionRequest, API_KEY_ENV};

/// Retry schedule: `attempts` tries total, sleeping
/// `base * factor^(attempt-1)` between them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base: Duration::from_secs(1),
            factor: 2.0,
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        self.base.mul_f64(self.factor.powi(attempt as i32))
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Full chat-completion URL, e.g. `https://host/v1/chat/completions`.
    pub url: String,
    pub model: String,
    pub retry: RetryPolicy,
    pub timeout: Duration,
}

impl HttpConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        HttpConfig {
            url: url.into(),
            model: model.into(),
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(120),
        }
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    n: u32,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: String,
}

fn retryable_status(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

impl HttpBackend {
    /// Build a backend; the bearer token is read from `EVALFORGE_API_KEY`.
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let api_key = std::env::var(API_KEY_ENV).ok();
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(HttpBackend {
            config,
            api_key,
            client,
        })
    }

    fn post_once(
        &self,
        prompt: &str,
        temperature: f64,
        n: u32,
    ) -> Result<Vec<String>, BackendError> {
        let body = ChatRequest {
            model: &self.config.model,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature,
            n,
        };
        let mut request = self.client.post(&self.config.url).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .text()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if status != 200 {
            return Err(BackendError::Status { status, body: text });
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| BackendError::BadResponse(format!("{e}; body: {text}")))?;
        if parsed.choices.is_empty() {
            return Err(BackendError::BadResponse("no choices in response".into()));
        }
        Ok(parsed
            .choices
            .into_iter()
            .map(|c| c.message.content)
            .collect())
    }

    /// One request asking for `n` sampled completions at once.
    pub fn complete_many(
        &self,
        prompt: &str,
        temperature: f64,
        n: u32,
    ) -> Result<Vec<String>, BackendError> {
        let retry = self.config.retry;
        let mut last_error = None;
        for attempt in 0..retry.attempts {
            if attempt > 0 {
                std::thread::sleep(retry.backoff(attempt - 1));
            }
            match self.post_once(prompt, temperature, n) {
                Ok(contents) => return Ok(contents),
                Err(e @ BackendError::Status { status, .. }) if retryable_status(status) => {
                    last_error = Some(e);
                }
                Err(e @ BackendError::Transport(_)) => last_error = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last_error.unwrap_or_else(|| BackendError::Transport("no attempts made".into())))
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        let mut contents = self.complete_many(request.prompt, request.temperature, 1)?;
        Ok(contents.remove(0))
    }
}
