//! HTTP clients for a chat-completions policy service and a retrieval service.

use std::thread;
use std::time::Duration;

use ragtree_core::mdp::Document;
use ragtree_core::policy::{BackendError, Policy, PolicyRequest, PolicyResponse, Usage};
use ragtree_core::retrieval::{RetrievalRequest, Retriever};
use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::json;

/// Exponential backoff for transient failures (transport errors, 5xx, 429).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Attempts after the first one.
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 3, base_delay_ms: 500, max_delay_ms: 30_000 }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        let ms = self.base_delay_ms.saturating_mul(1u64 << attempt.min(20));
        Duration::from_millis(ms.min(self.max_delay_ms))
    }
}

enum Failure {
    Transient(String),
    Fatal(BackendError),
}

fn classify(result: reqwest::Result<Response>) -> Result<Response, Failure> {
    let resp = result.map_err(|e| Failure::Transient(e.to_string()))?;
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let body = resp.text().unwrap_or_default();
    let msg = format!("{status}: {}", body.chars().take(200).collect::<String>());
    if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
        Err(Failure::Transient(msg))
    } else {
        Err(Failure::Fatal(BackendError::Configuration(msg)))
    }
}

fn post_json<T: for<'de> Deserialize<'de>>(
    client: &Client,
    url: &str,
    bearer: Option<&str>,
    body: &serde_json::Value,
    retry: RetryPolicy,
) -> Result<T, BackendError> {
    let mut attempt = 0;
    loop {
        let mut req = client.post(url).json(body);
        if let Some(token) = bearer {
            req = req.bearer_auth(token);
        }
        match classify(req.send()) {
            Ok(resp) => return resp.json::<T>().map_err(|e| BackendError::Protocol(e.to_string())),
            Err(Failure::Fatal(e)) => return Err(e),
            Err(Failure::Transient(msg)) => {
                if attempt >= retry.max_retries {
                    return Err(BackendError::Unavailable(format!("{url}: {msg} after {} attempts", attempt + 1)));
                }
                tracing::debug!(url, attempt, %msg, "retrying");
                thread::sleep(retry.delay(attempt));
                attempt += 1;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpPolicyConfig {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token, if the service wants one.
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for HttpPolicyConfig {
    fn default() -> Self {
        HttpPolicyConfig {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: "default".into(),
            api_key_env: None,
            timeout_secs: 120,
            retry: RetryPolicy::default(),
        }
    }
}

pub struct HttpPolicy {
    client: Client,
    url: String,
    model: String,
    token: Option<String>,
    retry: RetryPolicy,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl HttpPolicy {
    pub fn new(config: &HttpPolicyConfig) -> Result<Self, BackendError> {
        let token = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::Configuration(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let client = Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Configuration(e.to_string()))?;
        Ok(HttpPolicy {
            client,
            url: format!("{}/chat/completions", config.base_url.trim_end_matches('/')),
            model: config.model.clone(),
            token,
            retry: config.retry,
        })
    }
}

/// Chat-completions services drop the matched stop string; the parsers need
/// it back. The stop whose opening tag is the last one left unclosed wins.
pub fn restore_stop(text: &str, stop: &[String]) -> String {
    if stop.iter().any(|s| text.trim_end().ends_with(s.as_str())) {
        return text.to_string();
    }
    let open = stop
        .iter()
        .filter_map(|s| {
            let tag = s.strip_prefix("</")?.strip_suffix('>')?;
            let at = text.rfind(&format!("<{tag}>"))?;
            let closed = text.rfind(s.as_str()).is_some_and(|c| c > at);
            (!closed).then_some((at, s))
        })
        .max_by_key(|(at, _)| *at);
    match open {
        Some((_, s)) => format!("{text}{s}"),
        None => text.to_string(),
    }
}

impl Policy for HttpPolicy {
    fn complete(&self, request: &PolicyRequest) -> Result<PolicyResponse, BackendError> {
        let mut body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": request.rendered_prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        if let Some(seed) = request.seed {
            // Many servers reject seeds above i64::MAX.
            body["seed"] = json!(seed & i64::MAX as u64);
        }
        if !request.stop.is_empty() {
            body["stop"] = json!(request.stop);
        }
        let resp: ChatResponse = post_json(&self.client, &self.url, self.token.as_deref(), &body, self.retry)?;
        let text = resp
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Protocol("response has no message content".into()))?;
        let usage = resp
            .usage
            .map(|u| Usage { prompt_tokens: u.prompt_tokens, completion_tokens: u.completion_tokens })
            .unwrap_or_default();
        Ok(PolicyResponse { raw_text: restore_stop(&text, &request.stop), usage })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpRetrieverConfig {
    /// Base URL; `/retrieve` is appended.
    pub base_url: String,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for HttpRetrieverConfig {
    fn default() -> Self {
        HttpRetrieverConfig { base_url: "http://127.0.0.1:8001".into(), timeout_secs: 60, retry: RetryPolicy::default() }
    }
}

pub struct HttpRetriever {
    client: Client,
    url: String,
    retry: RetryPolicy,
}

#[derive(Deserialize)]
struct RetrieveResponse {
    docs: Vec<Document>,
}

impl HttpRetriever {
    pub fn new(config: &HttpRetrieverConfig) -> Result<Self, BackendError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Configuration(e.to_string()))?;
        Ok(HttpRetriever {
            client,
            url: format!("{}/retrieve", config.base_url.trim_end_matches('/')),
            retry: config.retry,
        })
    }
}

impl Retriever for HttpRetriever {
    fn retrieve(&self, request: &RetrievalRequest) -> Result<Vec<Document>, BackendError> {
        let body = json!({"query": request.query, "top_k": request.top_k});
        let resp: RetrieveResponse = post_json(&self.client, &self.url, None, &body, self.retry)?;
        let mut docs = resp.docs;
        // Keep the service order among equal scores.
        docs.sort_by(|a, b| b.score.total_cmp(&a.score));
        docs.truncate(request.top_k);
        Ok(docs)
    }
}
