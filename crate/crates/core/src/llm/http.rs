use std::fmt;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::retry::{AttemptRecord, Failure, RetryError, RetryPolicy, Sleeper, ThreadSleeper};
use super::{Completion, CompletionRequest, GenerationParams, LlmClient, LlmError, TokenUsage};

static REQUESTS_SENT: AtomicU64 = AtomicU64::new(0);

/// Requests put on the wire by [`UreqTransport`] since process start.
pub fn requests_sent() -> u64 {
    REQUESTS_SENT.load(Ordering::SeqCst)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    Io(String),
}

/// One HTTP POST of a JSON body.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &str) -> Result<HttpResponse, TransportError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        Self { agent }
    }
}

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &str) -> Result<HttpResponse, TransportError> {
        REQUESTS_SENT.fetch_add(1, Ordering::SeqCst);
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(k) = bearer {
            req = req.header("Authorization", format!("Bearer {k}"));
        }
        let map_err = |e: ureq::Error| match e {
            ureq::Error::Timeout(_) => TransportError::Timeout,
            other => TransportError::Io(other.to_string()),
        };
        let mut resp = req.send(body).map_err(map_err)?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(map_err)?;
        Ok(HttpResponse { status, body })
    }
}

/// API credential. Never printed.
#[derive(Clone, PartialEq, Eq)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        Self(key.into())
    }

    pub fn from_env(var: &str) -> Option<Self> {
        std::env::var(var).ok().filter(|v| !v.is_empty()).map(Self)
    }

    fn expose(&self) -> &str {
        &self.0
    }

    fn scrub(&self, s: &str) -> String {
        if self.0.is_empty() {
            s.to_string()
        } else {
            s.replace(&self.0, "***")
        }
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(***)")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    /// Up to and including the API version, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    pub timeout_s: f64,
    pub max_in_flight: usize,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    /// When set, every request/response pair is written here as
    /// `<prompt sha256>.json`.
    pub archive_dir: Option<PathBuf>,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            timeout_s: 60.0,
            max_in_flight: 4,
            api_key_env: "OPENAI_API_KEY".into(),
            archive_dir: None,
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
}

/// The chat-completions request body: one user message carrying the prompt.
pub fn chat_request_body(prompt: &str, params: &GenerationParams) -> String {
    serde_json::to_string(&ChatRequest {
        model: &params.model_id,
        messages: [ChatMessage { role: "user", content: prompt }],
        temperature: params.temperature,
        top_p: params.top_p,
        max_tokens: params.max_output_tokens,
    })
    .expect("request serializes")
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    usage: Option<TokenUsageWire>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct TokenUsageWire {
    prompt_tokens: u64,
    completion_tokens: u64,
}

/// Extracts the first choice's text and the reported usage (estimated when
/// the endpoint omits it).
pub fn parse_chat_response(prompt: &str, body: &str) -> Result<(String, TokenUsage), LlmError> {
    let resp: ChatResponse = serde_json::from_str(body).map_err(|e| LlmError::Decode(e.to_string()))?;
    let text = resp
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| LlmError::Decode("response has no choices".into()))?;
    let usage = match resp.usage {
        Some(u) => TokenUsage { prompt_tokens: u.prompt_tokens, completion_tokens: u.completion_tokens },
        None => TokenUsage::estimate(prompt, &text),
    };
    Ok((text, usage))
}

/// Counting semaphore capping concurrent requests.
struct InFlightLimiter {
    max: usize,
    current: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a InFlightLimiter);

impl InFlightLimiter {
    fn new(max: usize) -> Self {
        Self { max: max.max(1), current: Mutex::new(0), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.current.lock().unwrap();
        while *n >= self.max {
            n = self.cv.wait(n).unwrap();
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.current.lock().unwrap() -= 1;
        self.0.cv.notify_one();
    }
}

/// A JSON POST endpoint with the retry policy applied. Shared by the chat
/// client and the embedding provider.
pub(crate) struct RetryingEndpoint {
    pub url: String,
    pub api_key: Option<ApiKey>,
    pub retry: RetryPolicy,
    pub transport: Arc<dyn Transport>,
    pub sleeper: Arc<dyn Sleeper>,
}

impl RetryingEndpoint {
    fn scrub(&self, s: &str) -> String {
        match &self.api_key {
            Some(k) => k.scrub(s),
            None => s.to_string(),
        }
    }

    /// POSTs `body` until a 2xx arrives. 429, 5xx, timeouts and connection
    /// failures are retried; other statuses fail immediately.
    pub fn post(&self, body: &str, log: &mut Vec<AttemptRecord>) -> Result<(String, u32), LlmError> {
        let bearer = self.api_key.as_ref().map(ApiKey::expose);
        let outcome =
            self.retry.execute(self.sleeper.as_ref(), log, |_| match self.transport.post_json(&self.url, bearer, body) {
                Ok(r) if (200..300).contains(&r.status) => Ok(r.body),
                Ok(r) if r.status == 429 || r.status >= 500 => {
                    Err(Failure::Retryable(LlmError::Status { status: r.status, body: self.scrub(&r.body) }))
                }
                Ok(r) => Err(Failure::Fatal(LlmError::Status { status: r.status, body: self.scrub(&r.body) })),
                Err(e) => Err(Failure::Retryable(LlmError::Transport(self.scrub(&e.to_string())))),
            });
        match outcome {
            Ok(v) => Ok(v),
            Err(RetryError::Fatal { error, .. }) => Err(error),
            Err(RetryError::Exhausted { attempts, last }) => Err(LlmError::Exhausted { attempts, last: last.to_string() }),
        }
    }
}

/// OpenAI-compatible chat-completions client.
pub struct OpenAiClient {
    endpoint: RetryingEndpoint,
    limiter: InFlightLimiter,
    archive_dir: Option<PathBuf>,
    attempt_log: Mutex<Vec<AttemptRecord>>,
}

impl fmt::Debug for OpenAiClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OpenAiClient")
            .field("url", &self.endpoint.url)
            .field("api_key", &self.endpoint.api_key)
            .field("max_in_flight", &self.limiter.max)
            .finish()
    }
}

impl OpenAiClient {
    pub fn new(config: &EndpointConfig, api_key: Option<ApiKey>) -> Self {
        let timeout = Duration::try_from_secs_f64(config.timeout_s).unwrap_or(Duration::from_secs(60));
        Self {
            endpoint: RetryingEndpoint {
                url: format!("{}/chat/completions", config.base_url.trim_end_matches('/')),
                api_key,
                retry: RetryPolicy::default(),
                transport: Arc::new(UreqTransport::new(timeout)),
                sleeper: Arc::new(ThreadSleeper),
            },
            limiter: InFlightLimiter::new(config.max_in_flight),
            archive_dir: config.archive_dir.clone(),
            attempt_log: Mutex::new(Vec::new()),
        }
    }

    /// Reads the key from `config.api_key_env`; a missing key is an error.
    pub fn from_env(config: &EndpointConfig) -> Result<Self, LlmError> {
        let key = ApiKey::from_env(&config.api_key_env)
            .ok_or_else(|| LlmError::Config(format!("environment variable {} is not set", config.api_key_env)))?;
        Ok(Self::new(config, Some(key)))
    }

    pub fn with_transport(mut self, transport: Arc<dyn Transport>) -> Self {
        self.endpoint.transport = transport;
        self
    }

    pub fn with_sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.endpoint.sleeper = sleeper;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.endpoint.retry = retry;
        self
    }

    pub fn url(&self) -> &str {
        &self.endpoint.url
    }

    /// Every attempt made so far, across all requests.
    pub fn attempt_log(&self) -> Vec<AttemptRecord> {
        self.attempt_log.lock().unwrap().clone()
    }

    fn archive(&self, sha: &str, request: &str, response: &str) {
        let Some(dir) = &self.archive_dir else { return };
        let doc = serde_json::json!({
            "request": serde_json::from_str::<serde_json::Value>(request).unwrap_or_default(),
            "response": serde_json::from_str::<serde_json::Value>(response)
                .unwrap_or_else(|_| serde_json::Value::String(response.to_string())),
        });
        let path = dir.join(format!("{sha}.json"));
        let write = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(&path, doc.to_string()));
        if let Err(e) = write {
            log::warn!("cannot archive {}: {e}", path.display());
        }
    }
}

impl LlmClient for OpenAiClient {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, LlmError> {
        request.params.validate()?;
        let body = chat_request_body(&request.prompt.text, request.params);
        let mut log = Vec::new();
        let result = {
            let _permit = self.limiter.acquire();
            self.endpoint.post(&body, &mut log)
        };
        self.attempt_log.lock().unwrap().extend(log);
        let (resp, attempts) = result?;
        self.archive(&request.prompt.sha256, &body, &resp);
        let (text, usage) = parse_chat_response(&request.prompt.text, &resp)?;
        Ok(Completion { text, usage, attempts })
    }

    fn is_networked(&self) -> bool {
        true
    }
}
