//! LLM transport: an OpenAI-compatible chat-completions client with retry,
//! a deterministic offline mock, and token cost accounting.

mod cost;
mod http;
mod mock;
mod retry;
mod scripted;

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::promptkit::ComposedPrompt;

pub use cost::{cost_of, CostError, CostLedger, ModelPrice, PriceTable};
pub(crate) use http::RetryingEndpoint;
pub use http::{
    chat_request_body, parse_chat_response, requests_sent, ApiKey, EndpointConfig, HttpResponse, OpenAiClient, Transport,
    TransportError, UreqTransport,
};
pub use mock::{MockBackend, MockVocabulary};
pub use retry::{AttemptRecord, Failure, RecordingSleeper, RetryError, RetryPolicy, Sleeper, ThreadSleeper};
pub use scripted::{FnBackend, ScriptedBackend};

/// Sampling parameters sent with every request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationParams {
    pub model_id: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_output_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self { model_id: "gpt-3.5-turbo-0301".into(), temperature: 1.0, top_p: 1.0, max_output_tokens: 512 }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidParams(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(LlmError::InvalidParams(format!("top_p {} outside (0, 1]", self.top_p)));
        }
        if self.max_output_tokens == 0 {
            return Err(LlmError::InvalidParams("max_output_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    /// `ceil(chars / 4)` per side; the mock's approximation of a tokenizer.
    pub fn estimate(prompt: &str, completion: &str) -> Self {
        let est = |s: &str| (s.chars().count() as u64).div_ceil(4);
        Self { prompt_tokens: est(prompt), completion_tokens: est(completion) }
    }
}

impl Add for TokenUsage {
    type Output = TokenUsage;
    fn add(self, rhs: Self) -> Self {
        Self {
            prompt_tokens: self.prompt_tokens + rhs.prompt_tokens,
            completion_tokens: self.completion_tokens + rhs.completion_tokens,
        }
    }
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for TokenUsage {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

pub struct CompletionRequest<'a> {
    pub prompt: &'a ComposedPrompt,
    pub params: &'a GenerationParams,
    /// Caller-chosen stream key. Backends with their own randomness (the
    /// mock) derive it from this; network backends ignore it.
    pub stream: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub usage: TokenUsage,
    /// Transport attempts spent, including the successful one.
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("gave up after {attempts} attempt(s): {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("{0}")]
    Transport(String),
    #[error("malformed endpoint response: {0}")]
    Decode(String),
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("backend cannot answer this prompt: {0}")]
    Unsupported(String),
    #[error("client configuration: {0}")]
    Config(String),
}

/// Anything that can answer a composed prompt.
pub trait LlmClient: Send + Sync {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, LlmError>;

    /// Whether calls leave the process.
    fn is_networked(&self) -> bool {
        false
    }
}

impl<T: LlmClient + ?Sized> LlmClient for &T {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, LlmError> {
        (**self).complete(request)
    }
    fn is_networked(&self) -> bool {
        (**self).is_networked()
    }
}

impl<T: LlmClient + ?Sized> LlmClient for Box<T> {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, LlmError> {
        (**self).complete(request)
    }
    fn is_networked(&self) -> bool {
        (**self).is_networked()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_params_are_unit_temperature_and_top_p() {
        let p = GenerationParams::default();
        assert_eq!(p.temperature, 1.0);
        assert_eq!(p.top_p, 1.0);
        p.validate().unwrap();
    }

    #[test]
    fn param_bounds() {
        let mut p = GenerationParams { temperature: 2.5, ..Default::default() };
        assert!(p.validate().is_err());
        p.temperature = 0.0;
        p.top_p = 0.0;
        assert!(p.validate().is_err());
        p.top_p = 1.0;
        p.validate().unwrap();
    }

    #[test]
    fn usage_estimate_rounds_up() {
        let u = TokenUsage::estimate("abcde", "");
        assert_eq!(u, TokenUsage { prompt_tokens: 2, completion_tokens: 0 });
    }
}
