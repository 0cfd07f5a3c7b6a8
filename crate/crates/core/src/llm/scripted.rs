use std::collections::VecDeque;
use std::sync::Mutex;

use super::{Completion, CompletionRequest, LlmClient, LlmError, TokenUsage};
use crate::promptkit::ComposedPrompt;

/// Answers from a fixed queue of replies, in order, and records every prompt
/// it was sent. Useful for replaying archived replies and for fault
/// injection.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    replies: Mutex<VecDeque<Result<String, LlmError>>>,
    seen: Mutex<Vec<ComposedPrompt>>,
}

impl ScriptedBackend {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::with_results(replies.into_iter().map(|r| Ok(r.into())))
    }

    pub fn with_results(replies: impl IntoIterator<Item = Result<String, LlmError>>) -> Self {
        Self { replies: Mutex::new(replies.into_iter().collect()), seen: Mutex::default() }
    }

    pub fn push(&self, reply: impl Into<String>) {
        self.replies.lock().expect("poisoned").push_back(Ok(reply.into()));
    }

    pub fn remaining(&self) -> usize {
        self.replies.lock().expect("poisoned").len()
    }

    pub fn prompts(&self) -> Vec<ComposedPrompt> {
        self.seen.lock().expect("poisoned").clone()
    }
}

impl LlmClient for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, LlmError> {
        self.seen.lock().expect("poisoned").push(request.prompt.clone());
        let next = self.replies.lock().expect("poisoned").pop_front();
        let text = next.unwrap_or_else(|| Err(LlmError::Unsupported("script exhausted".into())))?;
        let usage = TokenUsage::estimate(&request.prompt.text, &text);
        Ok(Completion { text, usage, attempts: 1 })
    }
}

type ReplyFn = dyn Fn(&CompletionRequest<'_>) -> Result<String, LlmError> + Send + Sync;

/// Answers with a closure over the request.
pub struct FnBackend {
    f: Box<ReplyFn>,
}

impl FnBackend {
    pub fn new(f: impl Fn(&CompletionRequest<'_>) -> Result<String, LlmError> + Send + Sync + 'static) -> Self {
        Self { f: Box::new(f) }
    }
}

impl std::fmt::Debug for FnBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("FnBackend")
    }
}

impl LlmClient for FnBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, LlmError> {
        let text = (self.f)(request)?;
        let usage = TokenUsage::estimate(&request.prompt.text, &text);
        Ok(Completion { text, usage, attempts: 1 })
    }
}
