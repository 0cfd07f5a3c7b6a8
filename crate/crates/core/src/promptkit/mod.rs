//! Prompt composition from slot templates.
//!
//! Templates are plain text with `[slot]` markers. The built-in pack is
//! compiled in from `templates/`; a directory with the same file names can
//! override any of them (see [`TemplatePack::load_dir`]).

mod compose;
mod template;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::PromptMode;
use crate::task::TaskFamily;

pub use compose::{compose, render_demonstrations, style_elicitation_prompt, ComposeInput, Composition, PairPlan};
pub use template::{PromptTemplate, TemplateKey, TemplatePack};

/// Every slot name a template may use.
pub const SLOTS: [&str; 13] = [
    "domain",
    "content",
    "topic",
    "topic0",
    "topic1",
    "style",
    "class_name",
    "label_desc",
    "entity0",
    "entity1",
    "first_sentence",
    "task",
    "demonstrations",
];

/// Binding key (not a slot) carrying the task's attribute classes, joined by
/// `|`, so backends can answer attribute prompts in the task's vocabulary.
pub const ATTRIBUTE_CLASSES_KEY: &str = "attribute_classes";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Single,
    PairFirst,
    PairSecond,
}

impl Step {
    pub fn as_str(self) -> &'static str {
        match self {
            Step::Single => "single",
            Step::PairFirst => "pair_first",
            Step::PairSecond => "pair_second",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Step::Single, Step::PairFirst, Step::PairSecond].into_iter().find(|x| x.as_str() == s)
    }
}

/// What a prompt is for. Backends that synthesize replies (the mock) key on
/// this; network backends only see the text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PromptPurpose {
    Generate { family: TaskFamily, step: Step, mode: PromptMode },
    ElicitTopics { entity_type: String, count: usize },
    ElicitStyles,
    Freeform,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComposedPrompt {
    pub text: String,
    pub purpose: PromptPurpose,
    pub bindings: BTreeMap<String, String>,
    /// Lowercase hex SHA-256 of `text`.
    pub sha256: String,
    /// Byte length of the instantiated template; anything after it is the
    /// appended output-format instruction.
    body_len: usize,
}

impl ComposedPrompt {
    pub fn new(text: String, body_len: usize, purpose: PromptPurpose, bindings: BTreeMap<String, String>) -> Self {
        let sha256 = sha256_hex(&text);
        Self { text, purpose, bindings, sha256, body_len }
    }

    pub fn freeform(text: impl Into<String>) -> Self {
        let text = text.into();
        let n = text.len();
        Self::new(text, n, PromptPurpose::Freeform, BTreeMap::new())
    }

    /// The instantiated template without any appended format instruction.
    pub fn body(&self) -> &str {
        &self.text[..self.body_len]
    }

    pub fn binding(&self, slot: &str) -> Option<&str> {
        self.bindings.get(slot).map(String::as_str)
    }
}

pub fn sha256_hex(s: &str) -> String {
    hex::encode(Sha256::digest(s.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("slot [{slot}] has no binding for {family} {mode:?} {step:?}")]
    Unresolved { slot: String, family: String, mode: PromptMode, step: Step },
    #[error("template {0}: {1}")]
    InvalidTemplate(String, String),
    #[error("no template for {0}")]
    MissingTemplate(String),
    #[error("topic does not fit the task: {0}")]
    TopicMismatch(String),
    #[error("demonstrations required but none given")]
    NoDemonstrations,
    #[error("cannot read template {path}: {message}")]
    Io { path: String, message: String },
}

/// Slot names referenced by a template body, in order of first appearance.
pub fn slots_in(body: &str) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    for name in markers(body) {
        if !out.contains(&name) {
            out.push(name);
        }
    }
    out
}

/// Known-slot markers in `s`, in order, with repeats.
fn markers(s: &str) -> impl Iterator<Item = &str> {
    s.match_indices('[').filter_map(move |(i, _)| {
        let rest = &s[i + 1..];
        let end = rest.find(']')?;
        let name = &rest[..end];
        SLOTS.contains(&name).then_some(name)
    })
}

/// Whether `s` contains any `[slot]` marker for a known slot.
pub fn has_unresolved_slot(s: &str) -> bool {
    markers(s).next().is_some()
}

/// Bound values are inserted verbatim except that a known slot marker inside
/// a value is rewritten with parentheses, so the composed text never carries
/// a marker.
fn defang(value: &str) -> String {
    if !has_unresolved_slot(value) {
        return value.to_string();
    }
    let mut v = value.to_string();
    for s in SLOTS {
        v = v.replace(&format!("[{s}]"), &format!("({s})"));
    }
    v
}

/// Substitutes every known slot marker in one pass. Returns the first slot
/// without a binding as the error.
pub(crate) fn fill(body: &str, bindings: &BTreeMap<String, String>) -> Result<String, String> {
    let mut out = String::with_capacity(body.len() + 64);
    let mut rest = body;
    while let Some(i) = rest.find('[') {
        out.push_str(&rest[..i]);
        let after = &rest[i + 1..];
        match after.find(']') {
            Some(end) if SLOTS.contains(&&after[..end]) => {
                let name = &after[..end];
                let v = bindings.get(name).ok_or_else(|| name.to_string())?;
                out.push_str(&defang(v));
                rest = &after[end + 1..];
            }
            _ => {
                out.push('[');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}
