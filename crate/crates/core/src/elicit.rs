//! Topic and writing-style candidates elicited from an LLM.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::kg::{KgError, KnowledgeGraph, Topic, TopicSource};
use crate::llm::{CompletionRequest, GenerationParams, LlmClient, LlmError, TokenUsage};
use crate::promptkit::{sha256_hex, style_elicitation_prompt, ComposedPrompt, PromptPurpose, TemplatePack};
use crate::task::{FewShotSet, TaskSpec};
use crate::text::normalize;

/// Items requested per topic elicitation call.
pub const TOPICS_PER_CALL: usize = 100;
/// Distinct topics collected per entity type by default.
pub const DEFAULT_TOPIC_TARGET: usize = 300;
pub const MAX_STYLE_CHARS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKind {
    Topics,
    Styles,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CandidateSource {
    #[serde(rename = "LLM")]
    Llm,
    Manual,
    #[serde(rename = "KG")]
    Kg,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub kind: CandidateKind,
    pub source: CandidateSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    /// Archived raw reply the item was parsed from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_reply: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate {
    pub item: String,
    pub normalized_key: String,
    pub provenance: Provenance,
}

/// Ordered candidates, unique under [`normalize`]. The first spelling seen
/// is kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub kind: CandidateKind,
    candidates: Vec<Candidate>,
    keys: HashSet<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ElicitError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("target count must be at least 1")]
    ZeroTarget,
    #[error("style elicitation needs at least one demonstration")]
    NoDemonstrations,
    #[error("no style could be parsed from the reply: {raw:?}")]
    NoStyles { raw: String },
    #[error("invalid style {text:?}: {reason}")]
    InvalidStyle { text: String, reason: String },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ElicitError + '_ {
    move |e| ElicitError::Io { path: path.to_path_buf(), message: e.to_string() }
}

impl CandidateSet {
    pub fn new(kind: CandidateKind) -> Self {
        Self { kind, candidates: Vec::new(), keys: HashSet::new() }
    }

    /// Adds `item` unless an equivalent one is present. Returns whether it
    /// was added.
    pub fn push(&mut self, item: &str, provenance: Provenance) -> bool {
        let item = item.trim();
        let key = normalize(item);
        if key.is_empty() || !self.keys.insert(key.clone()) {
            return false;
        }
        self.candidates.push(Candidate { item: item.to_string(), normalized_key: key, provenance });
        true
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn items(&self) -> Vec<&str> {
        self.candidates.iter().map(|c| c.item.as_str()).collect()
    }

    pub fn contains(&self, item: &str) -> bool {
        self.keys.contains(&normalize(item))
    }

    /// Topics carrying each item's entity type (falling back to
    /// `default_type`).
    pub fn to_topics(&self, default_type: &str) -> Vec<Topic> {
        self.candidates
            .iter()
            .map(|c| {
                let t = c.provenance.entity_type.as_deref().unwrap_or(default_type);
                let source = match c.provenance.source {
                    CandidateSource::Llm => TopicSource::Llm,
                    CandidateSource::Manual | CandidateSource::Kg => TopicSource::Kg,
                };
                Topic::entity(c.item.clone(), t, source)
            })
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for c in &self.candidates {
            out.push_str(&serde_json::to_string(c).expect("candidate serializes"));
            out.push('\n');
        }
        out
    }

    /// Hex SHA-256 of the JSONL form; identifies the set in run manifests.
    pub fn sha256(&self) -> String {
        sha256_hex(&self.to_jsonl())
    }

    pub fn save(&self, path: &Path) -> Result<(), ElicitError> {
        let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
        w.write_all(self.to_jsonl().as_bytes()).map_err(io_err(path))?;
        w.flush().map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, ElicitError> {
        let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
        let mut set: Option<CandidateSet> = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(io_err(path))?;
            if line.trim().is_empty() {
                continue;
            }
            let fmt = |message: String| ElicitError::Format { path: path.to_path_buf(), line: i + 1, message };
            let c: Candidate = serde_json::from_str(&line).map_err(|e| fmt(e.to_string()))?;
            let s = set.get_or_insert_with(|| CandidateSet::new(c.provenance.kind));
            if c.provenance.kind != s.kind {
                return Err(fmt("mixed candidate kinds".into()));
            }
            if c.normalized_key != normalize(&c.item) {
                return Err(fmt(format!("normalized_key does not match item {:?}", c.item)));
            }
            if !s.push(&c.item, c.provenance) {
                return Err(fmt(format!("duplicate item {:?}", c.item)));
            }
        }
        set.ok_or_else(|| ElicitError::Format { path: path.to_path_buf(), line: 0, message: "empty candidate file".into() })
    }
}

/// Strips a leading list marker (`1.`, `1)`, `-`, `*`, `•`). Returns `None`
/// when the line has none.
fn strip_marker(line: &str) -> Option<&str> {
    let t = line.trim_start();
    for b in ['-', '*', '•'] {
        if let Some(rest) = t.strip_prefix(b) {
            if rest.is_empty() || rest.starts_with(char::is_whitespace) {
                return Some(rest.trim());
            }
        }
    }
    let digits = t.find(|c: char| !c.is_ascii_digit()).unwrap_or(t.len());
    if digits == 0 || digits > 4 {
        return None;
    }
    let rest = t[digits..].strip_prefix(['.', ')'])?;
    (rest.is_empty() || rest.starts_with(char::is_whitespace)).then(|| rest.trim())
}

fn is_quote(c: char) -> bool {
    matches!(c, '"' | '\'' | '\u{201c}' | '\u{201d}' | '\u{2018}' | '\u{2019}')
}

/// Repeats marker, quote and trailing punctuation stripping until nothing
/// changes.
fn clean_item(s: &str) -> String {
    let mut cur = s.split_whitespace().collect::<Vec<_>>().join(" ");
    loop {
        let mut next = strip_marker(&cur).unwrap_or(&cur).trim();
        next = next.trim_end_matches(['.', ',', ';', ':']).trim();
        let mut chars = next.chars();
        if let (Some(a), Some(b)) = (chars.next(), chars.next_back()) {
            if is_quote(a) && is_quote(b) {
                next = next[a.len_utf8()..next.len() - b.len_utf8()].trim();
            }
        }
        if next == cur {
            return cur;
        }
        cur = next.to_string();
    }
}

/// Extracts list items from a reply.
///
/// If any line is a numbered or bulleted item, only those lines count and
/// everything else (preamble, closing remarks) is skipped. Otherwise a
/// single line is split on commas, and several lines are taken one item per
/// line, skipping lines that end in a colon.
pub fn parse_item_list(raw: &str) -> Vec<String> {
    let lines: Vec<&str> = raw.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let marked: Vec<&str> = lines.iter().filter_map(|l| strip_marker(l)).collect();
    let pieces: Vec<String> = if !marked.is_empty() {
        marked.into_iter().map(str::to_string).collect()
    } else if lines.len() == 1 {
        lines[0]
            .split(',')
            .map(|p| {
                let p = p.trim();
                p.strip_prefix("and ").unwrap_or(p).to_string()
            })
            .collect()
    } else {
        lines.into_iter().filter(|l| !l.ends_with(':')).map(str::to_string).collect()
    };
    pieces.iter().map(|p| clean_item(p)).filter(|p| !p.is_empty()).collect()
}

/// Renders items as a bulleted list, the inverse of [`parse_item_list`] on
/// its own output.
pub fn render_item_list(items: &[String]) -> String {
    items.iter().map(|i| format!("- {i}")).collect::<Vec<_>>().join("\n")
}

pub fn topic_prompt(entity_type: &str, count: usize) -> ComposedPrompt {
    let text = format!(
        "Suppose you are a clinician and want to collect a set of {entity_type}. \
         Could you list {count} entities about {entity_type}?"
    );
    let n = text.len();
    let purpose = PromptPurpose::ElicitTopics { entity_type: entity_type.to_string(), count };
    ComposedPrompt::new(text, n, purpose, Default::default())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElicitOptions {
    pub per_call: usize,
    pub max_calls: usize,
    /// Raw replies are written here as `<prompt sha256>.<call>.txt`.
    pub archive_dir: Option<PathBuf>,
}

impl Default for ElicitOptions {
    fn default() -> Self {
        Self { per_call: TOPICS_PER_CALL, max_calls: 10, archive_dir: None }
    }
}

#[derive(Debug, Clone)]
pub struct Elicited {
    pub set: CandidateSet,
    pub calls: usize,
    pub usage: TokenUsage,
    /// Distinct items still missing when `max_calls` ran out.
    pub shortfall: usize,
    pub raw_replies: Vec<String>,
}

fn archive(dir: Option<&Path>, prompt: &ComposedPrompt, call: usize, raw: &str) -> Result<Option<String>, ElicitError> {
    let Some(dir) = dir else { return Ok(None) };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(format!("{}.{call}.txt", prompt.sha256));
    std::fs::write(&path, raw).map_err(io_err(&path))?;
    Ok(Some(path.display().to_string()))
}

/// Asks for `per_call` entities of `entity_type` repeatedly until `target`
/// distinct ones are collected or `max_calls` is reached. Call `i` uses
/// stream key `i`.
pub fn elicit_topics(
    client: &dyn LlmClient,
    params: &GenerationParams,
    entity_type: &str,
    target: usize,
    options: &ElicitOptions,
) -> Result<Elicited, ElicitError> {
    if target == 0 {
        return Err(ElicitError::ZeroTarget);
    }
    let prompt = topic_prompt(entity_type, options.per_call);
    let mut set = CandidateSet::new(CandidateKind::Topics);
    let mut out = Elicited { set: set.clone(), calls: 0, usage: TokenUsage::default(), shortfall: 0, raw_replies: vec![] };
    while set.len() < target && out.calls < options.max_calls {
        let call = out.calls;
        let c = client.complete(&CompletionRequest { prompt: &prompt, params, stream: call as u64 })?;
        out.calls += 1;
        out.usage += c.usage;
        let raw_reply = archive(options.archive_dir.as_deref(), &prompt, call, &c.text)?;
        for item in parse_item_list(&c.text) {
            if set.len() == target {
                break;
            }
            set.push(
                &item,
                Provenance {
                    kind: CandidateKind::Topics,
                    source: CandidateSource::Llm,
                    entity_type: Some(entity_type.to_string()),
                    task_id: None,
                    prompt_sha256: Some(prompt.sha256.clone()),
                    model_id: Some(params.model_id.clone()),
                    raw_reply: raw_reply.clone(),
                },
            );
        }
        out.raw_replies.push(c.text);
    }
    out.shortfall = target - set.len();
    if out.shortfall > 0 {
        log::warn!("collected {} of {target} distinct {entity_type} topics after {} calls", set.len(), out.calls);
    }
    out.set = set;
    Ok(out)
}

/// Checks a single style line.
pub fn check_style(text: &str) -> Result<(), String> {
    let t = text.trim();
    if t.is_empty() {
        return Err("empty".into());
    }
    if t.contains('\n') {
        return Err("spans several lines".into());
    }
    let n = t.chars().count();
    if n > MAX_STYLE_CHARS {
        return Err(format!("{n} characters, limit {MAX_STYLE_CHARS}"));
    }
    Ok(())
}

/// Asks for writing styles seeded with the few-shot sentences. Items that
/// fail [`check_style`] are skipped.
pub fn elicit_styles(
    client: &dyn LlmClient,
    params: &GenerationParams,
    pack: &TemplatePack,
    task: &TaskSpec,
    demos: &FewShotSet,
    archive_dir: Option<&Path>,
) -> Result<Elicited, ElicitError> {
    if demos.examples.is_empty() {
        return Err(ElicitError::NoDemonstrations);
    }
    let prompt = style_elicitation_prompt(pack, task, demos);
    let c = client.complete(&CompletionRequest { prompt: &prompt, params, stream: 0 })?;
    let raw_reply = archive(archive_dir, &prompt, 0, &c.text)?;
    let mut set = CandidateSet::new(CandidateKind::Styles);
    for item in parse_item_list(&c.text) {
        if check_style(&item).is_ok() {
            set.push(
                &item,
                Provenance {
                    kind: CandidateKind::Styles,
                    source: CandidateSource::Llm,
                    entity_type: None,
                    task_id: Some(task.id.clone()),
                    prompt_sha256: Some(prompt.sha256.clone()),
                    model_id: Some(params.model_id.clone()),
                    raw_reply: raw_reply.clone(),
                },
            );
        }
    }
    if set.is_empty() {
        return Err(ElicitError::NoStyles { raw: c.text });
    }
    Ok(Elicited { set, calls: 1, usage: c.usage, shortfall: 0, raw_replies: vec![c.text] })
}

/// Every node of `entity_type` as a topic candidate, in id order.
pub fn kg_topics(kg: &KnowledgeGraph, entity_type: &str) -> Result<CandidateSet, KgError> {
    let mut set = CandidateSet::new(CandidateKind::Topics);
    for id in kg.nodes_of_type(entity_type)? {
        let n = kg.node(id).expect("indexed node exists");
        set.push(
            &n.name,
            Provenance {
                kind: CandidateKind::Topics,
                source: CandidateSource::Kg,
                entity_type: Some(n.node_type.clone()),
                task_id: None,
                prompt_sha256: None,
                model_id: None,
                raw_reply: None,
            },
        );
    }
    Ok(set)
}

/// A style set from configuration, for fully offline runs.
pub fn manual_styles(task_id: &str, styles: &[String]) -> Result<CandidateSet, ElicitError> {
    let mut set = CandidateSet::new(CandidateKind::Styles);
    for s in styles {
        check_style(s).map_err(|reason| ElicitError::InvalidStyle { text: s.clone(), reason })?;
        set.push(
            s,
            Provenance {
                kind: CandidateKind::Styles,
                source: CandidateSource::Manual,
                entity_type: None,
                task_id: Some(task_id.to_string()),
                prompt_sha256: None,
                model_id: None,
                raw_reply: None,
            },
        );
    }
    Ok(set)
}
