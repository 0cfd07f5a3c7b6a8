//! Canonical JSONL dataset schema.
//!
//! One [`SyntheticRecord`] per line, UTF-8, keys in this order:
//!
//! | key | type | notes |
//! |-----|------|-------|
//! | `record_id` | string | 16 lowercase hex chars, from `(seed, slot index)` |
//! | `task_id` | string | |
//! | `label` | string | member of the task's label set |
//! | `text_primary` | string | the sentence (first sentence for pairs) |
//! | `text_secondary` | string, optional | second sentence of a pair |
//! | `entities` | list of string, optional | NER |
//! | `attributes` | map class → list of string, optional | attribute extraction |
//! | `topic` | object, optional | absent for plain/demo prompts |
//! | `style` | string, optional | absent unless knowledge-infused |
//! | `prompt_mode` | `knowledge_infused` / `plain` / `demo` | |
//! | `prompt_sha256` | hex string | first (or only) prompt |
//! | `secondary_prompt_sha256` | hex string, optional | second prompt of a pair |
//! | `model_id` | string | |
//! | `usage` | `{prompt_tokens, completion_tokens}` | summed over every attempt of the slot |
//! | `valid` | bool | |
//! | `rejection_reason` | string, optional | reason code when `valid` is false |
//!
//! Unknown keys are rejected.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::kg::Topic;
use crate::llm::TokenUsage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    KnowledgeInfused,
    Plain,
    Demo,
}

impl PromptMode {
    pub const ALL: [PromptMode; 3] = [PromptMode::KnowledgeInfused, PromptMode::Plain, PromptMode::Demo];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::KnowledgeInfused => "knowledge_infused",
            PromptMode::Plain => "plain",
            PromptMode::Demo => "demo",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticRecord {
    pub record_id: String,
    pub task_id: String,
    pub label: String,
    pub text_primary: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_secondary: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entities: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributes: Option<BTreeMap<String, Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<Topic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style: Option<String>,
    pub prompt_mode: PromptMode,
    pub prompt_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secondary_prompt_sha256: Option<String>,
    pub model_id: String,
    pub usage: TokenUsage,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejection_reason: Option<String>,
}

impl SyntheticRecord {
    /// Structural invariants that hold independently of the task family.
    pub fn check(&self) -> Result<(), String> {
        if self.record_id.is_empty() {
            return Err("empty record_id".into());
        }
        if self.valid {
            if self.text_primary.trim().is_empty() {
                return Err("valid record with empty text_primary".into());
            }
            if self.rejection_reason.is_some() {
                return Err("valid record carries a rejection_reason".into());
            }
            if let Some(e) = &self.entities {
                if e.iter().any(|s| s.trim().is_empty()) {
                    return Err("empty entity string".into());
                }
            }
            if matches!(&self.text_secondary, Some(s) if s.trim().is_empty()) {
                return Err("empty text_secondary".into());
            }
        } else if self.rejection_reason.is_none() {
            return Err("invalid record without rejection_reason".into());
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {} malformed line(s), first at line {}: {}", errors.len(), errors[0].line, errors[0].message)]
    Malformed { path: PathBuf, errors: Vec<LineError> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    /// 1-based.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReadMode {
    /// Any malformed line fails the whole read.
    #[default]
    Strict,
    /// Malformed lines are reported and skipped.
    Lenient,
}

#[derive(Debug, Default)]
pub struct ReadOutcome {
    pub records: Vec<SyntheticRecord>,
    pub errors: Vec<LineError>,
}

pub fn write_dataset(records: &[SyntheticRecord], path: &Path) -> Result<(), DatasetError> {
    let io = |source| DatasetError::Io { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    write_records(records, &mut w).map_err(io)?;
    w.flush().map_err(io)
}

pub fn write_records<W: Write>(records: &[SyntheticRecord], w: &mut W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_dataset(path: &Path, mode: ReadMode) -> Result<ReadOutcome, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    let outcome = read_records(BufReader::new(file)).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    if mode == ReadMode::Strict && !outcome.errors.is_empty() {
        return Err(DatasetError::Malformed { path: path.to_path_buf(), errors: outcome.errors });
    }
    Ok(outcome)
}

pub fn read_records<R: BufRead>(reader: R) -> std::io::Result<ReadOutcome> {
    let mut out = ReadOutcome::default();
    let mut ids = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed =
            serde_json::from_str::<SyntheticRecord>(&line)
                .map_err(|e| e.to_string())
                .and_then(|r| r.check().map(|_| r))
                .and_then(|r| {
                    if ids.insert(r.record_id.clone()) {
                        Ok(r)
                    } else {
                        Err(format!("duplicate record_id {}", r.record_id))
                    }
                });
        match parsed {
            Ok(r) => out.records.push(r),
            Err(message) => out.errors.push(LineError { line: lineno, message }),
        }
    }
    Ok(out)
}
