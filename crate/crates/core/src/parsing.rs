//! Reply format contract, parsing and validation.
//!
//! Replies are expected in these shapes (surrounding prose is tolerated, the
//! first matching block wins):
//!
//! ```text
//! ner:                  Sentence: <text>
//!                       Entities: [a, b]
//! attribute_extraction: Sentence: <text>
//!                       Medication: [aspirin]
//!                       Dosage: [81 mg]
//! everything else:      <text>            (a leading "Sentence:" etc. is stripped)
//! ```
//!
//! List items that contain `,`, brackets or quotes are written as a JSON
//! array of strings instead, e.g. `Entities: ["1,2-dichloroethane"]`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::task::{TaskFamily, TaskSpec};
use crate::text::{contains_ci, word_count};

/// Upper bound on whitespace-delimited tokens per generated text.
pub const MAX_WORDS: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParsedPayload {
    Sentence { text: String },
    SentenceWithEntities { text: String, entities: Vec<String> },
    SentenceWithAttributes { text: String, attributes: BTreeMap<String, Vec<String>> },
    Pair { first: String, second: String },
}

impl ParsedPayload {
    pub fn text(&self) -> &str {
        match self {
            ParsedPayload::Sentence { text }
            | ParsedPayload::SentenceWithEntities { text, .. }
            | ParsedPayload::SentenceWithAttributes { text, .. } => text,
            ParsedPayload::Pair { first, .. } => first,
        }
    }
}

/// Stable reason codes; these are the keys of the manifest's rejection
/// counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    EmptyReply,
    MissingSentence,
    MissingEntities,
    MissingAttributes,
    SpanMismatch,
    FamilyMismatch,
    UnknownLabel,
    EmptyText,
    Length,
    UnknownAttributeClass,
}

impl RejectReason {
    pub const ALL: [RejectReason; 10] = [
        RejectReason::EmptyReply,
        RejectReason::MissingSentence,
        RejectReason::MissingEntities,
        RejectReason::MissingAttributes,
        RejectReason::SpanMismatch,
        RejectReason::FamilyMismatch,
        RejectReason::UnknownLabel,
        RejectReason::EmptyText,
        RejectReason::Length,
        RejectReason::UnknownAttributeClass,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::EmptyReply => "empty_reply",
            RejectReason::MissingSentence => "missing_sentence",
            RejectReason::MissingEntities => "missing_entities",
            RejectReason::MissingAttributes => "missing_attributes",
            RejectReason::SpanMismatch => "span_mismatch",
            RejectReason::FamilyMismatch => "family_mismatch",
            RejectReason::UnknownLabel => "unknown_label",
            RejectReason::EmptyText => "empty_text",
            RejectReason::Length => "length",
            RejectReason::UnknownAttributeClass => "unknown_attribute_class",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{reason}: {detail}")]
pub struct Rejection {
    pub reason: RejectReason,
    pub detail: String,
}

impl Rejection {
    fn new(reason: RejectReason, detail: impl Into<String>) -> Self {
        Self { reason, detail: detail.into() }
    }
}

const SENTENCE_LABELS: [&str; 9] =
    ["sentence", "text", "claim", "hypothesis", "premise", "abstract", "answer", "output", "synthetic sentence"];

const ENTITY_LABELS: [&str; 3] = ["entities", "entity", "named entities"];

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn is_quote(c: char) -> bool {
    matches!(c, '"' | '\'' | '\u{201c}' | '\u{201d}' | '\u{2018}' | '\u{2019}' | '`')
}

fn strip_quotes(s: &str) -> &str {
    let s = s.trim();
    let mut chars = s.chars();
    match (chars.next(), chars.next_back()) {
        (Some(a), Some(b)) if is_quote(a) && is_quote(b) => s[a.len_utf8()..s.len() - b.len_utf8()].trim(),
        _ => s,
    }
}

/// Splits `Label: rest` when the label, lowercased and with a trailing
/// number removed, is one of `labels`.
fn labelled<'a>(line: &'a str, labels: &[&str]) -> Option<&'a str> {
    let (head, rest) = line.split_once(':')?;
    let head = head.trim().trim_matches(|c: char| c == '*' || c == '#').trim().to_lowercase();
    let head = head.trim_end_matches(|c: char| c.is_ascii_digit()).trim_end();
    labels.contains(&head).then_some(rest.trim().trim_start_matches('*').trim())
}

fn lines(raw: &str) -> Vec<&str> {
    raw.lines().map(str::trim).filter(|l| !l.is_empty()).collect()
}

/// Parses a bracketed list: a JSON array of strings if it is one, otherwise
/// comma-separated items. Items are trimmed and unquoted; empties dropped.
pub fn parse_list(s: &str) -> Vec<String> {
    let s = s.trim();
    if s.starts_with('[') {
        if let Ok(items) = serde_json::from_str::<Vec<String>>(s) {
            return items.into_iter().map(|i| collapse(&i)).filter(|i| !i.is_empty()).collect();
        }
    }
    let inner = s.strip_prefix('[').unwrap_or(s);
    let inner = inner.strip_suffix(']').unwrap_or(inner);
    inner.split(',').map(|i| collapse(strip_quotes(i))).filter(|i| !i.is_empty()).collect()
}

pub fn render_list(items: &[String]) -> String {
    let needs_json =
        items.iter().any(|i| i.contains([',', '[', ']', '"', '\\']) || i.starts_with(is_quote) || i.ends_with(is_quote));
    if needs_json {
        serde_json::to_string(items).expect("strings serialize")
    } else {
        format!("[{}]", items.join(", "))
    }
}

fn parse_bare(raw: &str) -> Result<String, Rejection> {
    let ls = lines(raw);
    if ls.is_empty() {
        return Err(Rejection::new(RejectReason::EmptyReply, "reply is empty"));
    }
    for (i, l) in ls.iter().enumerate() {
        if let Some(rest) = labelled(l, &SENTENCE_LABELS) {
            let text = if rest.is_empty() { ls.get(i + 1).copied().unwrap_or("") } else { rest };
            return nonempty(collapse(strip_quotes(text)));
        }
    }
    let body = if ls.len() > 1 && ls[0].ends_with(':') { &ls[1..] } else { &ls[..] };
    nonempty(collapse(strip_quotes(&body.join(" "))))
}

fn nonempty(text: String) -> Result<String, Rejection> {
    if text.is_empty() {
        Err(Rejection::new(RejectReason::MissingSentence, "no sentence text"))
    } else {
        Ok(text)
    }
}

/// Index of the first `Sentence:` line and its text.
fn sentence_line(ls: &[&str]) -> Result<(usize, String), Rejection> {
    ls.iter()
        .enumerate()
        .find_map(|(i, l)| labelled(l, &["sentence"]).map(|rest| (i, collapse(strip_quotes(rest)))))
        .filter(|(_, t)| !t.is_empty())
        .ok_or_else(|| Rejection::new(RejectReason::MissingSentence, "no 'Sentence:' line"))
}

fn parse_entities(raw: &str) -> Result<ParsedPayload, Rejection> {
    let ls = lines(raw);
    if ls.is_empty() {
        return Err(Rejection::new(RejectReason::EmptyReply, "reply is empty"));
    }
    let (i, text) = sentence_line(&ls)?;
    let entities = ls[i + 1..]
        .iter()
        .find_map(|l| labelled(l, &ENTITY_LABELS))
        .map(parse_list)
        .ok_or_else(|| Rejection::new(RejectReason::MissingEntities, "no 'Entities:' line after the sentence"))?;
    check_spans(&text, &entities)?;
    Ok(ParsedPayload::SentenceWithEntities { text, entities })
}

fn check_spans(text: &str, entities: &[String]) -> Result<(), Rejection> {
    let missing: Vec<&str> = entities.iter().filter(|e| !contains_ci(text, e)).map(String::as_str).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Rejection::new(RejectReason::SpanMismatch, format!("not in sentence: {}", missing.join(", "))))
    }
}

fn parse_attributes(raw: &str) -> Result<ParsedPayload, Rejection> {
    let ls = lines(raw);
    if ls.is_empty() {
        return Err(Rejection::new(RejectReason::EmptyReply, "reply is empty"));
    }
    let (i, text) = sentence_line(&ls)?;
    let mut attributes = BTreeMap::new();
    for l in &ls[i + 1..] {
        let Some((class, rest)) = l.split_once(':') else { continue };
        let (class, rest) = (collapse(class), rest.trim());
        if class.is_empty() || !rest.starts_with('[') {
            continue;
        }
        let items = parse_list(rest);
        if !items.is_empty() {
            attributes.entry(class).or_insert(items);
        }
    }
    if attributes.is_empty() {
        return Err(Rejection::new(RejectReason::MissingAttributes, "no '<Class>: [...]' line after the sentence"));
    }
    Ok(ParsedPayload::SentenceWithAttributes { text, attributes })
}

/// Parses a single reply. Sentence-pair tasks are parsed one reply at a
/// time (each yields a `Sentence`); see [`parse_pair`].
pub fn parse_reply(family: TaskFamily, raw: &str) -> Result<ParsedPayload, Rejection> {
    match family {
        TaskFamily::Ner => parse_entities(raw),
        TaskFamily::AttributeExtraction => parse_attributes(raw),
        TaskFamily::TextClassification | TaskFamily::RelationExtraction | TaskFamily::NliPair => {
            parse_bare(raw).map(|text| ParsedPayload::Sentence { text })
        }
    }
}

pub fn parse_pair(first_raw: &str, second_raw: &str) -> Result<ParsedPayload, Rejection> {
    Ok(ParsedPayload::Pair { first: parse_bare(first_raw)?, second: parse_bare(second_raw)? })
}

/// Renders a payload in the reply format: one reply, or two for a pair.
pub fn render_replies(payload: &ParsedPayload) -> Vec<String> {
    match payload {
        ParsedPayload::Sentence { text } => vec![text.clone()],
        ParsedPayload::SentenceWithEntities { text, entities } => {
            vec![format!("Sentence: {text}\nEntities: {}", render_list(entities))]
        }
        ParsedPayload::SentenceWithAttributes { text, attributes } => {
            let mut s = format!("Sentence: {text}");
            for (class, items) in attributes {
                s.push_str(&format!("\n{class}: {}", render_list(items)));
            }
            vec![s]
        }
        ParsedPayload::Pair { first, second } => vec![first.clone(), second.clone()],
    }
}

/// Checks a parsed payload against the task. Attribute classes are matched
/// case-insensitively and rewritten to the task's spelling.
pub fn validate(task: &TaskSpec, payload: ParsedPayload, label: &str) -> Result<ParsedPayload, Rejection> {
    let fits = matches!(
        (task.family, &payload),
        (TaskFamily::Ner, ParsedPayload::SentenceWithEntities { .. })
            | (TaskFamily::AttributeExtraction, ParsedPayload::SentenceWithAttributes { .. })
            | (TaskFamily::NliPair, ParsedPayload::Pair { .. })
            | (TaskFamily::TextClassification | TaskFamily::RelationExtraction, ParsedPayload::Sentence { .. })
    );
    if !fits {
        return Err(Rejection::new(RejectReason::FamilyMismatch, format!("payload does not fit {}", task.family)));
    }
    if task.label(label).is_none() {
        return Err(Rejection::new(RejectReason::UnknownLabel, format!("{label:?} is not a label of {}", task.id)));
    }
    let texts: Vec<&str> = match &payload {
        ParsedPayload::Pair { first, second } => vec![first, second],
        p => vec![p.text()],
    };
    for t in texts {
        if t.trim().is_empty() {
            return Err(Rejection::new(RejectReason::EmptyText, "empty text"));
        }
        let n = word_count(t);
        if n > MAX_WORDS {
            return Err(Rejection::new(RejectReason::Length, format!("{n} words, limit {MAX_WORDS}")));
        }
    }
    match payload {
        ParsedPayload::SentenceWithEntities { text, entities } => {
            if entities.iter().any(|e| e.trim().is_empty()) {
                return Err(Rejection::new(RejectReason::EmptyText, "empty entity"));
            }
            check_spans(&text, &entities)?;
            Ok(ParsedPayload::SentenceWithEntities { text, entities })
        }
        ParsedPayload::SentenceWithAttributes { text, attributes } => {
            let classes = task.attribute_classes.as_deref().unwrap_or_default();
            let mut out = BTreeMap::new();
            for (class, items) in attributes {
                let canon = classes.iter().find(|c| c.to_lowercase() == class.to_lowercase()).ok_or_else(|| {
                    Rejection::new(RejectReason::UnknownAttributeClass, format!("unknown attribute class {class:?}"))
                })?;
                if items.is_empty() || items.iter().any(|i| i.trim().is_empty()) {
                    return Err(Rejection::new(RejectReason::EmptyText, format!("empty attribute in {class}")));
                }
                out.entry(canon.clone()).or_insert_with(Vec::new).extend(items);
            }
            if out.is_empty() {
                return Err(Rejection::new(RejectReason::MissingAttributes, "no attributes"));
            }
            Ok(ParsedPayload::SentenceWithAttributes { text, attributes: out })
        }
        p => Ok(p),
    }
}

/// Byte spans of `entities` in `text`: at each position the longest entity
/// that matches there (case-insensitively) is taken, scanning left to right
/// without overlap.
pub fn entity_spans(text: &str, entities: &[String]) -> Vec<(usize, usize)> {
    let fold = |s: &str| -> Vec<(usize, String)> { s.char_indices().map(|(i, c)| (i, c.to_lowercase().collect())).collect() };
    let hay = fold(text);
    let needles: Vec<Vec<String>> =
        entities.iter().map(|e| fold(e).into_iter().map(|(_, c)| c).collect()).filter(|n: &Vec<String>| !n.is_empty()).collect();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < hay.len() {
        let best = needles
            .iter()
            .filter(|n| n.len() <= hay.len() - i && n.iter().zip(&hay[i..]).all(|(a, (_, b))| a == b))
            .map(Vec::len)
            .max();
        match best {
            Some(len) => {
                let end = hay.get(i + len).map_or(text.len(), |(b, _)| *b);
                spans.push((hay[i].0, end));
                i += len;
            }
            None => i += 1,
        }
    }
    spans
}
