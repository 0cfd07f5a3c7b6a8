//! Declarative task descriptions and few-shot seed sets.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{load_structured, ConfigError};

/// Task families with their own prompt templates and reply formats.
///
/// Fact verification and sentence similarity are configured as
/// [`TaskFamily::NliPair`] with different slot phrases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFamily {
    TextClassification,
    RelationExtraction,
    NliPair,
    Ner,
    AttributeExtraction,
}

impl TaskFamily {
    pub const ALL: [TaskFamily; 5] = [
        TaskFamily::TextClassification,
        TaskFamily::RelationExtraction,
        TaskFamily::NliPair,
        TaskFamily::Ner,
        TaskFamily::AttributeExtraction,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskFamily::TextClassification => "text_classification",
            TaskFamily::RelationExtraction => "relation_extraction",
            TaskFamily::NliPair => "nli_pair",
            TaskFamily::Ner => "ner",
            TaskFamily::AttributeExtraction => "attribute_extraction",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.as_str() == s)
    }
}

impl fmt::Display for TaskFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelDef {
    pub name: String,
    /// Fills `[label_desc]`.
    pub description: String,
    /// Relation extraction only: the label asserts that no relation holds, so
    /// its pair topic is built from two unrelated entities.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub negative: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub id: String,
    pub family: TaskFamily,
    /// Human-readable task name used when asking for writing styles; falls
    /// back to `id`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_name: Option<String>,
    /// Fills `[domain]`.
    pub domain_phrase: String,
    /// Fills `[content]` in the first step of a sentence-pair task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_phrase: Option<String>,
    /// Fills `[content]` in the second step; defaults to `content_phrase`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_content_phrase: Option<String>,
    pub labels: Vec<LabelDef>,
    /// Fills `[entity0]` / `[entity1]` (relation extraction only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_roles: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute_classes: Option<Vec<String>>,
    /// Entity types whose topics feed `[topic]`. Relation extraction uses the
    /// first two as head and tail types.
    #[serde(default)]
    pub topic_entity_types: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TaskError {
    #[error("task {0}: label set is empty")]
    NoLabels(String),
    #[error("task {task}: duplicate label {label:?}")]
    DuplicateLabel { task: String, label: String },
    #[error("task {task}: {message}")]
    Shape { task: String, message: String },
    #[error("few-shot set for {task}: {message}")]
    FewShot { task: String, message: String },
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), TaskError> {
        let shape = |message: &str| TaskError::Shape { task: self.id.clone(), message: message.to_string() };
        if self.labels.is_empty() {
            return Err(TaskError::NoLabels(self.id.clone()));
        }
        let mut seen = HashSet::new();
        for l in &self.labels {
            if !seen.insert(l.name.as_str()) {
                return Err(TaskError::DuplicateLabel { task: self.id.clone(), label: l.name.clone() });
            }
        }
        let is_re = self.family == TaskFamily::RelationExtraction;
        match &self.entity_roles {
            Some(roles) if !is_re => return Err(shape("entity_roles is only valid for relation_extraction")),
            Some(roles) if roles.len() != 2 => return Err(shape("entity_roles must name exactly two roles")),
            None if is_re => return Err(shape("relation_extraction requires entity_roles")),
            _ => {}
        }
        let is_attr = self.family == TaskFamily::AttributeExtraction;
        match &self.attribute_classes {
            Some(_) if !is_attr => return Err(shape("attribute_classes is only valid for attribute_extraction")),
            Some(c) if c.is_empty() => return Err(shape("attribute_classes is empty")),
            None if is_attr => return Err(shape("attribute_extraction requires attribute_classes")),
            _ => {}
        }
        let is_pair = self.family == TaskFamily::NliPair;
        if is_pair != self.content_phrase.is_some() {
            return Err(shape("content_phrase must be present exactly for nli_pair"));
        }
        if !is_pair && self.second_content_phrase.is_some() {
            return Err(shape("second_content_phrase is only valid for nli_pair"));
        }
        if self.labels.iter().any(|l| l.negative) && !is_re {
            return Err(shape("negative labels are only meaningful for relation_extraction"));
        }
        Ok(())
    }

    pub fn label(&self, name: &str) -> Option<&LabelDef> {
        self.labels.iter().find(|l| l.name == name)
    }

    pub fn display_name(&self) -> &str {
        self.task_name.as_deref().unwrap_or(&self.id)
    }

    pub fn second_content(&self) -> Option<&str> {
        self.second_content_phrase.as_deref().or(self.content_phrase.as_deref())
    }
}

/// A file holding one or more task specs under `[[task]]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskFile {
    pub task: Vec<TaskSpec>,
}

pub fn load_tasks(path: &Path) -> Result<Vec<TaskSpec>, ConfigError> {
    let file: TaskFile = load_structured(path)?;
    for t in &file.task {
        t.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    }
    Ok(file.task)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FewShotExample {
    /// One sentence, or two for sentence-pair tasks.
    pub texts: Vec<String>,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entities: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributes: Option<BTreeMap<String, Vec<String>>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FewShotSet {
    pub task_id: String,
    pub examples: Vec<FewShotExample>,
    #[serde(default = "default_shots")]
    pub shots_per_label: usize,
}

fn default_shots() -> usize {
    5
}

impl FewShotSet {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        load_structured(path)
    }

    pub fn validate(&self, task: &TaskSpec) -> Result<(), TaskError> {
        let err = |message: String| TaskError::FewShot { task: self.task_id.clone(), message };
        if self.task_id != task.id {
            return Err(err(format!("belongs to task {}", self.task_id)));
        }
        let want_texts = if task.family == TaskFamily::NliPair { 2 } else { 1 };
        let mut per_label: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, ex) in self.examples.iter().enumerate() {
            if task.label(&ex.label).is_none() {
                return Err(err(format!("example {i} has unknown label {:?}", ex.label)));
            }
            if ex.texts.len() != want_texts {
                return Err(err(format!("example {i} has {} texts, expected {want_texts}", ex.texts.len())));
            }
            *per_label.entry(ex.label.as_str()).or_default() += 1;
        }
        for l in &task.labels {
            let n = per_label.get(l.name.as_str()).copied().unwrap_or(0);
            if n != self.shots_per_label {
                return Err(err(format!("label {:?} has {n} examples, shots_per_label is {}", l.name, self.shots_per_label)));
            }
        }
        Ok(())
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn fixtures_validate() {
        for t in all() {
            t.validate().unwrap();
        }
    }

    #[test]
    fn rejects_duplicate_and_empty_labels() {
        let mut t = ner();
        t.labels.push(label("disease", "again"));
        assert!(matches!(t.validate(), Err(TaskError::DuplicateLabel { .. })));
        t.labels.clear();
        assert!(matches!(t.validate(), Err(TaskError::NoLabels(_))));
    }

    #[test]
    fn family_specific_fields_are_exclusive() {
        let mut t = ner();
        t.entity_roles = Some(vec!["a".into(), "b".into()]);
        assert!(t.validate().is_err());
        let mut r = relation();
        r.entity_roles = Some(vec!["a".into()]);
        assert!(r.validate().is_err());
        let mut n = nli();
        n.content_phrase = None;
        assert!(n.validate().is_err());
        let mut a = attributes();
        a.attribute_classes = None;
        assert!(a.validate().is_err());
    }

    #[test]
    fn few_shot_counts_are_checked() {
        let task = classification();
        let ex =
            |label: &str| FewShotExample { texts: vec!["text".into()], label: label.into(), entities: None, attributes: None };
        let mut set =
            FewShotSet { task_id: task.id.clone(), examples: vec![ex("Treatment"), ex("Prevention")], shots_per_label: 1 };
        set.validate(&task).unwrap();
        set.examples.push(ex("Treatment"));
        assert!(set.validate(&task).is_err());
        set.examples.pop();
        set.examples[0].label = "Mechanism".into();
        assert!(set.validate(&task).is_err());
    }

    #[test]
    fn task_file_parses_from_toml() {
        let raw = r#"
[[task]]
id = "bc5cdr_chem"
family = "ner"
domain_phrase = "chemical"
topic_entity_types = ["chemical"]
labels = [{ name = "chemical", description = "a chemical mention" }]
"#;
        let f: TaskFile = crate::config::parse_structured(Path::new("x.toml"), raw).unwrap();
        assert_eq!(f.task[0].family, TaskFamily::Ner);
        f.task[0].validate().unwrap();
    }
}
