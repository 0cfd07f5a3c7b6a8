use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use super::{slots_in, PromptError, Step};
use crate::dataset::PromptMode;
use crate::task::TaskFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TemplateKey {
    pub family: TaskFamily,
    pub mode: PromptMode,
    pub step: Step,
}

impl TemplateKey {
    pub fn new(family: TaskFamily, mode: PromptMode, step: Step) -> Self {
        Self { family, mode, step }
    }

    /// `<family>.<mode>.<step>.txt`
    pub fn file_name(&self) -> String {
        format!("{}.{}.{}.txt", self.family.as_str(), self.mode.as_str(), self.step.as_str())
    }

    pub fn parse_file_name(name: &str) -> Option<Self> {
        let stem = name.strip_suffix(".txt")?;
        let mut parts = stem.split('.');
        let family = TaskFamily::parse(parts.next()?)?;
        let mode = PromptMode::parse(parts.next()?)?;
        let step = Step::parse(parts.next()?)?;
        parts.next().is_none().then_some(Self { family, mode, step })
    }

    /// Steps a family is generated in.
    pub fn steps_for(family: TaskFamily) -> &'static [Step] {
        match family {
            TaskFamily::NliPair => &[Step::PairFirst, Step::PairSecond],
            _ => &[Step::Single],
        }
    }

    /// Every (family, mode, step) the pipeline needs.
    pub fn all() -> Vec<TemplateKey> {
        let mut keys = Vec::new();
        for family in TaskFamily::ALL {
            for mode in PromptMode::ALL {
                for &step in Self::steps_for(family) {
                    keys.push(Self::new(family, mode, step));
                }
            }
        }
        keys
    }

    /// Slots that composition can bind for this key.
    pub fn resolvable_slots(&self) -> Vec<&'static str> {
        let mut s = vec!["domain", "class_name", "label_desc"];
        if self.mode == PromptMode::KnowledgeInfused {
            s.extend(["topic", "style"]);
        }
        if self.mode == PromptMode::Demo {
            s.push("demonstrations");
        }
        match self.family {
            TaskFamily::RelationExtraction => {
                s.extend(["entity0", "entity1"]);
                if self.mode == PromptMode::KnowledgeInfused {
                    s.extend(["topic0", "topic1"]);
                }
            }
            TaskFamily::NliPair => {
                s.push("content");
                if self.step == Step::PairSecond {
                    s.push("first_sentence");
                }
            }
            _ => {}
        }
        s
    }
}

impl fmt::Display for TemplateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.family, self.mode.as_str(), self.step.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub key: TemplateKey,
    pub body: String,
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<(), PromptError> {
        let bad = |m: String| PromptError::InvalidTemplate(self.key.to_string(), m);
        let slots = slots_in(&self.body);
        let allowed = self.key.resolvable_slots();
        if let Some(s) = slots.iter().find(|s| !allowed.contains(s)) {
            return Err(bad(format!("slot [{s}] cannot be resolved")));
        }
        match self.key.mode {
            // The second step of a pair takes its style from the first
            // sentence instead of a sampled style.
            PromptMode::KnowledgeInfused if self.key.step != Step::PairSecond && !slots.contains(&"style") => {
                Err(bad("knowledge-infused template lacks [style]".into()))
            }
            PromptMode::Plain if slots.iter().any(|s| matches!(*s, "topic" | "style" | "topic0" | "topic1")) => {
                Err(bad("plain template must not use topic or style".into()))
            }
            PromptMode::Demo if !slots.contains(&"demonstrations") => Err(bad("demo template lacks [demonstrations]".into())),
            _ => Ok(()),
        }
    }
}

macro_rules! builtin {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../templates/", $name)))),*]
    };
}

const BUILTIN: &[(&str, &str)] = builtin![
    "text_classification.knowledge_infused.single.txt",
    "text_classification.plain.single.txt",
    "text_classification.demo.single.txt",
    "relation_extraction.knowledge_infused.single.txt",
    "relation_extraction.plain.single.txt",
    "relation_extraction.demo.single.txt",
    "nli_pair.knowledge_infused.pair_first.txt",
    "nli_pair.knowledge_infused.pair_second.txt",
    "nli_pair.plain.pair_first.txt",
    "nli_pair.plain.pair_second.txt",
    "nli_pair.demo.pair_first.txt",
    "nli_pair.demo.pair_second.txt",
    "ner.knowledge_infused.single.txt",
    "ner.plain.single.txt",
    "ner.demo.single.txt",
    "attribute_extraction.knowledge_infused.single.txt",
    "attribute_extraction.plain.single.txt",
    "attribute_extraction.demo.single.txt",
    "format.ner.txt",
    "format.attribute_extraction.txt",
    "elicit.styles.txt",
];

/// Files end with a newline on disk; bodies do not.
fn strip_final_newline(s: &str) -> &str {
    s.strip_suffix("\r\n").or_else(|| s.strip_suffix('\n')).unwrap_or(s)
}

/// The full set of generation templates plus per-family output-format
/// instructions and the style elicitation prompt.
#[derive(Debug, Clone)]
pub struct TemplatePack {
    templates: BTreeMap<TemplateKey, PromptTemplate>,
    formats: BTreeMap<TaskFamily, String>,
    style_elicitation: String,
}

impl TemplatePack {
    pub fn builtin() -> Self {
        let mut pack = Self { templates: BTreeMap::new(), formats: BTreeMap::new(), style_elicitation: String::new() };
        for (name, body) in BUILTIN {
            pack.insert_file(name, body).expect("built-in template names are valid");
        }
        pack.validate().expect("built-in templates validate");
        pack
    }

    fn insert_file(&mut self, name: &str, raw: &str) -> Result<bool, PromptError> {
        let body = strip_final_newline(raw).to_string();
        if let Some(key) = TemplateKey::parse_file_name(name) {
            self.templates.insert(key, PromptTemplate { key, body });
            return Ok(true);
        }
        if name == "elicit.styles.txt" {
            self.style_elicitation = body;
            return Ok(true);
        }
        if let Some(f) = name.strip_prefix("format.").and_then(|s| s.strip_suffix(".txt")) {
            let family =
                TaskFamily::parse(f).ok_or_else(|| PromptError::InvalidTemplate(name.into(), "unknown family".into()))?;
            self.formats.insert(family, body);
            return Ok(true);
        }
        Ok(false)
    }

    /// Starts from the built-in pack and replaces every template that has a
    /// file of the same name in `dir`. The result is validated.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let io = |m: String| PromptError::Io { path: dir.display().to_string(), message: m };
        let mut pack = Self::builtin();
        let entries = std::fs::read_dir(dir).map_err(|e| io(e.to_string()))?;
        for entry in entries {
            let entry = entry.map_err(|e| io(e.to_string()))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if !name.ends_with(".txt") {
                continue;
            }
            let raw = std::fs::read_to_string(entry.path()).map_err(|e| io(e.to_string()))?;
            if !pack.insert_file(&name, &raw)? {
                log::warn!("ignoring unrecognized template file {name}");
            }
        }
        pack.validate()?;
        Ok(pack)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        for key in TemplateKey::all() {
            self.get(key)?.validate()?;
        }
        let slots = slots_in(&self.style_elicitation);
        if let Some(s) = slots.iter().find(|s| !matches!(**s, "task" | "demonstrations")) {
            return Err(PromptError::InvalidTemplate("elicit.styles".into(), format!("slot [{s}] cannot be resolved")));
        }
        for (family, f) in &self.formats {
            if !slots_in(f).is_empty() {
                return Err(PromptError::InvalidTemplate(
                    format!("format.{family}"),
                    "format instruction must not use slots".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn get(&self, key: TemplateKey) -> Result<&PromptTemplate, PromptError> {
        self.templates.get(&key).ok_or_else(|| PromptError::MissingTemplate(key.to_string()))
    }

    /// Output-format instruction appended after the template, if the family
    /// has one.
    pub fn format_instruction(&self, family: TaskFamily) -> Option<&str> {
        self.formats.get(&family).map(String::as_str)
    }

    pub fn style_elicitation(&self) -> &str {
        &self.style_elicitation
    }
}

impl Default for TemplatePack {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_covers_every_key() {
        let pack = TemplatePack::builtin();
        assert_eq!(TemplateKey::all().len(), 18);
        for k in TemplateKey::all() {
            pack.get(k).unwrap();
        }
        assert!(pack.format_instruction(TaskFamily::Ner).is_some());
        assert!(pack.format_instruction(TaskFamily::AttributeExtraction).is_some());
        assert!(pack.format_instruction(TaskFamily::TextClassification).is_none());
    }

    #[test]
    fn file_name_round_trip() {
        for k in TemplateKey::all() {
            assert_eq!(TemplateKey::parse_file_name(&k.file_name()), Some(k));
        }
        assert_eq!(TemplateKey::parse_file_name("ner.plain.txt"), None);
    }

    #[test]
    fn plain_template_with_topic_rejected() {
        let t = PromptTemplate {
            key: TemplateKey::new(TaskFamily::Ner, PromptMode::Plain, Step::Single),
            body: "about [topic]".into(),
        };
        assert!(t.validate().is_err());
    }

    #[test]
    fn knowledge_infused_without_style_rejected() {
        let t = PromptTemplate {
            key: TemplateKey::new(TaskFamily::Ner, PromptMode::KnowledgeInfused, Step::Single),
            body: "about [topic]".into(),
        };
        assert!(t.validate().is_err());
    }

    #[test]
    fn unresolvable_slot_rejected() {
        let t = PromptTemplate {
            key: TemplateKey::new(TaskFamily::Ner, PromptMode::KnowledgeInfused, Step::Single),
            body: "[style] [first_sentence]".into(),
        };
        assert!(t.validate().is_err());
    }

    #[test]
    fn directory_overrides_builtin() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("ner.plain.single.txt"), "Write about [domain].\n").unwrap();
        let pack = TemplatePack::load_dir(dir.path()).unwrap();
        let k = TemplateKey::new(TaskFamily::Ner, PromptMode::Plain, Step::Single);
        assert_eq!(pack.get(k).unwrap().body, "Write about [domain].");
        std::fs::write(dir.path().join("ner.plain.single.txt"), "Write about [style].\n").unwrap();
        assert!(TemplatePack::load_dir(dir.path()).is_err());
    }
}
