use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Completion, CompletionRequest, LlmClient, LlmError, TokenUsage};
use crate::config::{load_structured, ConfigError};
use crate::dataset::PromptMode;
use crate::parsing::{render_replies, ParsedPayload};
use crate::promptkit::{ComposedPrompt, PromptPurpose, Step, ATTRIBUTE_CLASSES_KEY};
use crate::task::TaskFamily;

/// Word lists the mock assembles replies from. Sentence frames use `{e}`
/// for the echoed entity, `{e0}`/`{e1}` for a pair, `{c}` for the class
/// name and `{d}` for the domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockVocabulary {
    /// Entities used when the prompt carries no topic (plain and demo).
    pub fallback_entities: Vec<String>,
    pub entity_frames: Vec<String>,
    pub classification_frames: Vec<String>,
    pub relation_frames: Vec<String>,
    pub claim_frames: Vec<String>,
    pub hypothesis_frames: Vec<String>,
    /// Attribute values keyed by lowercase class name. The first class of a
    /// task always receives the echoed entity.
    pub attribute_values: BTreeMap<String, Vec<String>>,
    /// Topic lists are built as prefix + suffix.
    pub topic_prefixes: Vec<String>,
    pub topic_suffixes: Vec<String>,
    pub styles: Vec<String>,
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl MockVocabulary {
    pub fn builtin() -> Self {
        let attribute_values = [
            ("dosage", &["10 mg", "81 mg", "500 mg", "2 puffs", "1 tablet"][..]),
            ("route", &["orally", "intravenously", "by inhalation", "subcutaneously"]),
            ("frequency", &["daily", "twice a day", "every 8 hours", "at bedtime"]),
            ("reason", &["for pain", "for hypertension", "for infection", "for nausea"]),
            ("duration", &["for 7 days", "for two weeks", "for 3 months"]),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), strings(v)))
        .collect();
        Self {
            fallback_entities: strings(&["hypertension", "asthma", "pneumonia", "migraine", "anemia", "sepsis"]),
            entity_frames: strings(&[
                "The patient was admitted with worsening {e} last week.",
                "A history of {e} was noted during the clinic visit.",
                "Follow-up imaging showed no progression of {e}.",
                "She was referred to a specialist for management of {e}.",
            ]),
            classification_frames: strings(&[
                "This report on {c} discusses {e} in the setting of {d}.",
                "Recent work on {e} offers new evidence about {c}.",
                "We review {c} strategies with a focus on {e}.",
            ]),
            relation_frames: strings(&[
                "Exposure to {e0} was followed by {e1} in several patients.",
                "The authors examined whether {e0} is associated with {e1}.",
                "Cases of {e1} were recorded after treatment with {e0}.",
            ]),
            claim_frames: strings(&[
                "The patient has a documented history of {e}.",
                "Laboratory findings were consistent with {e}.",
                "He presented to the emergency department with {e}.",
            ]),
            hypothesis_frames: strings(&[
                "The patient has {e}.",
                "The patient does not have {e}.",
                "The patient may develop complications of {e}.",
            ]),
            attribute_values,
            topic_prefixes: strings(&[
                "cardio",
                "neuro",
                "hepato",
                "nephro",
                "gastro",
                "pulmo",
                "osteo",
                "dermato",
                "myo",
                "angio",
                "arthro",
                "encephalo",
                "hemato",
                "lympho",
                "endo",
                "oto",
                "rhino",
                "cysto",
                "chole",
                "spleno",
            ]),
            topic_suffixes: strings(&[
                "pathy",
                "itis",
                "megaly",
                "sclerosis",
                "algia",
                "plasia",
                "rrhea",
                "lithiasis",
                "stenosis",
                "oma",
                "penia",
                "trophy",
                "spasm",
                "ptosis",
                "malacia",
                "cele",
                "emia",
                "osis",
                "plegia",
                "rrhage",
            ]),
            styles: strings(&["medical literature", "patient-doctor dialogues", "clinical trial reports"]),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let v: Self = load_structured(path)?;
        let empty = [
            ("fallback_entities", v.fallback_entities.is_empty()),
            ("entity_frames", v.entity_frames.is_empty()),
            ("classification_frames", v.classification_frames.is_empty()),
            ("relation_frames", v.relation_frames.is_empty()),
            ("claim_frames", v.claim_frames.is_empty()),
            ("hypothesis_frames", v.hypothesis_frames.is_empty()),
            ("topic_prefixes", v.topic_prefixes.is_empty()),
            ("topic_suffixes", v.topic_suffixes.is_empty()),
            ("styles", v.styles.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(ConfigError::Invalid(format!("mock vocabulary: {name} is empty")));
        }
        Ok(v)
    }

    /// The `index`-th generated topic name. Names are distinct for every
    /// index.
    pub fn topic_name(&self, index: usize) -> String {
        let (p, s) = (self.topic_prefixes.len(), self.topic_suffixes.len());
        let base = format!("{}{}", self.topic_prefixes[index % p], self.topic_suffixes[(index / p) % s]);
        match index / (p * s) {
            0 => base,
            k => format!("{base} type {}", k + 1),
        }
    }
}

impl Default for MockVocabulary {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Offline backend. Replies are a pure function of the prompt's purpose and
/// bindings plus the request's stream key, and always satisfy the reply
/// format contract. Generation replies echo the bound topic verbatim.
///
/// Topic elicitation returns page `stream` of an endless list of distinct
/// names, so successive pages are disjoint.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    vocab: MockVocabulary,
}

fn frame(f: &str, vars: &[(&str, &str)]) -> String {
    let mut s = f.to_string();
    for (k, v) in vars {
        s = s.replace(&format!("{{{k}}}"), v);
    }
    s
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl MockBackend {
    pub fn new(vocab: MockVocabulary) -> Self {
        Self { vocab }
    }

    pub fn vocabulary(&self) -> &MockVocabulary {
        &self.vocab
    }

    fn pick<'v>(&self, rng: &mut ChaCha8Rng, xs: &'v [String]) -> &'v str {
        xs.choose(rng).map(String::as_str).unwrap_or_default()
    }

    fn entity(&self, prompt: &ComposedPrompt, slot: &str, rng: &mut ChaCha8Rng) -> String {
        match prompt.binding(slot) {
            Some(t) => one_line(t),
            None => self.pick(rng, &self.vocab.fallback_entities).to_string(),
        }
    }

    fn generate(&self, prompt: &ComposedPrompt, family: TaskFamily, step: Step, rng: &mut ChaCha8Rng) -> String {
        let v = &self.vocab;
        let class = prompt.binding("class_name").unwrap_or_default();
        let domain = prompt.binding("domain").unwrap_or_default();
        let payload = match (family, step) {
            (TaskFamily::Ner, _) => {
                let e = self.entity(prompt, "topic", rng);
                let text = frame(self.pick(rng, &v.entity_frames), &[("e", &e)]);
                ParsedPayload::SentenceWithEntities { text, entities: vec![e] }
            }
            (TaskFamily::AttributeExtraction, _) => {
                let e = self.entity(prompt, "topic", rng);
                let classes: Vec<&str> =
                    prompt.binding(ATTRIBUTE_CLASSES_KEY).map(|c| c.split('|').collect()).unwrap_or_else(|| vec!["Medication"]);
                let mut attributes = BTreeMap::new();
                let mut parts = vec![e.clone()];
                attributes.insert(classes[0].to_string(), vec![e.clone()]);
                for c in &classes[1..] {
                    if let Some(values) = v.attribute_values.get(&c.to_lowercase()) {
                        let value = self.pick(rng, values).to_string();
                        parts.push(value.clone());
                        attributes.insert(c.to_string(), vec![value]);
                    }
                }
                let text = format!("The patient was started on {}.", parts.join(" "));
                ParsedPayload::SentenceWithAttributes { text, attributes }
            }
            (TaskFamily::TextClassification, _) => {
                let e = self.entity(prompt, "topic", rng);
                let f = self.pick(rng, &v.classification_frames);
                ParsedPayload::Sentence { text: frame(f, &[("e", &e), ("c", class), ("d", domain)]) }
            }
            (TaskFamily::RelationExtraction, _) => {
                let e0 = self.entity(prompt, "topic0", rng);
                let e1 = self.entity(prompt, "topic1", rng);
                let f = self.pick(rng, &v.relation_frames);
                ParsedPayload::Sentence { text: frame(f, &[("e0", &e0), ("e1", &e1)]) }
            }
            (TaskFamily::NliPair, Step::PairSecond) => {
                let e = self.entity(prompt, "topic", rng);
                let f = self.pick(rng, &v.hypothesis_frames);
                ParsedPayload::Sentence { text: frame(f, &[("e", &e)]) }
            }
            (TaskFamily::NliPair, _) => {
                let e = self.entity(prompt, "topic", rng);
                let f = self.pick(rng, &v.claim_frames);
                ParsedPayload::Sentence { text: frame(f, &[("e", &e)]) }
            }
        };
        render_replies(&payload).remove(0)
    }

    fn topics(&self, count: usize, page: u64) -> String {
        let start = page as usize * count;
        (0..count).map(|i| format!("{}. {}", i + 1, self.vocab.topic_name(start + i))).collect::<Vec<_>>().join("\n")
    }

    fn styles(&self) -> String {
        self.vocab.styles.iter().enumerate().map(|(i, s)| format!("{}. {s}", i + 1)).collect::<Vec<_>>().join("\n")
    }
}

impl LlmClient for MockBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, LlmError> {
        request.params.validate()?;
        let prompt = request.prompt;
        let mut rng = ChaCha8Rng::seed_from_u64(request.stream);
        let text = match &prompt.purpose {
            PromptPurpose::Generate { family, step, mode } => {
                if *mode == PromptMode::KnowledgeInfused && prompt.binding("topic").is_none() {
                    return Err(LlmError::Unsupported("knowledge-infused prompt without a topic binding".into()));
                }
                self.generate(prompt, *family, *step, &mut rng)
            }
            PromptPurpose::ElicitTopics { count, .. } => self.topics(*count, request.stream),
            PromptPurpose::ElicitStyles => self.styles(),
            PromptPurpose::Freeform => {
                return Err(LlmError::Unsupported("the mock only answers composed pipeline prompts".into()))
            }
        };
        let usage = TokenUsage::estimate(&prompt.text, &text);
        Ok(Completion { text, usage, attempts: 1 })
    }
}
