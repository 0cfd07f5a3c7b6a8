use std::collections::BTreeMap;

use super::template::{TemplateKey, TemplatePack};
use super::{fill, ComposedPrompt, PromptError, PromptPurpose, Step, ATTRIBUTE_CLASSES_KEY};
use crate::dataset::PromptMode;
use crate::kg::{Topic, TopicKind};
use crate::task::{FewShotSet, LabelDef, TaskFamily, TaskSpec};

#[derive(Debug, Clone, Copy)]
pub struct ComposeInput<'a> {
    pub task: &'a TaskSpec,
    pub label: &'a LabelDef,
    /// Required for knowledge-infused prompts, ignored otherwise.
    pub topic: Option<&'a Topic>,
    /// Required for knowledge-infused prompts, ignored otherwise.
    pub style: Option<&'a str>,
    pub mode: PromptMode,
    /// Required for demo prompts, ignored otherwise.
    pub demos: Option<&'a FewShotSet>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Composition {
    Single(ComposedPrompt),
    Pair(PairPlan),
}

impl Composition {
    /// The prompt to send first.
    pub fn first(&self) -> &ComposedPrompt {
        match self {
            Composition::Single(p) => p,
            Composition::Pair(p) => &p.first,
        }
    }
}

/// A sentence-pair chain: `first` is sent, and its reply is bound to
/// `[first_sentence]` in the second prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairPlan {
    pub first: ComposedPrompt,
    second_body: String,
    second_bindings: BTreeMap<String, String>,
    mode: PromptMode,
}

impl PairPlan {
    pub fn second(&self, first_sentence: &str) -> Result<ComposedPrompt, PromptError> {
        let mut bindings = self.second_bindings.clone();
        bindings.insert("first_sentence".into(), first_sentence.to_string());
        let text = fill(&self.second_body, &bindings).map_err(|slot| PromptError::Unresolved {
            slot,
            family: TaskFamily::NliPair.to_string(),
            mode: self.mode,
            step: Step::PairSecond,
        })?;
        let n = text.len();
        let purpose = PromptPurpose::Generate { family: TaskFamily::NliPair, step: Step::PairSecond, mode: self.mode };
        Ok(ComposedPrompt::new(text, n, purpose, bindings))
    }
}

fn common_bindings(input: &ComposeInput<'_>, step: Step) -> Result<BTreeMap<String, String>, PromptError> {
    let task = input.task;
    let mut b = BTreeMap::new();
    b.insert("domain".to_string(), task.domain_phrase.clone());
    b.insert("class_name".to_string(), input.label.name.clone());
    b.insert("label_desc".to_string(), input.label.description.clone());
    if let Some(roles) = &task.entity_roles {
        b.insert("entity0".to_string(), roles[0].clone());
        b.insert("entity1".to_string(), roles[1].clone());
    }
    if let Some(classes) = &task.attribute_classes {
        b.insert(ATTRIBUTE_CLASSES_KEY.to_string(), classes.join("|"));
    }
    let content = match step {
        Step::PairSecond => task.second_content(),
        _ => task.content_phrase.as_deref(),
    };
    if let Some(c) = content {
        b.insert("content".to_string(), c.to_string());
    }

    match input.mode {
        PromptMode::KnowledgeInfused => {
            let topic =
                input.topic.ok_or_else(|| PromptError::TopicMismatch("knowledge-infused prompt without a topic".into()))?;
            let style =
                input.style.ok_or_else(|| PromptError::TopicMismatch("knowledge-infused prompt without a style".into()))?;
            let want = if task.family == TaskFamily::RelationExtraction { TopicKind::EntityPair } else { TopicKind::Entity };
            if topic.kind != want || !topic.is_well_formed() {
                return Err(PromptError::TopicMismatch(format!("{} needs a {want:?} topic, got {:?}", task.family, topic.kind)));
            }
            b.insert("topic".to_string(), topic.primary_name.clone());
            if let Some(second) = &topic.secondary_name {
                b.insert("topic0".to_string(), topic.primary_name.clone());
                b.insert("topic1".to_string(), second.clone());
            }
            b.insert("style".to_string(), style.to_string());
        }
        PromptMode::Demo => {
            let set = input.demos.filter(|d| !d.examples.is_empty()).ok_or(PromptError::NoDemonstrations)?;
            b.insert("demonstrations".to_string(), render_demonstrations(set));
        }
        PromptMode::Plain => {}
    }
    Ok(b)
}

fn bracket_list(items: &[String]) -> String {
    format!("[{}]", items.join(", "))
}

/// One block per example in set order: its text(s), any gold entities or
/// attributes, then `Label: <name>`. Blocks are separated by a blank line.
pub fn render_demonstrations(demos: &FewShotSet) -> String {
    let blocks: Vec<String> = demos
        .examples
        .iter()
        .map(|ex| {
            let mut lines: Vec<String> = ex.texts.clone();
            if let Some(e) = &ex.entities {
                lines.push(format!("Entities: {}", bracket_list(e)));
            }
            for (class, values) in ex.attributes.iter().flatten() {
                lines.push(format!("{class}: {}", bracket_list(values)));
            }
            lines.push(format!("Label: {}", ex.label));
            lines.join("\n")
        })
        .collect();
    blocks.join("\n\n")
}

pub fn compose(pack: &TemplatePack, input: ComposeInput<'_>) -> Result<Composition, PromptError> {
    let family = input.task.family;
    let steps = TemplateKey::steps_for(family);
    let first_step = steps[0];
    let key = TemplateKey::new(family, input.mode, first_step);
    let bindings = common_bindings(&input, first_step)?;
    let first = instantiate(pack, key, bindings)?;
    if family != TaskFamily::NliPair {
        return Ok(Composition::Single(first));
    }
    let second_key = TemplateKey::new(family, input.mode, Step::PairSecond);
    Ok(Composition::Pair(PairPlan {
        first,
        second_body: pack.get(second_key)?.body.clone(),
        second_bindings: common_bindings(&input, Step::PairSecond)?,
        mode: input.mode,
    }))
}

fn instantiate(pack: &TemplatePack, key: TemplateKey, bindings: BTreeMap<String, String>) -> Result<ComposedPrompt, PromptError> {
    let body = fill(&pack.get(key)?.body, &bindings).map_err(|slot| PromptError::Unresolved {
        slot,
        family: key.family.to_string(),
        mode: key.mode,
        step: key.step,
    })?;
    let body_len = body.len();
    let text = match pack.format_instruction(key.family) {
        Some(f) => format!("{body}\n\n{f}"),
        None => body,
    };
    let purpose = PromptPurpose::Generate { family: key.family, step: key.step, mode: key.mode };
    Ok(ComposedPrompt::new(text, body_len, purpose, bindings))
}

/// Prompt asking for candidate writing styles, seeded with the few-shot
/// sentences one per line.
pub fn style_elicitation_prompt(pack: &TemplatePack, task: &TaskSpec, demos: &FewShotSet) -> ComposedPrompt {
    let lines: Vec<&str> = demos.examples.iter().filter_map(|e| e.texts.first().map(String::as_str)).collect();
    let mut b = BTreeMap::new();
    b.insert("task".to_string(), task.display_name().to_string());
    b.insert("demonstrations".to_string(), lines.join("\n"));
    let text = fill(pack.style_elicitation(), &b).expect("style prompt validated to use only task and demonstrations");
    let n = text.len();
    ComposedPrompt::new(text, n, PromptPurpose::ElicitStyles, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::TopicSource;
    use crate::promptkit::has_unresolved_slot;
    use crate::task::{fixtures, FewShotExample};

    fn entity(name: &str) -> Topic {
        Topic::entity(name, "disease", TopicSource::Kg)
    }

    fn input<'a>(task: &'a TaskSpec, topic: Option<&'a Topic>, mode: PromptMode) -> ComposeInput<'a> {
        ComposeInput { task, label: &task.labels[0], topic, style: Some("medical literature"), mode, demos: None }
    }

    #[test]
    fn ner_knowledge_infused_binds_topic_and_style() {
        let pack = TemplatePack::builtin();
        let task = fixtures::ner();
        let t = entity("sepsis");
        let c = compose(&pack, input(&task, Some(&t), PromptMode::KnowledgeInfused)).unwrap();
        let p = c.first();
        assert!(p.body().contains("named sepsis."));
        assert!(p.body().contains("style of medical literature,"));
        assert!(p.text.ends_with("Entities: [<entity>, <entity>, ...]"));
        assert!(!has_unresolved_slot(&p.text));
    }

    #[test]
    fn plain_ignores_topic() {
        let pack = TemplatePack::builtin();
        let task = fixtures::classification();
        let t = entity("sepsis");
        let p = compose(&pack, input(&task, Some(&t), PromptMode::Plain)).unwrap();
        assert!(!p.first().text.contains("sepsis"));
        assert!(!p.first().text.contains("medical literature"));
    }

    #[test]
    fn relation_needs_pair_topic() {
        let pack = TemplatePack::builtin();
        let task = fixtures::relation();
        let t = entity("sepsis");
        let err = compose(&pack, input(&task, Some(&t), PromptMode::KnowledgeInfused)).unwrap_err();
        assert!(matches!(err, PromptError::TopicMismatch(_)));
        let head = Topic::entity("aspirin", "chemical", TopicSource::Kg);
        let pair = Topic::pair(&head, &t, None);
        let c = compose(&pack, input(&task, Some(&pair), PromptMode::KnowledgeInfused)).unwrap();
        assert!(c.first().text.contains("chemical: aspirin and disease: sepsis"));
    }

    #[test]
    fn knowledge_infused_without_topic_fails() {
        let pack = TemplatePack::builtin();
        let task = fixtures::ner();
        assert!(compose(&pack, input(&task, None, PromptMode::KnowledgeInfused)).is_err());
    }

    #[test]
    fn pair_chain_binds_first_sentence() {
        let pack = TemplatePack::builtin();
        let task = fixtures::nli();
        let t = entity("sepsis");
        let Composition::Pair(plan) = compose(&pack, input(&task, Some(&t), PromptMode::KnowledgeInfused)).unwrap() else {
            panic!("expected a pair plan");
        };
        assert!(plan.first.text.contains("create a set of claim."));
        let second = plan.second("Sepsis was treated early.").unwrap();
        assert!(second.text.contains("Given the hypothesis: 'Sepsis was treated early.'"));
        assert!(second.text.contains("about sepsis so that"));
        assert_eq!(second.binding("class_name"), Some("entailment"));
    }

    #[test]
    fn demo_requires_examples() {
        let pack = TemplatePack::builtin();
        let task = fixtures::classification();
        let err = compose(&pack, input(&task, None, PromptMode::Demo)).unwrap_err();
        assert_eq!(err, PromptError::NoDemonstrations);
        let set = FewShotSet {
            task_id: task.id.clone(),
            examples: vec![
                FewShotExample {
                    texts: vec!["Masks reduce spread.".into()],
                    label: "Prevention".into(),
                    entities: None,
                    attributes: None,
                },
                FewShotExample {
                    texts: vec!["Remdesivir helped.".into()],
                    label: "Treatment".into(),
                    entities: None,
                    attributes: None,
                },
            ],
            shots_per_label: 1,
        };
        let mut i = input(&task, None, PromptMode::Demo);
        i.demos = Some(&set);
        let p = compose(&pack, i).unwrap();
        assert!(p
            .first()
            .text
            .ends_with("set:\nMasks reduce spread.\nLabel: Prevention\n\nRemdesivir helped.\nLabel: Treatment"));
    }

    #[test]
    fn pair_example_renders_both_texts_before_label() {
        let set = FewShotSet {
            task_id: "mednli".into(),
            examples: vec![FewShotExample {
                texts: vec!["He has sepsis.".into(), "He is ill.".into()],
                label: "entailment".into(),
                entities: None,
                attributes: None,
            }],
            shots_per_label: 1,
        };
        assert_eq!(render_demonstrations(&set), "He has sepsis.\nHe is ill.\nLabel: entailment");
    }

    #[test]
    fn style_prompt_lists_examples() {
        let pack = TemplatePack::builtin();
        let task = fixtures::ner();
        let set = FewShotSet {
            task_id: task.id.clone(),
            examples: vec![
                FewShotExample { texts: vec!["a".into()], label: "disease".into(), entities: None, attributes: None },
                FewShotExample { texts: vec!["b".into()], label: "disease".into(), entities: None, attributes: None },
            ],
            shots_per_label: 2,
        };
        let p = style_elicitation_prompt(&pack, &task, &set);
        assert!(p.text.contains("disease entity recognition tasks"));
        assert!(p.text.contains("set:\na\nb\nPlease"));
        assert_eq!(p.purpose, PromptPurpose::ElicitStyles);
    }
}
