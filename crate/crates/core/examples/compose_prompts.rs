//! Compose prompts for every family in knowledge-infused mode, plus the
//! two-step chain for sentence pairs.
//!
//!     cargo run --example compose_prompts

use std::path::Path;

use synthkit::kg::{Topic, TopicSource};
use synthkit::promptkit::{compose, ComposeInput, Composition, TemplatePack};
use synthkit::task::load_tasks;
use synthkit::{PromptMode, TaskFamily};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let pack = TemplatePack::builtin();
    let disease = Topic::entity("heart failure", "disease", TopicSource::Kg);
    let pair = Topic::pair(
        &Topic::entity("cisplatin", "chemical", TopicSource::Kg),
        &Topic::entity("chronic kidney disease", "disease", TopicSource::Kg),
        Some("induces".into()),
    );
    for task in load_tasks(&data.join("tasks.toml"))? {
        let topic = if task.family == TaskFamily::RelationExtraction { &pair } else { &disease };
        let input = ComposeInput {
            task: &task,
            label: &task.labels[0],
            topic: Some(topic),
            style: Some("clinical trial reports"),
            mode: PromptMode::KnowledgeInfused,
            demos: None,
        };
        println!("===== {} ({})", task.id, task.family);
        match compose(&pack, input)? {
            Composition::Single(p) => println!("{}", p.text),
            Composition::Pair(plan) => {
                println!("{}", plan.first.text);
                println!("----- second step");
                println!("{}", plan.second("The patient presented with acute heart failure.")?.text);
            }
        }
    }
    Ok(())
}
