//! Collect topic and style candidates from the offline mock backend.
//!
//!     cargo run --example elicit_candidates

use std::path::Path;

use synthkit::elicit::{elicit_styles, elicit_topics, ElicitOptions};
use synthkit::llm::{GenerationParams, MockBackend};
use synthkit::promptkit::TemplatePack;
use synthkit::task::load_tasks;
use synthkit::FewShotSet;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let client = MockBackend::default();
    let params = GenerationParams::default();

    let topics = elicit_topics(&client, &params, "disease", 250, &ElicitOptions::default())?;
    println!("{} topics in {} calls, shortfall {}", topics.set.len(), topics.calls, topics.shortfall);
    for item in topics.set.items().iter().take(5) {
        println!("  {item}");
    }

    let task = load_tasks(&data.join("tasks.toml"))?.into_iter().find(|t| t.id == "ncbi_disease").expect("bundled task");
    let demos = FewShotSet::load(&data.join("few_shot/ncbi_disease.json"))?;
    let styles = elicit_styles(&client, &params, &TemplatePack::builtin(), &task, &demos, None)?;
    print!("{}", styles.set.to_jsonl());
    Ok(())
}
