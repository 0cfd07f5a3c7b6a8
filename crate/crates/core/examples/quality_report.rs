//! Compare two mock datasets: CMD and APS over toy bag-of-words vectors,
//! plus entity coverage against the disease lexicon.
//!
//!     cargo run --example quality_report

use std::path::Path;

use synthkit::elicit::manual_styles;
use synthkit::genpipe::{run_generation, RunConfig, RunInputs, TopicSupply};
use synthkit::kg::{build_lexicon, load_kg, ColumnMap};
use synthkit::llm::MockBackend;
use synthkit::promptkit::TemplatePack;
use synthkit::quality::{analyze, AnalyzeConfig, AnalyzeInputs, EmbeddingSet, EntityMatcher, ProviderKind, TextItem};
use synthkit::task::load_tasks;
use synthkit::text::tokenize;
use synthkit::PromptMode;

/// Hashed bag of words; a stand-in for a sentence encoder.
fn embed(items: &[TextItem]) -> EmbeddingSet {
    let vectors = items
        .iter()
        .map(|t| {
            let mut v = vec![0.0; 16];
            for tok in tokenize(&t.text.to_lowercase()) {
                let h = tok.bytes().fold(7u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
                v[(h % 16) as usize] += 1.0;
            }
            v
        })
        .collect();
    EmbeddingSet::new(items.iter().map(|t| t.id.clone()).collect(), vectors, ProviderKind::File, "bag-of-words").unwrap()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let kg = load_kg(&data.join("kg/nodes.tsv"), &data.join("kg/edges.tsv"), &ColumnMap::default())?;
    let task = load_tasks(&data.join("tasks.toml"))?.into_iter().find(|t| t.id == "ncbi_disease").expect("bundled task");
    let styles = manual_styles(&task.id, &["medical literature".into()])?;
    let pack = TemplatePack::builtin();
    let run = |mode: PromptMode, seed: u64| -> Result<Vec<TextItem>, Box<dyn std::error::Error>> {
        let config = RunConfig { task_id: task.id.clone(), n_total: 60, mode, seed, ..Default::default() };
        let inputs = RunInputs {
            task: &task,
            pack: &pack,
            topics: TopicSupply::Kg(&kg),
            styles: Some(&styles),
            demos: None,
            prices: None,
        };
        let out = run_generation(&config, &inputs, &MockBackend::default())?;
        Ok(out.records.into_iter().map(|r| TextItem { id: r.record_id, text: r.text_primary }).collect())
    };
    let synthetic = run(PromptMode::KnowledgeInfused, 1)?;
    let reference = run(PromptMode::Plain, 2)?;
    let (se, re) = (embed(&synthetic), embed(&reference));
    let matcher = EntityMatcher::new(&build_lexicon(&kg, &["disease".to_string()])?);

    let report = analyze(
        &AnalyzeConfig::default(),
        &AnalyzeInputs {
            dataset: &synthetic,
            reference: Some(&reference),
            dataset_embeddings: Some(&se),
            reference_embeddings: Some(&re),
            matcher: Some(&matcher),
        },
    )?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
