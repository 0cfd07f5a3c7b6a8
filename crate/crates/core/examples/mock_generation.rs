//! Generate a small dataset per task with the mock backend and write the
//! run outputs.
//!
//!     cargo run --example mock_generation -- [out_dir]

use std::path::{Path, PathBuf};

use synthkit::elicit::manual_styles;
use synthkit::genpipe::{run_generation, write_run, RunConfig, RunInputs, TopicSupply};
use synthkit::kg::{load_kg, ColumnMap};
use synthkit::llm::{MockBackend, PriceTable};
use synthkit::promptkit::TemplatePack;
use synthkit::task::load_tasks;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let out_root = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("synthkit-example"));
    let kg = load_kg(&data.join("kg/nodes.tsv"), &data.join("kg/edges.tsv"), &ColumnMap::default())?;
    let styles = manual_styles("any", &["medical literature".into(), "patient-doctor dialogues".into()])?;
    let prices = PriceTable::load(&data.join("prices.toml"))?;
    let pack = TemplatePack::builtin();

    for task in load_tasks(&data.join("tasks.toml"))? {
        let config = RunConfig { task_id: task.id.clone(), n_total: 20, seed: 7, ..Default::default() };
        let inputs = RunInputs {
            task: &task,
            pack: &pack,
            topics: TopicSupply::Kg(&kg),
            styles: Some(&styles),
            demos: None,
            prices: Some(&prices),
        };
        let out = run_generation(&config, &inputs, &MockBackend::default())?;
        let paths = write_run(&out, &out_root.join(&task.id))?;
        let c = &out.manifest.counts;
        println!(
            "{:<14} valid {:>3}  rejected {:>2}  calls {:>3}  cost ${}  -> {}",
            task.id,
            c.valid,
            c.rejected_final,
            c.llm_calls,
            out.manifest.cost_usd.unwrap_or_default(),
            paths.dataset.display()
        );
        println!("    {}", out.records[0].text_primary);
    }
    Ok(())
}
