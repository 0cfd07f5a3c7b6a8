//! Load the bundled knowledge graph, sample topics and export a lexicon.
//!
//!     cargo run --example kg_topics

use std::path::Path;

use synthkit::kg::{build_lexicon, load_kg, sample_entity_topics, sample_pair_topics, ColumnMap, RelationPattern};
use synthkit::rng::tags;
use synthkit::SeededRng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/kg");
    let kg = load_kg(&data.join("nodes.tsv"), &data.join("edges.tsv"), &ColumnMap::default())?;
    println!("{:?}", kg.stats());
    println!("types: {:?}", kg.types());
    for (pattern, count) in kg.patterns() {
        println!("  {pattern:?}: {count}");
    }

    let seed = SeededRng::new(42);
    let mut rng = seed.substream(&[tags::TOPIC]);
    for t in sample_entity_topics(&kg, "disease", 5, &mut rng)? {
        println!("entity topic: {} ({})", t.primary_name, t.entity_type);
    }
    let treats = RelationPattern::parse("treats");
    for t in sample_pair_topics(&kg, "drug", &treats, "disease", 3, &mut rng)? {
        println!(
            "pair topic: {} -[{}]-> {}",
            t.primary_name,
            t.relation.unwrap_or_default(),
            t.secondary_name.unwrap_or_default()
        );
    }

    let lex = build_lexicon(&kg, &["disease".to_string()])?;
    print!("{}", lex.to_tsv());
    Ok(())
}
