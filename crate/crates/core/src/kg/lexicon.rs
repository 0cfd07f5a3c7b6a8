use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{KgError, KnowledgeGraph};
use crate::text::normalize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub node_id: String,
    /// Name as it appears in the source, for display.
    pub canonical_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Collision {
    pub surface_form: String,
    pub kept: String,
    pub dropped: String,
}

/// Normalized surface form → canonical entity. The reference vocabulary for
/// coverage and frequency metrics.
#[derive(Debug, Clone, Default)]
pub struct EntityLexicon {
    entries: BTreeMap<String, LexiconEntry>,
    collisions: Vec<Collision>,
}

impl EntityLexicon {
    /// Inserts `(name, id)` pairs in order; on a normalized-form collision the
    /// first id wins and the collision is recorded.
    pub fn from_names<I, N, D>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (N, D)>,
        N: AsRef<str>,
        D: Into<String>,
    {
        let mut lex = Self::default();
        for (name, id) in pairs {
            lex.insert(name.as_ref(), id.into());
        }
        lex
    }

    fn insert(&mut self, name: &str, node_id: String) {
        let key = normalize(name);
        if key.is_empty() {
            return;
        }
        if let Some(existing) = self.entries.get(&key) {
            if existing.node_id != node_id {
                log::warn!("lexicon collision on {key:?}: keeping {}, dropping {node_id}", existing.node_id);
                self.collisions.push(Collision { surface_form: key, kept: existing.node_id.clone(), dropped: node_id });
            }
            return;
        }
        self.entries.insert(key, LexiconEntry { node_id, canonical_name: name.to_string() });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn collisions(&self) -> &[Collision] {
        &self.collisions
    }

    /// Looks up any surface form after normalization.
    pub fn lookup(&self, surface: &str) -> Option<&LexiconEntry> {
        self.entries.get(&normalize(surface))
    }

    /// Normalized surface forms with their entries, in sorted order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &LexiconEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Number of distinct entity ids.
    pub fn entity_count(&self) -> usize {
        let mut ids: Vec<&str> = self.entries.values().map(|e| e.node_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Two-column TSV with header `surface_form\tnode_id`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("surface_form\tnode_id\n");
        for (k, v) in &self.entries {
            writeln!(out, "{k}\t{}", v.node_id).unwrap();
        }
        out
    }

    pub fn export_tsv(&self, path: &Path) -> Result<(), KgError> {
        std::fs::write(path, self.to_tsv()).map_err(|source| KgError::Io { path: path.to_path_buf(), source })
    }

    pub fn load_tsv(path: &Path) -> Result<Self, KgError> {
        let raw = std::fs::read_to_string(path).map_err(|source| KgError::Io { path: path.to_path_buf(), source })?;
        let mut pairs = Vec::new();
        for (i, line) in raw.lines().enumerate() {
            if i == 0 && line.starts_with("surface_form") || line.trim().is_empty() {
                continue;
            }
            let (surface, id) = line.split_once('\t').ok_or_else(|| KgError::LexiconFormat {
                path: path.to_path_buf(),
                line: i + 1,
                message: "expected two tab-separated columns".into(),
            })?;
            pairs.push((surface.to_string(), id.trim().to_string()));
        }
        let lex = Self::from_names(pairs);
        if lex.is_empty() {
            return Err(KgError::EmptyLexicon(vec![]));
        }
        Ok(lex)
    }
}

/// Builds the lexicon from every node of the given types, visiting types in
/// the given order and nodes in id order.
pub fn build_lexicon(kg: &KnowledgeGraph, entity_types: &[String]) -> Result<EntityLexicon, KgError> {
    let mut pairs = Vec::new();
    for t in entity_types {
        for id in kg.nodes_of_type(t)? {
            pairs.push((kg.node(id).unwrap().name.clone(), id.clone()));
        }
    }
    let lex = EntityLexicon::from_names(pairs);
    if lex.is_empty() {
        return Err(KgError::EmptyLexicon(entity_types.to_vec()));
    }
    Ok(lex)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::node;
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn case_variants_collide_once() {
        let kg = KnowledgeGraph::from_parts(vec![node("a", "Stroke", "d"), node("b", "stroke", "d")], vec![]).unwrap();
        let lex = build_lexicon(&kg, &["d".into()]).unwrap();
        assert_eq!(lex.len(), 1);
        assert_eq!(lex.collisions().len(), 1);
        assert_eq!(lex.lookup("STROKE").unwrap().node_id, "a");
    }

    #[test]
    fn whitespace_collapsed_key() {
        let kg = KnowledgeGraph::from_parts(vec![node("a", "  heart  failure ", "d")], vec![]).unwrap();
        let lex = build_lexicon(&kg, &["d".into()]).unwrap();
        assert_eq!(lex.iter().next().unwrap().0, "heart failure");
    }

    #[test]
    fn size_matches_distinct_normalized_names() {
        let words = ["Alpha", "beta", "GAMMA", "delta"];
        let mut nodes = Vec::new();
        for i in 0..1000 {
            let w = words[i % 4];
            let name = match i % 3 {
                0 => format!("{w} {}", i % 250),
                1 => format!(" {} {}", w.to_uppercase(), i % 250),
                _ => format!("{}   {}", w.to_lowercase(), i % 250),
            };
            nodes.push(node(&format!("n{i}"), &name, "t"));
        }
        let names: Vec<String> = nodes.iter().map(|n| n.name.clone()).collect();
        let kg = KnowledgeGraph::from_parts(nodes, vec![]).unwrap();
        let lex = build_lexicon(&kg, &["t".into()]).unwrap();
        let oracle: BTreeSet<String> =
            names.iter().map(|n| n.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")).collect();
        assert_eq!(lex.len(), oracle.len());
        for n in kg.nodes() {
            assert!(lex.lookup(&n.name).is_some());
        }
    }

    #[test]
    fn tsv_round_trip() {
        let lex = EntityLexicon::from_names([("heart failure", "D1"), ("stroke", "D2")]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lex.tsv");
        lex.export_tsv(&p).unwrap();
        let back = EntityLexicon::load_tsv(&p).unwrap();
        assert_eq!(back.to_tsv(), lex.to_tsv());
    }
}
