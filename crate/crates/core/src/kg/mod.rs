//! Typed knowledge graph: delimited-file ingestion, topic sampling, and the
//! entity lexicon used for coverage metrics.

mod lexicon;
mod load;
mod sample;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use lexicon::{build_lexicon, Collision, EntityLexicon, LexiconEntry};
pub use load::{load_kg, ColumnMap};
pub use sample::{sample_entity_topics, sample_entity_topics_among, sample_pair_topics, sample_unrelated_pair, RelationPattern};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub name: String,
    #[serde(rename = "type")]
    pub node_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub head_id: String,
    pub relation: String,
    pub tail_id: String,
}

/// `(head_type, relation, tail_type)`.
pub type EdgePattern = (String, String, String);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadStats {
    pub nodes: usize,
    pub edges: usize,
    /// Edges with an endpoint missing from the node table.
    pub dropped_edges: usize,
    /// Nodes whose name is empty after normalization.
    pub skipped_nodes: usize,
}

/// Immutable after construction. Node ids, per-type node lists and edges are
/// kept sorted so sampling never depends on input row order.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    nodes: BTreeMap<String, Node>,
    edges: Vec<Edge>,
    by_type: BTreeMap<String, Vec<String>>,
    by_pattern: BTreeMap<EdgePattern, Vec<usize>>,
    stats: LoadStats,
}

#[derive(Debug, thiserror::Error)]
pub enum KgError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("{path}: missing mapped column {column:?}")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{0}: node file has no nodes")]
    EmptyNodes(PathBuf),
    #[error("duplicate node id {0:?}")]
    DuplicateNode(String),
    #[error("unknown entity type {requested:?}; available types: {}", available.join(", "))]
    UnknownType { requested: String, available: Vec<String> },
    #[error("no edge matches {pattern}; nearest patterns: {}", nearest.join("; "))]
    NoMatchingEdge { pattern: String, nearest: Vec<String> },
    #[error("sample count must be at least 1")]
    ZeroCount,
    #[error("lexicon is empty for types {0:?}")]
    EmptyLexicon(Vec<String>),
    #[error("lexicon {path} line {line}: {message}")]
    LexiconFormat { path: PathBuf, line: usize, message: String },
}

impl KgError {
    /// Configuration problems, as opposed to problems with the data itself.
    pub fn is_config(&self) -> bool {
        matches!(self, KgError::MissingColumn { .. } | KgError::Io { .. })
    }
}

impl KnowledgeGraph {
    /// Builds the graph and its indices. Duplicate node ids are an error;
    /// edges with unknown endpoints and nodes with blank names are dropped
    /// and counted.
    pub fn from_parts(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self, KgError> {
        let mut stats = LoadStats::default();
        let mut node_map = BTreeMap::new();
        for n in nodes {
            if crate::text::normalize(&n.name).is_empty() {
                stats.skipped_nodes += 1;
                continue;
            }
            if node_map.contains_key(&n.id) {
                return Err(KgError::DuplicateNode(n.id));
            }
            node_map.insert(n.id.clone(), n);
        }
        let mut kept: Vec<Edge> = edges
            .into_iter()
            .filter(|e| {
                let ok = node_map.contains_key(&e.head_id) && node_map.contains_key(&e.tail_id);
                if !ok {
                    stats.dropped_edges += 1;
                }
                ok
            })
            .collect();
        kept.sort();

        let mut by_type: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for n in node_map.values() {
            by_type.entry(n.node_type.clone()).or_default().push(n.id.clone());
        }
        let mut by_pattern: BTreeMap<EdgePattern, Vec<usize>> = BTreeMap::new();
        for (i, e) in kept.iter().enumerate() {
            let key = (node_map[&e.head_id].node_type.clone(), e.relation.clone(), node_map[&e.tail_id].node_type.clone());
            by_pattern.entry(key).or_default().push(i);
        }
        stats.nodes = node_map.len();
        stats.edges = kept.len();
        Ok(Self { nodes: node_map, edges: kept, by_type, by_pattern, stats })
    }

    pub fn stats(&self) -> LoadStats {
        self.stats
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn types(&self) -> Vec<String> {
        self.by_type.keys().cloned().collect()
    }

    /// Node ids of the given type, sorted.
    pub fn nodes_of_type(&self, entity_type: &str) -> Result<&[String], KgError> {
        self.by_type
            .get(entity_type)
            .map(Vec::as_slice)
            .ok_or_else(|| KgError::UnknownType { requested: entity_type.to_string(), available: self.types() })
    }

    pub fn patterns(&self) -> impl Iterator<Item = (&EdgePattern, usize)> {
        self.by_pattern.iter().map(|(k, v)| (k, v.len()))
    }

    pub(crate) fn edges_matching(&self, head_type: &str, relation: &RelationPattern, tail_type: &str) -> Vec<usize> {
        self.by_pattern
            .iter()
            .filter(|((h, r, t), _)| h == head_type && t == tail_type && relation.matches(r))
            .flat_map(|(_, v)| v.iter().copied())
            .collect()
    }

    pub(crate) fn linked(&self, a: &str, b: &str) -> bool {
        self.has_edge_from(a, b) || self.has_edge_from(b, a)
    }

    /// Edges are sorted by head id, so the edges leaving `head` are one
    /// contiguous run.
    fn has_edge_from(&self, head: &str, tail: &str) -> bool {
        let start = self.edges.partition_point(|e| e.head_id.as_str() < head);
        self.edges[start..].iter().take_while(|e| e.head_id == head).any(|e| e.tail_id == tail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TopicKind {
    Entity,
    EntityPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TopicSource {
    #[serde(rename = "KG")]
    Kg,
    #[serde(rename = "LLM")]
    Llm,
}

/// A clinical entity or related entity pair injected into a prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topic {
    pub kind: TopicKind,
    pub primary_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secondary_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<String>,
    pub entity_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secondary_entity_type: Option<String>,
    pub source: TopicSource,
}

impl Topic {
    pub fn entity(name: impl Into<String>, entity_type: impl Into<String>, source: TopicSource) -> Self {
        Self {
            kind: TopicKind::Entity,
            primary_name: name.into(),
            secondary_name: None,
            relation: None,
            entity_type: entity_type.into(),
            secondary_entity_type: None,
            source,
        }
    }

    pub fn pair(head: &Topic, tail: &Topic, relation: Option<String>) -> Self {
        Self {
            kind: TopicKind::EntityPair,
            primary_name: head.primary_name.clone(),
            secondary_name: Some(tail.primary_name.clone()),
            relation,
            entity_type: head.entity_type.clone(),
            secondary_entity_type: Some(tail.entity_type.clone()),
            source: head.source,
        }
    }

    /// `kind = EntityPair` iff a secondary name is present.
    pub fn is_well_formed(&self) -> bool {
        (self.kind == TopicKind::EntityPair) == self.secondary_name.is_some()
    }
}
