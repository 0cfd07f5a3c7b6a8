use std::fmt;

use rand::Rng;

use super::{KgError, KnowledgeGraph, Topic, TopicSource};

/// Relation filter for pair sampling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RelationPattern {
    Any,
    Exact(String),
}

impl RelationPattern {
    pub fn parse(s: &str) -> Self {
        match s {
            "*" | "" => RelationPattern::Any,
            r => RelationPattern::Exact(r.to_string()),
        }
    }

    pub fn matches(&self, relation: &str) -> bool {
        match self {
            RelationPattern::Any => true,
            RelationPattern::Exact(r) => r == relation,
        }
    }
}

impl fmt::Display for RelationPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelationPattern::Any => f.write_str("*"),
            RelationPattern::Exact(r) => f.write_str(r),
        }
    }
}

fn entity_topic(kg: &KnowledgeGraph, id: &str) -> Topic {
    let n = kg.node(id).expect("indexed node exists");
    Topic::entity(n.name.clone(), n.node_type.clone(), TopicSource::Kg)
}

/// Draws `n` entity topics uniformly, with replacement, from the nodes of
/// one type.
pub fn sample_entity_topics<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    entity_type: &str,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Topic>, KgError> {
    sample_entity_topics_among(kg, &[entity_type.to_string()], n, rng)
}

/// Draws `n` entity topics uniformly, with replacement, from the union of the
/// nodes of several types.
pub fn sample_entity_topics_among<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    entity_types: &[String],
    n: usize,
    rng: &mut R,
) -> Result<Vec<Topic>, KgError> {
    if n == 0 {
        return Err(KgError::ZeroCount);
    }
    let mut pool: Vec<&str> = Vec::new();
    let mut types: Vec<&String> = entity_types.iter().collect();
    types.sort();
    types.dedup();
    for t in types {
        pool.extend(kg.nodes_of_type(t)?.iter().map(String::as_str));
    }
    Ok((0..n).map(|_| entity_topic(kg, pool[rng.random_range(0..pool.len())])).collect())
}

/// Draws `n` pair topics uniformly, with replacement, from the edges matching
/// `(head_type, relation, tail_type)`.
pub fn sample_pair_topics<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    head_type: &str,
    relation: &RelationPattern,
    tail_type: &str,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Topic>, KgError> {
    if n == 0 {
        return Err(KgError::ZeroCount);
    }
    let matching = kg.edges_matching(head_type, relation, tail_type);
    if matching.is_empty() {
        return Err(KgError::NoMatchingEdge {
            pattern: format!("({head_type}, {relation}, {tail_type})"),
            nearest: nearest_patterns(kg, head_type, relation, tail_type),
        });
    }
    Ok((0..n)
        .map(|_| {
            let e = &kg.edges()[matching[rng.random_range(0..matching.len())]];
            Topic::pair(&entity_topic(kg, &e.head_id), &entity_topic(kg, &e.tail_id), Some(e.relation.clone()))
        })
        .collect())
}

fn nearest_patterns(kg: &KnowledgeGraph, head: &str, relation: &RelationPattern, tail: &str) -> Vec<String> {
    let mut scored: Vec<(usize, String)> = kg
        .patterns()
        .map(|((h, r, t), _)| {
            let score = (h == head) as usize + relation.matches(r) as usize + (t == tail) as usize;
            (score, format!("({h}, {r}, {t})"))
        })
        .collect();
    // stable sort keeps the lexicographic pattern order among equal scores
    scored.sort_by_key(|s| std::cmp::Reverse(s.0));
    scored.into_iter().take(5).map(|(_, p)| p).collect()
}

/// Two independently drawn entities of the given types that share no edge,
/// for labels asserting the absence of a relation. Falls back to the last
/// draw if every retry lands on a linked pair.
pub fn sample_unrelated_pair<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    head_type: &str,
    tail_type: &str,
    rng: &mut R,
) -> Result<Topic, KgError> {
    let heads = kg.nodes_of_type(head_type)?;
    let tails = kg.nodes_of_type(tail_type)?;
    let mut pick = || (heads[rng.random_range(0..heads.len())].as_str(), tails[rng.random_range(0..tails.len())].as_str());
    let mut pair = pick();
    for _ in 0..16 {
        if pair.0 != pair.1 && !kg.linked(pair.0, pair.1) {
            break;
        }
        pair = pick();
    }
    Ok(Topic::pair(&entity_topic(kg, pair.0), &entity_topic(kg, pair.1), None))
}
