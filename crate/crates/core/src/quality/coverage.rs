use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::QualityError;
use crate::kg::EntityLexicon;
use crate::text::{normalize, tokenize};

/// Token-level dictionary over a lexicon's surface forms.
#[derive(Debug, Clone)]
pub struct EntityMatcher {
    forms: HashMap<Vec<String>, String>,
    max_len: usize,
    lexicon_size: usize,
    names: BTreeMap<String, String>,
}

/// Occurrences of one lexicon entity in one text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Match {
    pub entity_id: String,
    /// Token range in the normalized text.
    pub start: usize,
    pub end: usize,
}

impl EntityMatcher {
    pub fn new(lexicon: &EntityLexicon) -> Self {
        let mut forms = HashMap::new();
        let mut names = BTreeMap::new();
        let mut max_len = 0;
        for (surface, entry) in lexicon.iter() {
            let toks: Vec<String> = tokenize(surface).into_iter().map(str::to_string).collect();
            if toks.is_empty() {
                continue;
            }
            max_len = max_len.max(toks.len());
            forms.entry(toks).or_insert_with(|| entry.node_id.clone());
            names.entry(entry.node_id.clone()).or_insert_with(|| entry.canonical_name.clone());
        }
        Self { forms, max_len, lexicon_size: lexicon.entity_count(), names }
    }

    pub fn lexicon_size(&self) -> usize {
        self.lexicon_size
    }

    pub fn display_name(&self, entity_id: &str) -> Option<&str> {
        self.names.get(entity_id).map(String::as_str)
    }

    /// Leftmost-longest, non-overlapping matches on token boundaries of the
    /// normalized text.
    pub fn find(&self, text: &str) -> Vec<Match> {
        let norm = normalize(text);
        let toks: Vec<String> = tokenize(&norm).into_iter().map(str::to_string).collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < toks.len() {
            let longest = (1..=self.max_len.min(toks.len() - i))
                .rev()
                .find_map(|len| self.forms.get(&toks[i..i + len]).map(|id| (len, id)));
            match longest {
                Some((len, id)) => {
                    out.push(Match { entity_id: id.clone(), start: i, end: i + len });
                    i += len;
                }
                None => i += 1,
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    /// Occurrences per matched entity id.
    pub counts: BTreeMap<String, u64>,
    pub lexicon_size: usize,
    pub texts_scanned: usize,
}

impl Coverage {
    pub fn distinct_matched(&self) -> usize {
        self.counts.len()
    }

    pub fn total_matches(&self) -> u64 {
        self.counts.values().sum()
    }

    /// `distinct_matched / lexicon_size`.
    pub fn fraction(&self) -> f64 {
        if self.lexicon_size == 0 {
            0.0
        } else {
            self.distinct_matched() as f64 / self.lexicon_size as f64
        }
    }

    pub fn merge(&mut self, other: Coverage) {
        for (k, v) in other.counts {
            *self.counts.entry(k).or_default() += v;
        }
        self.texts_scanned += other.texts_scanned;
    }
}

/// Counts lexicon entities across `texts`, splitting the work over threads.
pub fn entity_coverage<S: AsRef<str> + Sync>(texts: &[S], matcher: &EntityMatcher) -> Coverage {
    let workers = std::thread::available_parallelism().map_or(1, |p| p.get()).min(texts.len()).max(1);
    let chunk = texts.len().div_ceil(workers).max(1);
    let parts: Vec<Coverage> = std::thread::scope(|s| {
        let handles: Vec<_> = texts
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    let mut c = Coverage { texts_scanned: part.len(), ..Default::default() };
                    for t in part {
                        for m in matcher.find(t.as_ref()) {
                            *c.counts.entry(m.entity_id).or_default() += 1;
                        }
                    }
                    c
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("matcher thread panicked")).collect()
    });
    let mut total = Coverage { lexicon_size: matcher.lexicon_size(), ..Default::default() };
    for p in parts {
        total.merge(p);
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    /// 1-based, by descending count.
    pub rank: usize,
    pub entity_id: String,
    pub count: u64,
    pub frequency: f64,
}

/// Counts divided by their total, most frequent first (ties by id).
pub fn entity_frequency(coverage: &Coverage) -> Result<Vec<FrequencyRow>, QualityError> {
    let total = coverage.total_matches();
    if total == 0 {
        return Err(QualityError::EmptySupport);
    }
    let mut rows: Vec<(&String, u64)> = coverage.counts.iter().map(|(k, v)| (k, *v)).collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(i, (id, count))| FrequencyRow {
            rank: i + 1,
            entity_id: id.clone(),
            count,
            frequency: count as f64 / total as f64,
        })
        .collect())
}
