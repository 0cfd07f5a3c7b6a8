use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::QualityError;
use crate::llm::{ApiKey, AttemptRecord, RetryPolicy, RetryingEndpoint, Sleeper, ThreadSleeper, Transport, UreqTransport};
use crate::promptkit::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    File,
    HttpEndpoint,
}

/// Row-aligned ids and vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    pub ids: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
    pub provider: ProviderKind,
    pub model: String,
}

impl EmbeddingSet {
    pub fn new(
        ids: Vec<String>,
        vectors: Vec<Vec<f64>>,
        provider: ProviderKind,
        model: impl Into<String>,
    ) -> Result<Self, QualityError> {
        let s = Self { ids, vectors, provider, model: model.into() };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<(), QualityError> {
        if self.ids.len() != self.vectors.len() {
            return Err(QualityError::Invalid(format!("{} ids for {} vectors", self.ids.len(), self.vectors.len())));
        }
        let d = self.dim();
        for (id, v) in self.ids.iter().zip(&self.vectors) {
            if v.is_empty() || v.len() != d {
                return Err(QualityError::Dimension(format!("vector {id} has {} values, expected {d}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(QualityError::NonFinite(id.clone()));
            }
        }
        Ok(())
    }
}

/// One text to embed or match.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextItem {
    pub id: String,
    pub text: String,
}

fn str_field<'a>(v: &'a serde_json::Value, keys: &[&str]) -> Option<&'a str> {
    keys.iter().find_map(|k| v.get(*k).and_then(|x| x.as_str()))
}

/// Reads texts from JSONL. Each line needs an id (`record_id` or `id`) and
/// a text (`text_primary` or `text`); a `text_secondary`, when present, is
/// appended on a new line. Dataset files and plain `{id, text}` files both
/// work.
pub fn load_texts(path: &Path) -> Result<Vec<TextItem>, QualityError> {
    let file = std::fs::File::open(path).map_err(|e| QualityError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| QualityError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| QualityError::Data(format!("{}:{}: {m}", path.display(), n + 1));
        let v: serde_json::Value = serde_json::from_str(&line).map_err(|e| bad(&e.to_string()))?;
        let id = str_field(&v, &["record_id", "id"]).ok_or_else(|| bad("no record_id or id"))?;
        let text = str_field(&v, &["text_primary", "text"]).ok_or_else(|| bad("no text_primary or text"))?;
        let text = match str_field(&v, &["text_secondary"]) {
            Some(s) => format!("{text}\n{s}"),
            None => text.to_string(),
        };
        out.push(TextItem { id: id.to_string(), text });
    }
    Ok(out)
}

#[derive(Deserialize)]
struct JsonlVector {
    id: String,
    vector: Vec<f64>,
}

/// Reads `{id, vector}` JSONL or `id\tv1\t...\tvd` TSV, chosen by the
/// first non-blank character.
pub fn load_vectors(path: &Path) -> Result<HashMap<String, Vec<f64>>, QualityError> {
    let raw = std::fs::read_to_string(path).map_err(|e| QualityError::io(path, e))?;
    let jsonl = raw.trim_start().starts_with('{');
    let mut out = HashMap::new();
    for (n, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: String| QualityError::Data(format!("{}:{}: {m}", path.display(), n + 1));
        let (id, vector) = if jsonl {
            let r: JsonlVector = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            (r.id, r.vector)
        } else {
            let mut cols = line.split('\t');
            let id = cols.next().unwrap_or_default().to_string();
            let vector =
                cols.map(|c| c.trim().parse::<f64>().map_err(|e| bad(format!("{c:?}: {e}")))).collect::<Result<Vec<_>, _>>()?;
            (id, vector)
        };
        if out.insert(id.clone(), vector).is_some() {
            return Err(bad(format!("duplicate id {id}")));
        }
    }
    Ok(out)
}

/// Picks the vectors for `ids`, in order.
pub fn align(
    ids: &[String],
    vectors: &HashMap<String, Vec<f64>>,
    provider: ProviderKind,
    model: &str,
) -> Result<EmbeddingSet, QualityError> {
    let missing: Vec<String> = ids.iter().filter(|id| !vectors.contains_key(*id)).cloned().collect();
    if !missing.is_empty() {
        return Err(QualityError::MissingVectors(missing));
    }
    let rows = ids.iter().map(|id| vectors[id].clone()).collect();
    EmbeddingSet::new(ids.to_vec(), rows, provider, model)
}

pub fn embed_from_file(items: &[TextItem], path: &Path, model: &str) -> Result<EmbeddingSet, QualityError> {
    let ids: Vec<String> = items.iter().map(|t| t.id.clone()).collect();
    align(&ids, &load_vectors(path)?, ProviderKind::File, model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingEndpointConfig {
    /// Full URL receiving `POST {"texts": [...]}`.
    pub url: String,
    pub model: String,
    pub batch_size: usize,
    pub timeout_s: f64,
    /// Environment variable holding an optional bearer token.
    pub api_key_env: Option<String>,
    pub cache_dir: Option<PathBuf>,
}

impl Default for EmbeddingEndpointConfig {
    fn default() -> Self {
        Self {
            url: "http://localhost:8080/embed".into(),
            model: "all-MiniLM-L6-v2".into(),
            batch_size: 64,
            timeout_s: 60.0,
            api_key_env: None,
            cache_dir: None,
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: String,
    vector: Vec<f64>,
}

/// HTTP embedding provider with an on-disk cache keyed by model, record id
/// and text hash.
pub struct EmbeddingEndpoint {
    endpoint: RetryingEndpoint,
    model: String,
    batch_size: usize,
    cache_path: Option<PathBuf>,
    attempt_log: Mutex<Vec<AttemptRecord>>,
}

impl EmbeddingEndpoint {
    pub fn new(config: &EmbeddingEndpointConfig) -> Self {
        let timeout = Duration::try_from_secs_f64(config.timeout_s).unwrap_or(Duration::from_secs(60));
        Self {
            endpoint: RetryingEndpoint {
                url: config.url.clone(),
                api_key: config.api_key_env.as_deref().and_then(ApiKey::from_env),
                retry: RetryPolicy::default(),
                transport: Arc::new(UreqTransport::new(timeout)),
                sleeper: Arc::new(ThreadSleeper),
            },
            model: config.model.clone(),
            batch_size: config.batch_size.max(1),
            cache_path: config.cache_dir.as_ref().map(|d| d.join("embeddings-cache.jsonl")),
            attempt_log: Mutex::default(),
        }
    }

    pub fn with_transport(mut self, transport: Arc<dyn Transport>) -> Self {
        self.endpoint.transport = transport;
        self
    }

    pub fn with_sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.endpoint.sleeper = sleeper;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.endpoint.retry = retry;
        self
    }

    pub fn attempt_log(&self) -> Vec<AttemptRecord> {
        self.attempt_log.lock().expect("poisoned").clone()
    }

    fn cache_key(&self, item: &TextItem) -> String {
        sha256_hex(&format!("{}\u{0}{}\u{0}{}", self.model, item.id, sha256_hex(&item.text)))
    }

    fn read_cache(&self) -> Result<BTreeMap<String, Vec<f64>>, QualityError> {
        let mut out = BTreeMap::new();
        let Some(path) = &self.cache_path else { return Ok(out) };
        let Ok(raw) = std::fs::read_to_string(path) else { return Ok(out) };
        for line in raw.lines().filter(|l| !l.trim().is_empty()) {
            match serde_json::from_str::<CacheLine>(line) {
                Ok(c) => {
                    out.insert(c.key, c.vector);
                }
                Err(e) => log::warn!("{}: skipping bad cache line: {e}", path.display()),
            }
        }
        Ok(out)
    }

    fn append_cache(&self, lines: &[CacheLine]) -> Result<(), QualityError> {
        let Some(path) = &self.cache_path else { return Ok(()) };
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| QualityError::io(dir, e))?;
        }
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path).map_err(|e| QualityError::io(path, e))?;
        for l in lines {
            writeln!(f, "{}", serde_json::to_string(l).expect("serializes")).map_err(|e| QualityError::io(path, e))?;
        }
        Ok(())
    }

    /// Embeds every item, calling the endpoint only for cache misses.
    pub fn embed(&self, items: &[TextItem]) -> Result<EmbeddingSet, QualityError> {
        let mut cache = self.read_cache()?;
        let keys: Vec<String> = items.iter().map(|i| self.cache_key(i)).collect();
        let misses: Vec<usize> = (0..items.len()).filter(|&i| !cache.contains_key(&keys[i])).collect();
        let mut dim = cache.values().next().map(Vec::len);
        for batch in misses.chunks(self.batch_size) {
            let texts: Vec<&str> = batch.iter().map(|&i| items[i].text.as_str()).collect();
            let body = serde_json::to_string(&EmbedRequest { texts: &texts }).expect("serializes");
            let mut log = Vec::new();
            let posted = self.endpoint.post(&body, &mut log);
            self.attempt_log.lock().expect("poisoned").extend(log);
            let (reply, _) = posted.map_err(|e| QualityError::Transport(e.to_string()))?;
            let resp: EmbedResponse =
                serde_json::from_str(&reply).map_err(|e| QualityError::Data(format!("embedding response: {e}")))?;
            if resp.vectors.len() != batch.len() {
                return Err(QualityError::Data(format!("sent {} texts, got {} vectors", batch.len(), resp.vectors.len())));
            }
            let mut fresh = Vec::with_capacity(batch.len());
            for (&i, v) in batch.iter().zip(resp.vectors) {
                match dim {
                    Some(d) if d != v.len() => {
                        return Err(QualityError::Dimension(format!(
                            "vector for {} has {} values, earlier ones {d}",
                            items[i].id,
                            v.len()
                        )))
                    }
                    _ => dim = Some(v.len()),
                }
                fresh.push(CacheLine { key: keys[i].clone(), vector: v });
            }
            self.append_cache(&fresh)?;
            cache.extend(fresh.into_iter().map(|c| (c.key, c.vector)));
        }
        let ids = items.iter().map(|i| i.id.clone()).collect();
        let rows = keys.iter().map(|k| cache[k].clone()).collect();
        EmbeddingSet::new(ids, rows, ProviderKind::HttpEndpoint, &self.model)
    }
}
