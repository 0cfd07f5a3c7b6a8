//! End-to-end dataset synthesis.
//!
//! Every record slot `i` gets label `labels[i % L]`. Its topic, style and
//! the backend stream key are drawn from substreams keyed by
//! `(i, attempt, purpose)`, so the output does not depend on how many
//! workers run or in which order slots finish.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::Rng;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::dataset::{write_dataset, DatasetError, PromptMode, SyntheticRecord};
use crate::elicit::CandidateSet;
use crate::kg::{sample_unrelated_pair, KgError, KnowledgeGraph, RelationPattern, Topic, TopicSource};
use crate::llm::{CompletionRequest, CostError, CostLedger, GenerationParams, LlmClient, LlmError, PriceTable, TokenUsage};
use crate::parsing::{parse_pair, parse_reply, validate, ParsedPayload, RejectReason, Rejection};
use crate::promptkit::{compose, sha256_hex, ComposeInput, Composition, PromptError, TemplatePack};
use crate::rng::{tags, SeededRng, Substream};
use crate::task::{FewShotSet, LabelDef, TaskFamily, TaskSpec};

pub const DEFAULT_N_TOTAL: usize = 5000;
pub const DEFAULT_SHOTS_PER_LABEL: usize = 5;
pub const DEFAULT_MAX_REGEN_ATTEMPTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task_id: String,
    pub n_total: usize,
    pub shots_per_label: usize,
    pub mode: PromptMode,
    pub topic_source: TopicSource,
    /// Relation filter for knowledge-graph pair topics (`*` for any).
    pub relation: String,
    pub params: GenerationParams,
    pub seed: u64,
    pub max_regen_attempts: usize,
    pub max_in_flight: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task_id: String::new(),
            n_total: DEFAULT_N_TOTAL,
            shots_per_label: DEFAULT_SHOTS_PER_LABEL,
            mode: PromptMode::KnowledgeInfused,
            topic_source: TopicSource::Kg,
            relation: "*".into(),
            params: GenerationParams::default(),
            seed: 0,
            max_regen_attempts: DEFAULT_MAX_REGEN_ATTEMPTS,
            max_in_flight: 4,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::Config(m.to_string()));
        if self.n_total == 0 {
            return bad("n_total must be at least 1");
        }
        if self.max_regen_attempts == 0 {
            return bad("max_regen_attempts must be at least 1");
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be at least 1");
        }
        self.params.validate().map_err(|e| GenError::Config(e.to_string()))
    }
}

/// Where knowledge-infused topics come from.
#[derive(Debug, Clone, Copy)]
pub enum TopicSupply<'a> {
    Kg(&'a KnowledgeGraph),
    Candidates(&'a CandidateSet),
    /// Only valid for plain and demo prompts.
    None,
}

pub struct RunInputs<'a> {
    pub task: &'a TaskSpec,
    pub pack: &'a TemplatePack,
    pub topics: TopicSupply<'a>,
    pub styles: Option<&'a CandidateSet>,
    pub demos: Option<&'a FewShotSet>,
    pub prices: Option<&'a PriceTable>,
}

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub requested: usize,
    pub valid: usize,
    pub rejected_final: usize,
    /// Slots never finished because the run aborted.
    pub unprocessed: usize,
    /// Final reason for each slot counted in `rejected_final`.
    pub rejected_by_reason: BTreeMap<String, usize>,
    /// Every rejected attempt, including those later regenerated.
    pub attempt_rejections: BTreeMap<String, usize>,
    pub total_attempts: usize,
    pub llm_calls: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: RunConfig,
    pub task: TaskSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic_set_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style_set_sha256: Option<String>,
    pub counts: RunCounts,
    pub usage: TokenUsage,
    /// Present when a price table was supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_usd: Option<Decimal>,
    pub duration_s: f64,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
}

impl RunManifest {
    /// `requested = valid + rejected_final + unprocessed`, with
    /// `unprocessed = 0` for a complete run.
    pub fn accounting_holds(&self) -> bool {
        let c = &self.counts;
        c.requested == c.valid + c.rejected_final + c.unprocessed && (!self.complete || c.unprocessed == 0)
    }
}

#[derive(Debug)]
pub struct RunOutput {
    /// Valid records in slot order.
    pub records: Vec<SyntheticRecord>,
    /// Slots that exhausted their regeneration attempts, in slot order.
    pub rejected: Vec<SyntheticRecord>,
    pub manifest: RunManifest,
    /// The transport failure that stopped the run early, if any.
    pub abort: Option<LlmError>,
}

/// Topic pools materialized once per run.
enum Pool<'a> {
    None,
    Entities(Vec<Topic>),
    KgPairs { kg: &'a KnowledgeGraph, positive: Vec<Topic>, head_type: String, tail_type: String },
    CandidatePairs { heads: Vec<Topic>, tails: Vec<Topic> },
}

fn kg_entities(kg: &KnowledgeGraph, types: &[String]) -> Result<Vec<Topic>, KgError> {
    let mut types: Vec<&String> = types.iter().collect();
    types.sort();
    types.dedup();
    let mut out = Vec::new();
    for t in types {
        for id in kg.nodes_of_type(t)? {
            let n = kg.node(id).expect("indexed node exists");
            out.push(Topic::entity(n.name.clone(), n.node_type.clone(), TopicSource::Kg));
        }
    }
    Ok(out)
}

fn candidates_of(set: &CandidateSet, types: &[String]) -> Result<Vec<Topic>, GenError> {
    let all = set.to_topics(types.first().map(String::as_str).unwrap_or_default());
    let picked: Vec<Topic> = all.into_iter().filter(|t| types.contains(&t.entity_type)).collect();
    if picked.is_empty() {
        return Err(GenError::Config(format!("topic candidates contain no entity of types {types:?}")));
    }
    Ok(picked)
}

impl<'a> Pool<'a> {
    fn build(task: &TaskSpec, config: &RunConfig, supply: TopicSupply<'a>) -> Result<Self, GenError> {
        if config.mode != PromptMode::KnowledgeInfused {
            return Ok(Pool::None);
        }
        let types = &task.topic_entity_types;
        if types.is_empty() {
            return Err(GenError::Config(format!("task {} has no topic_entity_types", task.id)));
        }
        let pair = task.family == TaskFamily::RelationExtraction;
        let (head_type, tail_type) = if pair {
            if types.len() < 2 {
                return Err(GenError::Config("relation_extraction needs a head and a tail topic type".into()));
            }
            (types[0].clone(), types[1].clone())
        } else {
            Default::default()
        };
        let pool = match (supply, pair) {
            (TopicSupply::None, _) => return Err(GenError::Config("knowledge-infused generation needs a topic source".into())),
            (TopicSupply::Kg(kg), false) => Pool::Entities(kg_entities(kg, types)?),
            (TopicSupply::Candidates(set), false) => Pool::Entities(candidates_of(set, types)?),
            (TopicSupply::Kg(kg), true) => {
                let needs_positive = task.labels.iter().any(|l| !l.negative);
                let positive = if needs_positive {
                    let relation = RelationPattern::parse(&config.relation);
                    let idx = kg.edges_matching(&head_type, &relation, &tail_type);
                    if idx.is_empty() {
                        // Reuse the sampler's error, which names the nearest patterns.
                        crate::kg::sample_pair_topics(
                            kg,
                            &head_type,
                            &relation,
                            &tail_type,
                            1,
                            &mut SeededRng::new(0).substream(&[]),
                        )?;
                    }
                    idx.iter()
                        .map(|&i| {
                            let e = &kg.edges()[i];
                            let h = kg.node(&e.head_id).expect("indexed");
                            let t = kg.node(&e.tail_id).expect("indexed");
                            Topic::pair(
                                &Topic::entity(h.name.clone(), h.node_type.clone(), TopicSource::Kg),
                                &Topic::entity(t.name.clone(), t.node_type.clone(), TopicSource::Kg),
                                Some(e.relation.clone()),
                            )
                        })
                        .collect()
                } else {
                    Vec::new()
                };
                kg.nodes_of_type(&head_type)?;
                kg.nodes_of_type(&tail_type)?;
                Pool::KgPairs { kg, positive, head_type, tail_type }
            }
            (TopicSupply::Candidates(set), true) => {
                Pool::CandidatePairs { heads: candidates_of(set, &[head_type])?, tails: candidates_of(set, &[tail_type])? }
            }
        };
        Ok(pool)
    }

    fn draw(&self, label: &LabelDef, rng: &mut Substream) -> Result<Option<Topic>, KgError> {
        let pick = |xs: &[Topic], rng: &mut Substream| xs[rng.random_range(0..xs.len())].clone();
        Ok(match self {
            Pool::None => None,
            Pool::Entities(xs) => Some(pick(xs, rng)),
            Pool::KgPairs { kg, positive, head_type, tail_type } => {
                Some(if label.negative { sample_unrelated_pair(kg, head_type, tail_type, rng)? } else { pick(positive, rng) })
            }
            Pool::CandidatePairs { heads, tails } => {
                let h = pick(heads, rng);
                let t = pick(tails, rng);
                Some(Topic::pair(&h, &t, None))
            }
        })
    }
}

fn kg_fingerprint(kg: &KnowledgeGraph) -> String {
    let mut s = String::new();
    for n in kg.nodes() {
        s.push_str(&format!("{}\t{}\t{}\n", n.id, n.name, n.node_type));
    }
    for e in kg.edges() {
        s.push_str(&format!("{}\t{}\t{}\n", e.head_id, e.relation, e.tail_id));
    }
    sha256_hex(&s)
}

struct SlotResult {
    record: SyntheticRecord,
    attempt_rejections: Vec<RejectReason>,
    attempts: usize,
    ledger: CostLedger,
}

struct Slot<'a> {
    index: usize,
    label: &'a LabelDef,
}

struct Runner<'a> {
    config: &'a RunConfig,
    inputs: &'a RunInputs<'a>,
    pool: Pool<'a>,
    styles: Vec<String>,
    rng: SeededRng,
    client: &'a dyn LlmClient,
}

struct Attempt {
    outcome: Result<Accepted, (Rejection, String)>,
    first_sha: String,
}

struct Accepted {
    payload: ParsedPayload,
    second_sha: Option<String>,
}

impl Runner<'_> {
    fn call(&self, prompt: &crate::promptkit::ComposedPrompt, stream: u64, ledger: &mut CostLedger) -> Result<String, LlmError> {
        let c = self.client.complete(&CompletionRequest { prompt, params: &self.config.params, stream })?;
        let cost = match self.inputs.prices {
            Some(t) => {
                crate::llm::cost_of(c.usage, &self.config.params.model_id, t).map_err(|e| LlmError::Config(e.to_string()))?
            }
            None => Decimal::ZERO,
        };
        ledger.record(c.usage, cost);
        Ok(c.text)
    }

    fn attempt(
        &self,
        slot: &Slot<'_>,
        attempt: u64,
        ledger: &mut CostLedger,
    ) -> Result<(Attempt, Option<Topic>, Option<String>), LlmError> {
        let i = slot.index as u64;
        let task = self.inputs.task;
        let topic = self
            .pool
            .draw(slot.label, &mut self.rng.substream(&[i, attempt, tags::TOPIC]))
            .map_err(|e| LlmError::Config(e.to_string()))?;
        let style = match self.config.mode {
            PromptMode::KnowledgeInfused => {
                let mut r = self.rng.substream(&[i, attempt, tags::STYLE]);
                Some(self.styles[r.random_range(0..self.styles.len())].clone())
            }
            _ => None,
        };
        let composition = compose(
            self.inputs.pack,
            ComposeInput {
                task,
                label: slot.label,
                topic: topic.as_ref(),
                style: style.as_deref(),
                mode: self.config.mode,
                demos: self.inputs.demos,
            },
        )
        .map_err(|e| LlmError::Config(e.to_string()))?;
        let first = composition.first();
        let first_sha = first.sha256.clone();
        let raw = self.call(first, self.rng.derive_u64(&[i, attempt, tags::LLM_FIRST]), ledger)?;
        let parsed = match &composition {
            Composition::Single(_) => parse_reply(task.family, &raw).map(|p| (p, None)),
            Composition::Pair(plan) => match parse_reply(TaskFamily::NliPair, &raw) {
                Err(r) => Err(r),
                Ok(first_payload) => {
                    let second = plan.second(first_payload.text()).map_err(|e| LlmError::Config(e.to_string()))?;
                    let raw2 = self.call(&second, self.rng.derive_u64(&[i, attempt, tags::LLM_SECOND]), ledger)?;
                    parse_pair(&raw, &raw2).map(|p| (p, Some(second.sha256.clone())))
                }
            },
        };
        let outcome = parsed
            .and_then(|(p, second_sha)| validate(task, p, &slot.label.name).map(|payload| Accepted { payload, second_sha }))
            .map_err(|r| (r, raw.trim().to_string()));
        Ok((Attempt { outcome, first_sha }, topic, style))
    }

    fn run_slot(&self, slot: Slot<'_>) -> Result<SlotResult, LlmError> {
        let mut ledger = CostLedger::default();
        let mut rejections = Vec::new();
        let mut last = None;
        for attempt in 0..self.config.max_regen_attempts {
            let (a, topic, style) = self.attempt(&slot, attempt as u64, &mut ledger)?;
            let mut record = SyntheticRecord {
                record_id: self.rng.record_id(slot.index as u64),
                task_id: self.inputs.task.id.clone(),
                label: slot.label.name.clone(),
                text_primary: String::new(),
                text_secondary: None,
                entities: None,
                attributes: None,
                topic,
                style,
                prompt_mode: self.config.mode,
                prompt_sha256: a.first_sha,
                secondary_prompt_sha256: None,
                model_id: self.config.params.model_id.clone(),
                usage: TokenUsage::default(),
                valid: true,
                rejection_reason: None,
            };
            match a.outcome {
                Ok(acc) => {
                    record.secondary_prompt_sha256 = acc.second_sha;
                    match acc.payload {
                        ParsedPayload::Sentence { text } => record.text_primary = text,
                        ParsedPayload::SentenceWithEntities { text, entities } => {
                            record.text_primary = text;
                            record.entities = Some(entities);
                        }
                        ParsedPayload::SentenceWithAttributes { text, attributes } => {
                            record.text_primary = text;
                            record.attributes = Some(attributes);
                        }
                        ParsedPayload::Pair { first, second } => {
                            record.text_primary = first;
                            record.text_secondary = Some(second);
                        }
                    }
                    record.usage = ledger.usage;
                    return Ok(SlotResult { record, attempt_rejections: rejections, attempts: attempt + 1, ledger });
                }
                Err((rejection, raw)) => {
                    log::debug!("slot {} attempt {attempt} rejected: {rejection}", slot.index);
                    rejections.push(rejection.reason);
                    record.valid = false;
                    record.text_primary = raw;
                    record.rejection_reason = Some(rejection.reason.as_str().to_string());
                    last = Some(record);
                }
            }
        }
        let mut record = last.expect("at least one attempt");
        record.usage = ledger.usage;
        Ok(SlotResult { record, attempt_rejections: rejections, attempts: self.config.max_regen_attempts, ledger })
    }
}

/// Runs the whole generation. Configuration problems are returned as
/// errors before any call is made; a backend failure mid-run stops the
/// remaining slots and is reported in [`RunOutput::abort`] alongside every
/// slot that did finish.
pub fn run_generation(config: &RunConfig, inputs: &RunInputs<'_>, client: &dyn LlmClient) -> Result<RunOutput, GenError> {
    let started = Instant::now();
    config.validate()?;
    let task = inputs.task;
    task.validate().map_err(|e| GenError::Config(e.to_string()))?;
    if config.task_id != task.id {
        return Err(GenError::Config(format!("config is for task {:?}, inputs for {:?}", config.task_id, task.id)));
    }
    let source_ok = matches!(
        (config.topic_source, inputs.topics),
        (_, TopicSupply::None) | (TopicSource::Kg, TopicSupply::Kg(_)) | (TopicSource::Llm, TopicSupply::Candidates(_))
    );
    if !source_ok {
        return Err(GenError::Config(format!("topic_source {:?} does not match the supplied topics", config.topic_source)));
    }
    if config.mode == PromptMode::Demo {
        let demos = inputs.demos.ok_or_else(|| GenError::Config("demo mode needs a few-shot set".into()))?;
        demos.validate(task).map_err(|e| GenError::Config(e.to_string()))?;
        if demos.shots_per_label != config.shots_per_label {
            return Err(GenError::Config(format!(
                "few-shot set has {} shots per label, config asks for {}",
                demos.shots_per_label, config.shots_per_label
            )));
        }
    }
    if let Some(t) = inputs.prices {
        t.get(&config.params.model_id)?;
    }
    let styles: Vec<String> = inputs.styles.map(|s| s.items().iter().map(|x| x.to_string()).collect()).unwrap_or_default();
    if config.mode == PromptMode::KnowledgeInfused && styles.is_empty() {
        return Err(GenError::Config("knowledge-infused generation needs at least one style".into()));
    }
    let runner = Runner {
        config,
        inputs,
        pool: Pool::build(task, config, inputs.topics)?,
        styles,
        rng: SeededRng::new(config.seed),
        client,
    };

    let n = config.n_total;
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let results: Mutex<Vec<Option<SlotResult>>> = Mutex::new((0..n).map(|_| None).collect());
    let failure: Mutex<Option<(usize, LlmError)>> = Mutex::new(None);
    std::thread::scope(|s| {
        for _ in 0..config.max_in_flight.min(n) {
            s.spawn(|| loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let slot = Slot { index: i, label: &task.labels[i % task.labels.len()] };
                match runner.run_slot(slot) {
                    Ok(r) => results.lock().expect("poisoned")[i] = Some(r),
                    Err(e) => {
                        stop.store(true, Ordering::SeqCst);
                        let mut f = failure.lock().expect("poisoned");
                        if f.as_ref().is_none_or(|(j, _)| i < *j) {
                            *f = Some((i, e));
                        }
                        break;
                    }
                }
            });
        }
    });

    let mut counts = RunCounts { requested: n, ..Default::default() };
    let mut ledger = CostLedger::default();
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for r in results.into_inner().expect("poisoned") {
        let Some(r) = r else {
            counts.unprocessed += 1;
            continue;
        };
        counts.total_attempts += r.attempts;
        for reason in r.attempt_rejections {
            *counts.attempt_rejections.entry(reason.as_str().to_string()).or_default() += 1;
        }
        ledger += r.ledger;
        if r.record.valid {
            counts.valid += 1;
            records.push(r.record);
        } else {
            counts.rejected_final += 1;
            let reason = r.record.rejection_reason.clone().unwrap_or_default();
            *counts.rejected_by_reason.entry(reason).or_default() += 1;
            rejected.push(r.record);
        }
    }
    counts.llm_calls = ledger.calls;
    let abort = failure.into_inner().expect("poisoned").map(|(_, e)| e);
    let topic_set_sha256 = match inputs.topics {
        TopicSupply::Kg(kg) => Some(kg_fingerprint(kg)),
        TopicSupply::Candidates(set) => Some(set.sha256()),
        TopicSupply::None => None,
    };
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        task: task.clone(),
        topic_set_sha256,
        style_set_sha256: inputs.styles.map(CandidateSet::sha256),
        counts,
        usage: ledger.usage,
        cost_usd: inputs.prices.map(|_| ledger.cost_usd),
        duration_s: started.elapsed().as_secs_f64(),
        complete: abort.is_none(),
        abort_reason: abort.as_ref().map(ToString::to_string),
    };
    if let Some(e) = &abort {
        log::error!("run aborted: {e}");
    }
    Ok(RunOutput { records, rejected, manifest, abort })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunPaths {
    pub dataset: PathBuf,
    pub rejected: PathBuf,
    pub manifest: PathBuf,
}

impl RunPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self { dataset: dir.join("dataset.jsonl"), rejected: dir.join("rejected.jsonl"), manifest: dir.join("manifest.json") }
    }
}

/// Writes `dataset.jsonl`, `rejected.jsonl` and `manifest.json` into `dir`.
pub fn write_run(output: &RunOutput, dir: &Path) -> Result<RunPaths, GenError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |e: std::io::Error| GenError::Io { path, message: e.to_string() }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let paths = RunPaths::in_dir(dir);
    write_dataset(&output.records, &paths.dataset)?;
    write_dataset(&output.rejected, &paths.rejected)?;
    let json = serde_json::to_string_pretty(&output.manifest).expect("manifest serializes");
    std::fs::write(&paths.manifest, json + "\n").map_err(io(&paths.manifest))?;
    Ok(paths)
}
