//! The `synthkit` command line.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data or validation
//! error, 4 transport failure.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::config::{load_structured, ConfigError};
use crate::dataset::PromptMode;
use crate::elicit::{self, CandidateSet, ElicitError, ElicitOptions, DEFAULT_TOPIC_TARGET};
use crate::genpipe::{self, GenError, RunConfig, RunInputs, TopicSupply};
use crate::kg::{build_lexicon, load_kg, ColumnMap, EntityLexicon, KgError, KnowledgeGraph, TopicSource};
use crate::llm::{EndpointConfig, GenerationParams, LlmClient, LlmError, MockBackend, MockVocabulary, OpenAiClient, PriceTable};
use crate::promptkit::TemplatePack;
use crate::quality::{
    self, AnalyzeConfig, AnalyzeInputs, EmbeddingEndpoint, EmbeddingEndpointConfig, EntityMatcher, QualityError,
};
use crate::task::{load_tasks, FewShotSet, TaskSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_TRANSPORT: i32 = 4;

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(m: impl std::fmt::Display) -> Self {
        Self { code: EXIT_CONFIG, message: m.to_string() }
    }

    pub fn data(m: impl std::fmt::Display) -> Self {
        Self { code: EXIT_DATA, message: m.to_string() }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::config(e)
    }
}

impl From<KgError> for CliError {
    fn from(e: KgError) -> Self {
        if e.is_config() {
            Self::config(e)
        } else {
            Self::data(e)
        }
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        let code = match e {
            LlmError::InvalidParams(_) | LlmError::Config(_) => EXIT_CONFIG,
            LlmError::Unsupported(_) => EXIT_DATA,
            _ => EXIT_TRANSPORT,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<ElicitError> for CliError {
    fn from(e: ElicitError) -> Self {
        match e {
            ElicitError::Llm(e) => e.into(),
            ElicitError::ZeroTarget | ElicitError::InvalidStyle { .. } | ElicitError::Io { .. } => Self::config(e),
            _ => Self::data(e),
        }
    }
}

impl From<GenError> for CliError {
    fn from(e: GenError) -> Self {
        match e {
            GenError::Kg(e) => e.into(),
            GenError::Config(_) | GenError::Prompt(_) | GenError::Cost(_) => Self::config(e),
            GenError::Dataset(_) | GenError::Io { .. } => Self::data(e),
        }
    }
}

impl From<QualityError> for CliError {
    fn from(e: QualityError) -> Self {
        match e {
            QualityError::Transport(_) => Self { code: EXIT_TRANSPORT, message: e.to_string() },
            QualityError::Invalid(_) | QualityError::DegenerateBounds { .. } => Self::config(e),
            _ => Self::data(e),
        }
    }
}

/// File locations. Relative paths are resolved against the directory of
/// the configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// `[[task]]` definitions.
    pub tasks: Option<PathBuf>,
    pub kg_nodes: Option<PathBuf>,
    pub kg_edges: Option<PathBuf>,
    /// Column overrides in `key=column,...` form.
    pub kg_columns: Option<String>,
    /// Directory of template overrides.
    pub templates: Option<PathBuf>,
    pub prices: Option<PathBuf>,
    /// Topic candidate set (JSONL) for `topic_source = "LLM"`.
    pub topics: Option<PathBuf>,
    /// Style candidate set (JSONL).
    pub styles: Option<PathBuf>,
    /// Directory holding `<task_id>.json` or `<task_id>.toml` few-shot sets.
    pub few_shot_dir: Option<PathBuf>,
    pub mock_vocabulary: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationDefaults {
    pub n_total: usize,
    pub shots_per_label: usize,
    pub mode: PromptMode,
    pub topic_source: TopicSource,
    pub relation: String,
    pub max_regen_attempts: usize,
    pub max_in_flight: usize,
    pub seed: Option<u64>,
    pub params: GenerationParams,
}

impl Default for GenerationDefaults {
    fn default() -> Self {
        let r = RunConfig::default();
        Self {
            n_total: r.n_total,
            shots_per_label: r.shots_per_label,
            mode: r.mode,
            topic_source: r.topic_source,
            relation: r.relation,
            max_regen_attempts: r.max_regen_attempts,
            max_in_flight: r.max_in_flight,
            seed: None,
            params: r.params,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoggingConfig {
    /// `error`, `warn`, `info`, `debug` or `trace`.
    pub level: String,
    pub json: bool,
}

impl Default for LoggingConfig {
    fn default() -> Self {
        Self { level: "info".into(), json: false }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub paths: PathsConfig,
    pub llm: EndpointConfig,
    pub generation: GenerationDefaults,
    pub embeddings: Option<EmbeddingEndpointConfig>,
    pub analysis: AnalyzeConfig,
    pub logging: LoggingConfig,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut c: Self = load_structured(path)?;
        if let Some(base) = path.parent() {
            c.resolve_relative(base);
        }
        Ok(c)
    }

    fn resolve_relative(&mut self, base: &Path) {
        let p = &mut self.paths;
        for path in [
            &mut p.tasks,
            &mut p.kg_nodes,
            &mut p.kg_edges,
            &mut p.templates,
            &mut p.prices,
            &mut p.topics,
            &mut p.styles,
            &mut p.few_shot_dir,
            &mut p.mock_vocabulary,
            &mut p.output_dir,
        ]
        .into_iter()
        .flatten()
        {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        if let Some(e) = &mut self.embeddings {
            if let Some(d) = &mut e.cache_dir {
                if d.is_relative() {
                    *d = base.join(&*d);
                }
            }
        }
        if let Some(d) = &mut self.llm.archive_dir {
            if d.is_relative() {
                *d = base.join(&*d);
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "synthkit", version, about = "Knowledge-infused synthetic clinical text generation")]
pub struct Cli {
    /// Configuration file (TOML or JSON). Flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Log level (error, warn, info, debug, trace); overrides the config.
    #[arg(long, global = true)]
    pub log_level: Option<String>,
    /// Emit logs as one JSON object per line.
    #[arg(long, global = true)]
    pub log_json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a knowledge graph, print its counts and optionally export a lexicon.
    KgLoad(KgLoadArgs),
    /// Collect topic or writing-style candidates.
    Elicit(ElicitArgs),
    /// Generate a synthetic dataset with its manifest.
    Generate(GenerateArgs),
    /// Compute quality metrics for a dataset.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    /// Deterministic offline backend; makes no network calls.
    Mock,
    /// OpenAI-compatible endpoint from the `[llm]` config section.
    Openai,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum What {
    Topics,
    Styles,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TopicOrigin {
    /// Ask the LLM.
    Llm,
    /// Take every node of the entity type from the knowledge graph.
    Kg,
}

#[derive(Debug, Args)]
pub struct KgLoadArgs {
    /// Node file (TSV or CSV with a header row).
    #[arg(long)]
    pub nodes: Option<PathBuf>,
    /// Edge file (TSV or CSV with a header row).
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Column overrides, e.g. `id=cui,name=str,type=sty,delimiter=tab`.
    #[arg(long)]
    pub columns: Option<String>,
    /// Entity types to put in the exported lexicon (repeatable; default all).
    #[arg(long = "lexicon-type")]
    pub lexicon_types: Vec<String>,
    /// Write the entity lexicon as TSV here.
    #[arg(long)]
    pub lexicon_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ElicitArgs {
    /// Which candidates to collect.
    #[arg(long, value_enum)]
    pub what: What,
    /// Entity type to collect topics for.
    #[arg(long)]
    pub entity_type: Option<String>,
    /// Number of distinct topics to collect.
    #[arg(long, default_value_t = DEFAULT_TOPIC_TARGET)]
    pub count: usize,
    /// Task id, for style elicitation.
    #[arg(long)]
    pub task: Option<String>,
    /// Where topics come from.
    #[arg(long, value_enum, default_value_t = TopicOrigin::Llm)]
    pub source: TopicOrigin,
    /// LLM backend.
    #[arg(long, value_enum, default_value_t = Backend::Openai)]
    pub backend: Backend,
    /// Few-shot set used to seed style elicitation.
    #[arg(long)]
    pub few_shot: Option<PathBuf>,
    /// Use these styles instead of asking the LLM (repeatable).
    #[arg(long = "style")]
    pub manual: Vec<String>,
    /// Directory for raw replies.
    #[arg(long)]
    pub archive_dir: Option<PathBuf>,
    /// Output candidate set (JSONL).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Task id from the task file.
    #[arg(long)]
    pub task: String,
    /// Number of records to request.
    #[arg(long)]
    pub n: Option<usize>,
    /// Prompt mode.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<PromptMode>,
    /// Topic source: `KG` or `LLM`.
    #[arg(long, value_parser = parse_topic_source)]
    pub topic_source: Option<TopicSource>,
    /// Seed for every random draw.
    #[arg(long)]
    pub seed: Option<u64>,
    /// LLM backend.
    #[arg(long, value_enum, default_value_t = Backend::Openai)]
    pub backend: Backend,
    /// Style candidate set; overrides `paths.styles`.
    #[arg(long)]
    pub styles: Option<PathBuf>,
    /// Topic candidate set; overrides `paths.topics`.
    #[arg(long)]
    pub topics: Option<PathBuf>,
    /// Few-shot set for demo mode.
    #[arg(long)]
    pub few_shot: Option<PathBuf>,
    /// Concurrent generation workers.
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    /// Output directory; overrides `paths.output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Dataset JSONL to analyze.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Reference texts (JSONL with `id`/`text` or dataset records).
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Vector file (JSONL or TSV) covering every dataset and reference id.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Fetch vectors from the `[embeddings]` endpoint instead of a file.
    #[arg(long, conflicts_with = "embeddings")]
    pub embed_endpoint: bool,
    /// Entity lexicon TSV from `kg-load --lexicon-out`.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Moment order for central moment discrepancy.
    #[arg(long)]
    pub cmd_order: Option<usize>,
    /// Output directory for the report and CSVs.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_mode(s: &str) -> Result<PromptMode, String> {
    PromptMode::parse(s).ok_or_else(|| {
        let all: Vec<&str> = PromptMode::ALL.iter().map(|m| m.as_str()).collect();
        format!("expected one of {}", all.join(", "))
    })
}

fn parse_topic_source(s: &str) -> Result<TopicSource, String> {
    match s.to_ascii_uppercase().as_str() {
        "KG" => Ok(TopicSource::Kg),
        "LLM" => Ok(TopicSource::Llm),
        _ => Err("expected KG or LLM".into()),
    }
}

fn need<'a, T>(v: Option<&'a T>, what: &str) -> Result<&'a T, CliError> {
    v.ok_or_else(|| CliError::config(format!("{what} is not set (flag or config)")))
}

fn existing(path: &Path) -> Result<&Path, CliError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::config(format!("{} does not exist", path.display())))
    }
}

/// What a subcommand did, printed to stdout as one JSON object.
pub type Summary = serde_json::Value;

pub struct Context {
    pub config: CliConfig,
}

impl Context {
    fn kg(&self, nodes: Option<&PathBuf>, edges: Option<&PathBuf>, columns: Option<&String>) -> Result<KnowledgeGraph, CliError> {
        let nodes = existing(need(nodes.or(self.config.paths.kg_nodes.as_ref()), "knowledge graph node file")?)?;
        let edges = existing(need(edges.or(self.config.paths.kg_edges.as_ref()), "knowledge graph edge file")?)?;
        let columns = match columns.or(self.config.paths.kg_columns.as_ref()) {
            Some(spec) => ColumnMap::parse_overrides(spec).map_err(CliError::config)?,
            None => ColumnMap::default(),
        };
        Ok(load_kg(nodes, edges, &columns)?)
    }

    fn task(&self, id: &str) -> Result<TaskSpec, CliError> {
        let path = existing(need(self.config.paths.tasks.as_ref(), "paths.tasks")?)?;
        let tasks = load_tasks(path)?;
        let ids: Vec<&str> = tasks.iter().map(|t| t.id.as_str()).collect();
        tasks
            .iter()
            .find(|t| t.id == id)
            .cloned()
            .ok_or_else(|| CliError::config(format!("unknown task {id:?}; known: {}", ids.join(", "))))
    }

    fn pack(&self) -> Result<TemplatePack, CliError> {
        match &self.config.paths.templates {
            Some(dir) => TemplatePack::load_dir(existing(dir)?).map_err(CliError::config),
            None => Ok(TemplatePack::builtin()),
        }
    }

    fn few_shot(&self, flag: Option<&PathBuf>, task: &str) -> Result<Option<FewShotSet>, CliError> {
        if let Some(p) = flag {
            return Ok(Some(FewShotSet::load(existing(p)?)?));
        }
        let Some(dir) = &self.config.paths.few_shot_dir else { return Ok(None) };
        for ext in ["json", "toml"] {
            let p = dir.join(format!("{task}.{ext}"));
            if p.exists() {
                return Ok(Some(FewShotSet::load(&p)?));
            }
        }
        Ok(None)
    }

    fn client(&self, backend: Backend) -> Result<Box<dyn LlmClient>, CliError> {
        Ok(match backend {
            Backend::Mock => {
                let vocab = match &self.config.paths.mock_vocabulary {
                    Some(p) => MockVocabulary::load(existing(p)?)?,
                    None => MockVocabulary::builtin(),
                };
                Box::new(MockBackend::new(vocab))
            }
            Backend::Openai => Box::new(OpenAiClient::from_env(&self.config.llm)?),
        })
    }
}

fn kg_load(ctx: &Context, a: &KgLoadArgs) -> Result<Summary, CliError> {
    let kg = ctx.kg(a.nodes.as_ref(), a.edges.as_ref(), a.columns.as_ref())?;
    let stats = kg.stats();
    let mut summary = serde_json::to_value(stats).expect("stats serialize");
    summary["types"] = serde_json::json!(kg.types());
    if let Some(out) = &a.lexicon_out {
        let types = if a.lexicon_types.is_empty() { kg.types() } else { a.lexicon_types.clone() };
        let lex = build_lexicon(&kg, &types)?;
        lex.export_tsv(out)?;
        summary["lexicon_entries"] = lex.len().into();
        summary["lexicon_collisions"] = lex.collisions().len().into();
    }
    Ok(summary)
}

fn elicit_cmd(ctx: &Context, a: &ElicitArgs) -> Result<Summary, CliError> {
    let params = &ctx.config.generation.params;
    let (set, calls, shortfall) = match a.what {
        What::Topics => {
            let entity_type = need(a.entity_type.as_ref(), "--entity-type")?;
            match a.source {
                TopicOrigin::Kg => (elicit::kg_topics(&ctx.kg(None, None, None)?, entity_type)?, 0, 0),
                TopicOrigin::Llm => {
                    let client = ctx.client(a.backend)?;
                    let opts = ElicitOptions { archive_dir: a.archive_dir.clone(), ..Default::default() };
                    let e = elicit::elicit_topics(client.as_ref(), params, entity_type, a.count, &opts)?;
                    if e.shortfall > 0 {
                        log::warn!("collected {} of {} topics", e.set.len(), a.count);
                    }
                    (e.set, e.calls, e.shortfall)
                }
            }
        }
        What::Styles => {
            let task_id = need(a.task.as_ref(), "--task")?;
            if a.manual.is_empty() {
                let task = ctx.task(task_id)?;
                let demos = ctx
                    .few_shot(a.few_shot.as_ref(), task_id)?
                    .ok_or_else(|| CliError::config(format!("no few-shot set for {task_id}")))?;
                let client = ctx.client(a.backend)?;
                let e = elicit::elicit_styles(client.as_ref(), params, &ctx.pack()?, &task, &demos, a.archive_dir.as_deref())?;
                (e.set, e.calls, 0)
            } else {
                (elicit::manual_styles(task_id, &a.manual)?, 0, 0)
            }
        }
    };
    set.save(&a.out)?;
    Ok(serde_json::json!({
        "out": a.out,
        "items": set.len(),
        "calls": calls,
        "shortfall": shortfall,
        "sha256": set.sha256(),
    }))
}

/// Merges flags over config defaults. A seed must come from one of them.
pub fn resolve_run_config(config: &CliConfig, a: &GenerateArgs) -> Result<RunConfig, CliError> {
    let g = &config.generation;
    let seed = a.seed.or(g.seed).ok_or_else(|| CliError::config("a seed is required (--seed or generation.seed)"))?;
    let rc = RunConfig {
        task_id: a.task.clone(),
        n_total: a.n.unwrap_or(g.n_total),
        shots_per_label: g.shots_per_label,
        mode: a.mode.unwrap_or(g.mode),
        topic_source: a.topic_source.unwrap_or(g.topic_source),
        relation: g.relation.clone(),
        params: g.params.clone(),
        seed,
        max_regen_attempts: g.max_regen_attempts,
        max_in_flight: a.max_in_flight.unwrap_or(g.max_in_flight),
    };
    rc.validate()?;
    Ok(rc)
}

fn generate_cmd(ctx: &Context, a: &GenerateArgs) -> Result<Summary, CliError> {
    let rc = resolve_run_config(&ctx.config, a)?;
    let task = ctx.task(&a.task)?;
    let pack = ctx.pack()?;
    let out_dir = a
        .out
        .clone()
        .or_else(|| ctx.config.paths.output_dir.as_ref().map(|d| d.join(&task.id)))
        .ok_or_else(|| CliError::config("no output directory (--out or paths.output_dir)"))?;
    let ki = rc.mode == PromptMode::KnowledgeInfused;
    let load_set = |flag: Option<&PathBuf>, cfg: Option<&PathBuf>, what: &str| -> Result<Option<CandidateSet>, CliError> {
        match flag.or(cfg) {
            Some(p) => Ok(Some(CandidateSet::load(existing(p)?)?)),
            None if ki => Err(CliError::config(format!("knowledge-infused mode needs a {what} file"))),
            None => Ok(None),
        }
    };
    let styles = load_set(a.styles.as_ref(), ctx.config.paths.styles.as_ref(), "styles")?;
    let (kg, topics) = match (ki, rc.topic_source) {
        (false, _) => (None, None),
        (true, TopicSource::Kg) => (Some(ctx.kg(None, None, None)?), None),
        (true, TopicSource::Llm) => (None, load_set(a.topics.as_ref(), ctx.config.paths.topics.as_ref(), "topics")?),
    };
    let demos = ctx.few_shot(a.few_shot.as_ref(), &task.id)?;
    let prices =
        ctx.config.paths.prices.as_ref().map(|p| -> Result<_, CliError> { Ok(PriceTable::load(existing(p)?)?) }).transpose()?;
    let supply = match (&kg, &topics) {
        (Some(kg), _) => TopicSupply::Kg(kg),
        (None, Some(t)) => TopicSupply::Candidates(t),
        _ => TopicSupply::None,
    };
    let inputs = RunInputs {
        task: &task,
        pack: &pack,
        topics: supply,
        styles: styles.as_ref(),
        demos: demos.as_ref(),
        prices: prices.as_ref(),
    };
    let client = ctx.client(a.backend)?;
    let out = genpipe::run_generation(&rc, &inputs, client.as_ref())?;
    let paths = genpipe::write_run(&out, &out_dir)?;
    let summary = serde_json::json!({
        "dataset": paths.dataset,
        "manifest": paths.manifest,
        "seed": rc.seed,
        "counts": out.manifest.counts,
        "cost_usd": out.manifest.cost_usd,
        "complete": out.manifest.complete,
    });
    match out.abort {
        Some(e) => Err(CliError { message: format!("run aborted, partial output in {}: {e}", out_dir.display()), ..e.into() }),
        None => Ok(summary),
    }
}

fn analyze_cmd(ctx: &Context, a: &AnalyzeArgs) -> Result<Summary, CliError> {
    let dataset = quality::load_texts(existing(&a.dataset)?)?;
    let reference =
        a.reference.as_ref().map(|p| -> Result<_, CliError> { Ok(quality::load_texts(existing(p)?)?) }).transpose()?;
    let mut config = ctx.config.analysis.clone();
    if let Some(k) = a.cmd_order {
        config.cmd_order = k;
    }
    let model = ctx.config.embeddings.as_ref().map(|e| e.model.clone()).unwrap_or_else(|| "file".into());
    let (de, re) = if let Some(file) = &a.embeddings {
        let vectors = quality::load_vectors(existing(file)?)?;
        let ids = |items: &[quality::TextItem]| items.iter().map(|t| t.id.clone()).collect::<Vec<_>>();
        let de = quality::align(&ids(&dataset), &vectors, quality::ProviderKind::File, &model)?;
        let re =
            reference.as_ref().map(|r| quality::align(&ids(r), &vectors, quality::ProviderKind::File, &model)).transpose()?;
        (Some(de), re)
    } else if a.embed_endpoint {
        let cfg = need(ctx.config.embeddings.as_ref(), "[embeddings] endpoint")?;
        let ep = EmbeddingEndpoint::new(cfg);
        let de = ep.embed(&dataset)?;
        let re = reference.as_ref().map(|r| ep.embed(r)).transpose()?;
        (Some(de), re)
    } else {
        (None, None)
    };
    let matcher = match &a.lexicon {
        Some(p) => Some(EntityMatcher::new(&EntityLexicon::load_tsv(existing(p)?)?)),
        None => None,
    };
    let report = quality::analyze(
        &config,
        &AnalyzeInputs {
            dataset: &dataset,
            reference: reference.as_deref(),
            dataset_embeddings: de.as_ref(),
            reference_embeddings: re.as_ref(),
            matcher: matcher.as_ref(),
        },
    )?;
    let paths = quality::write_report(&report, matcher.as_ref(), &a.out)?;
    Ok(serde_json::json!({
        "report": paths.report,
        "cmd_total": report.cmd.as_ref().map(|c| c.total),
        "aps": report.aps,
        "entity_coverage": report.entity_coverage,
    }))
}

pub fn init_logging(level: &str, json: bool) {
    let mut b = env_logger::Builder::new();
    b.parse_filters(level).target(env_logger::Target::Stderr);
    if json {
        b.format(|buf, record| {
            let line = serde_json::json!({
                "level": record.level().as_str(),
                "target": record.target(),
                "message": record.args().to_string(),
            });
            writeln!(buf, "{line}")
        });
    }
    // A second initialization in the same process is harmless.
    let _ = b.try_init();
}

/// Runs a parsed command line and returns its summary.
pub fn run(cli: &Cli) -> Result<Summary, CliError> {
    let config = match &cli.config {
        Some(p) => CliConfig::load(existing(p)?)?,
        None => CliConfig::default(),
    };
    let level = cli.log_level.clone().unwrap_or_else(|| config.logging.level.clone());
    init_logging(&level, cli.log_json || config.logging.json);
    let ctx = Context { config };
    match &cli.command {
        Command::KgLoad(a) => kg_load(&ctx, a),
        Command::Elicit(a) => elicit_cmd(&ctx, a),
        Command::Generate(a) => generate_cmd(&ctx, a),
        Command::Analyze(a) => analyze_cmd(&ctx, a),
    }
}

/// Parses `args`, runs, prints the summary or error, and returns the exit
/// code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            log::error!("{}", e.message);
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
