//! Fixtures, independent oracles and acceptance checks shared by the
//! integration tests and the acceptance harness.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_decimal::Decimal;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use synthkit::elicit::{manual_styles, CandidateSet};
use synthkit::kg::{load_kg, sample_entity_topics_among, ColumnMap, EntityLexicon, KnowledgeGraph, Topic, TopicSource};
use synthkit::llm::{cost_of, CostLedger, ModelPrice, PriceTable, TokenUsage};
use synthkit::promptkit::{compose, ComposeInput, Composition, Step, TemplateKey, TemplatePack};
use synthkit::quality::{avg_pairwise_similarity, cmd, entity_coverage, ApsMode, Bounds, EntityMatcher};
use synthkit::task::{load_tasks, FewShotSet, TaskFamily, TaskSpec};
use synthkit::text::{normalize, tokenize};
use synthkit::{PromptMode, SeededRng};

pub type Check = Result<String, String>;

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn data(rel: &str) -> PathBuf {
    crate_dir().join("data").join(rel)
}

pub fn tasks() -> Vec<TaskSpec> {
    load_tasks(&data("tasks.toml")).expect("bundled tasks load")
}

pub fn task(family: TaskFamily) -> TaskSpec {
    tasks().into_iter().find(|t| t.family == family).expect("one task per family")
}

pub fn few_shot(task_id: &str) -> FewShotSet {
    FewShotSet::load(&data(&format!("few_shot/{task_id}.json"))).expect("bundled few-shot set loads")
}

pub fn kg() -> KnowledgeGraph {
    load_kg(&data("kg/nodes.tsv"), &data("kg/edges.tsv"), &ColumnMap::default()).expect("bundled KG loads")
}

pub fn styles() -> CandidateSet {
    let s = ["medical literature", "patient-doctor dialogues", "clinical trial reports"].map(String::from);
    manual_styles("any", &s).unwrap()
}

// ---------------------------------------------------------------- oracles

/// k-th central moment of one coordinate by direct summation.
fn moment(col: &[f64], k: i32) -> f64 {
    let n = col.len() as f64;
    let mu = col.iter().sum::<f64>() / n;
    col.iter().map(|v| (v - mu).powi(k)).sum::<f64>() / n
}

/// CMD by direct summation, one coordinate column at a time.
pub fn cmd_oracle(x: &[Vec<f64>], y: &[Vec<f64>], order: usize, bounds: &[(f64, f64)]) -> f64 {
    let d = x[0].len();
    let col = |s: &[Vec<f64>], j: usize| s.iter().map(|r| r[j]).collect::<Vec<f64>>();
    let mut total = 0.0;
    for k in 1..=order as i32 {
        let mut sq = 0.0;
        for (j, &(lo, hi)) in bounds.iter().enumerate().take(d) {
            let (cx, cy) = (col(x, j), col(y, j));
            let (a, b) = if k == 1 {
                (cx.iter().sum::<f64>() / cx.len() as f64, cy.iter().sum::<f64>() / cy.len() as f64)
            } else {
                (moment(&cx, k), moment(&cy, k))
            };
            let w = (hi - lo).abs().powi(k);
            sq += ((a - b) / w).powi(2);
        }
        total += sq.sqrt();
    }
    total
}

/// Mean cosine over all unordered pairs, each computed from scratch.
pub fn aps_oracle(rows: &[Vec<f64>]) -> f64 {
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let mut s = 0.0;
    let mut n = 0usize;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            s += cos(&rows[i], &rows[j]);
            n += 1;
        }
    }
    s / n as f64
}

/// Every occurrence of every lexicon form in every text, then a greedy
/// sweep keeping the earliest start and, among equal starts, the longest.
pub fn matcher_oracle(texts: &[String], lexicon: &EntityLexicon) -> BTreeMap<String, u64> {
    let forms: Vec<(Vec<String>, String)> = lexicon
        .iter()
        .map(|(surface, e)| (tokenize(surface).into_iter().map(String::from).collect(), e.node_id.clone()))
        .collect();
    let mut counts = BTreeMap::new();
    for t in texts {
        let norm = normalize(t);
        let toks: Vec<&str> = tokenize(&norm);
        let mut found: Vec<(usize, usize, &str)> = Vec::new();
        for (form, id) in &forms {
            if form.is_empty() || form.len() > toks.len() {
                continue;
            }
            for s in 0..=toks.len() - form.len() {
                if toks[s..s + form.len()].iter().zip(form).all(|(a, b)| *a == b) {
                    found.push((s, form.len(), id));
                }
            }
        }
        found.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        let mut cursor = 0;
        for (s, len, id) in found {
            if s >= cursor {
                *counts.entry(id.to_string()).or_default() += 1;
                cursor = s + len;
            }
        }
    }
    counts
}

fn random_set(rng: &mut ChaCha8Rng, n: usize, d: usize, shift: f64) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0) * 2.0 + shift).collect()).collect()
}

fn pooled_bounds(x: &[Vec<f64>], y: &[Vec<f64>]) -> Vec<(f64, f64)> {
    (0..x[0].len())
        .map(|j| {
            let vals = x.iter().chain(y).map(|r| r[j]);
            vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        })
        .collect()
}

// ---------------------------------------------------------------- checks

pub fn check_cmd_oracle() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let d = rng.random_range(1..=8);
        let (nx, ny, shift) = (rng.random_range(2..=50), rng.random_range(2..=50), rng.random_range(-0.5..0.5));
        let x = random_set(&mut rng, nx, d, 0.0);
        let y = random_set(&mut rng, ny, d, shift);
        let b = pooled_bounds(&x, &y);
        let got = cmd(&x, &y, 5, &Bounds::PerDim(b.clone())).map_err(|e| e.to_string())?;
        let want = cmd_oracle(&x, &y, 5, &b);
        worst = worst.max((got.total - want).abs());
        if (got.total - want).abs() > 1e-9 {
            return Err(format!("case {case}: {} vs oracle {want}", got.total));
        }
        let auto = cmd(&x, &y, 5, &Bounds::Auto).map_err(|e| e.to_string())?;
        let back = cmd(&y, &x, 5, &Bounds::Auto).map_err(|e| e.to_string())?;
        if auto.total.to_bits() != back.total.to_bits() {
            return Err(format!("case {case}: asymmetric {} vs {}", auto.total, back.total));
        }
        if cmd(&x, &x, 5, &Bounds::Auto).map_err(|e| e.to_string())?.total != 0.0 {
            return Err(format!("case {case}: cmd(X, X) != 0"));
        }
    }
    let elapsed = started.elapsed();
    if elapsed > Duration::from_secs(5) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!("100 cases, max |diff| {worst:.1e}, {elapsed:.2?}"))
}

pub fn check_aps_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for n in [2, 3, 10, 50, 120, 200] {
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..16).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let got = avg_pairwise_similarity(&[], &rows, ApsMode::AllPairs).map_err(|e| e.to_string())?;
        let want = aps_oracle(&rows);
        worst = worst.max((got - want).abs());
        if (got - want).abs() > 1e-9 {
            return Err(format!("n={n}: {got} vs oracle {want}"));
        }
    }
    let same = vec![vec![0.3, -1.7, 2.2]; 25];
    let one = avg_pairwise_similarity(&[], &same, ApsMode::AllPairs).map_err(|e| e.to_string())?;
    if one != 1.0 {
        return Err(format!("identical rows gave {one}"));
    }
    let ortho = avg_pairwise_similarity(&[], &[vec![2.0, 0.0], vec![0.0, 5.0]], ApsMode::AllPairs).map_err(|e| e.to_string())?;
    if ortho != 0.0 {
        return Err(format!("orthogonal pair gave {ortho}"));
    }
    Ok(format!("n up to 200, max |diff| {worst:.1e}; identical 1.0; orthogonal 0.0"))
}

/// A 1000-entry lexicon of mock topic names. Names past the 400th extend
/// earlier ones ("x type 2"), so longest-match decisions are exercised.
pub fn mock_lexicon() -> (EntityLexicon, Vec<String>) {
    let vocab = synthkit::llm::MockVocabulary::builtin();
    let names: Vec<String> = (0..1000).map(|i| vocab.topic_name(i)).collect();
    let lex = EntityLexicon::from_names(names.iter().enumerate().map(|(i, n)| (n.clone(), format!("E{i:04}"))));
    (lex, names)
}

/// 500 mock NER records whose topics come from the mock lexicon.
pub fn mock_texts(names: &[String]) -> Vec<String> {
    use synthkit::elicit::{CandidateKind, CandidateSource, Provenance};
    use synthkit::genpipe::{run_generation, RunConfig, RunInputs, TopicSupply};
    let mut topics = CandidateSet::new(CandidateKind::Topics);
    for n in names {
        topics.push(
            n,
            Provenance {
                kind: CandidateKind::Topics,
                source: CandidateSource::Llm,
                entity_type: Some("disease".into()),
                task_id: None,
                prompt_sha256: None,
                model_id: None,
                raw_reply: None,
            },
        );
    }
    let task = task(TaskFamily::Ner);
    let pack = TemplatePack::builtin();
    let styles = styles();
    let cfg = RunConfig { task_id: task.id.clone(), n_total: 500, topic_source: TopicSource::Llm, seed: 3, ..Default::default() };
    let inputs = RunInputs {
        task: &task,
        pack: &pack,
        topics: TopicSupply::Candidates(&topics),
        styles: Some(&styles),
        demos: None,
        prices: None,
    };
    let out = run_generation(&cfg, &inputs, &synthkit::llm::MockBackend::default()).expect("mock run");
    out.records.into_iter().map(|r| r.text_primary).collect()
}

pub fn check_matcher_oracle() -> Check {
    let (lex, names) = mock_lexicon();
    if lex.len() != 1000 {
        return Err(format!("lexicon has {} entries", lex.len()));
    }
    let texts = mock_texts(&names);
    if texts.len() != 500 {
        return Err(format!("{} mock records", texts.len()));
    }
    let matcher = EntityMatcher::new(&lex);
    let got = entity_coverage(&texts, &matcher).counts;
    let want = matcher_oracle(&texts, &lex);
    if got != want {
        return Err(format!("matcher {} entities / oracle {}", got.len(), want.len()));
    }
    let fixture = EntityLexicon::from_names([("heart failure", "HF"), ("heart", "H")]);
    let c = entity_coverage(&["heart failure and heart rate"], &EntityMatcher::new(&fixture)).counts;
    let expect: BTreeMap<String, u64> = [("HF".to_string(), 1), ("H".to_string(), 1)].into();
    if c != expect {
        return Err(format!("longest-match fixture gave {c:?}"));
    }
    Ok(format!("500 records x 1000 entries, {} distinct / {} matches agree; fixture ok", got.len(), got.values().sum::<u64>()))
}

/// Runs `generate --backend mock --n 100` twice per family.
pub fn check_e2e_mock() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let styles_path = dir.path().join("styles.jsonl");
    styles().save(&styles_path).map_err(|e| e.to_string())?;
    let config = data("synthkit.toml");
    let mut notes = Vec::new();
    for t in tasks() {
        let started = Instant::now();
        let mut bytes = Vec::new();
        for run in 0..2 {
            let out = dir.path().join(format!("{}-{run}", t.id));
            let status = std::process::Command::new(env!("CARGO_BIN_EXE_synthkit"))
                .args(["--config", config.to_str().unwrap(), "--log-level", "warn", "generate", "--task", &t.id])
                .args(["--n", "100", "--seed", "5", "--backend", "mock", "--styles", styles_path.to_str().unwrap()])
                .args(["--out", out.to_str().unwrap()])
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!("{}: {} {}", t.id, status.status, String::from_utf8_lossy(&status.stderr)));
            }
            let m: serde_json::Value =
                serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).map_err(|e| e.to_string())?)
                    .map_err(|e| e.to_string())?;
            let c = &m["counts"];
            let (req, valid, rej) = (c["requested"].as_u64(), c["valid"].as_u64(), c["rejected_final"].as_u64());
            if req != Some(100) || valid != Some(100) || rej != Some(0) {
                return Err(format!("{}: counts {c}", t.id));
            }
            if !c["attempt_rejections"].as_object().is_some_and(|o| o.is_empty()) {
                return Err(format!("{}: parse failures {}", t.id, c["attempt_rejections"]));
            }
            let b = std::fs::read(out.join("dataset.jsonl")).map_err(|e| e.to_string())?;
            let lines = b.split(|&c| c == b'\n').filter(|l| !l.is_empty()).count();
            if lines != 100 {
                return Err(format!("{}: {lines} lines", t.id));
            }
            bytes.push(b);
        }
        if bytes[0] != bytes[1] {
            return Err(format!("{}: reruns differ", t.id));
        }
        let elapsed = started.elapsed();
        if elapsed > Duration::from_secs(10) {
            return Err(format!("{}: took {elapsed:?}", t.id));
        }
        notes.push(format!("{} {:.0?}", t.family, elapsed));
    }
    Ok(notes.join(", "))
}

fn golden_topic(family: TaskFamily) -> Topic {
    let e = |n: &str, t: &str| Topic::entity(n, t, TopicSource::Kg);
    match family {
        TaskFamily::Ner => e("heart failure", "disease"),
        TaskFamily::TextClassification => e("asthma", "disease"),
        TaskFamily::AttributeExtraction => e("metformin", "drug"),
        TaskFamily::NliPair => e("sepsis", "disease"),
        TaskFamily::RelationExtraction => Topic::pair(&e("cisplatin", "chemical"), &e("chronic kidney disease", "disease"), None),
    }
}

pub const GOLDEN_FIRST_SENTENCE: &str = "The patient was admitted to the intensive care unit with sepsis.";

/// Composes every template with the golden bindings and compares the body
/// with `tests/golden/<family>.<mode>.<step>.txt`.
pub fn check_goldens() -> Check {
    let pack = TemplatePack::builtin();
    let mut n = 0;
    for key in TemplateKey::all() {
        let task = task(key.family);
        let demos = few_shot(&task.id);
        let topic = golden_topic(key.family);
        let input = ComposeInput {
            task: &task,
            label: &task.labels[0],
            topic: (key.mode == PromptMode::KnowledgeInfused).then_some(&topic),
            style: (key.mode == PromptMode::KnowledgeInfused).then_some("medical literature"),
            mode: key.mode,
            demos: (key.mode == PromptMode::Demo).then_some(&demos),
        };
        let c = compose(&pack, input).map_err(|e| format!("{key}: {e}"))?;
        let prompt = match (&c, key.step) {
            (Composition::Pair(p), Step::PairSecond) => p.second(GOLDEN_FIRST_SENTENCE).map_err(|e| e.to_string())?,
            _ => c.first().clone(),
        };
        let path = crate_dir().join("tests/golden").join(key.file_name());
        let want = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let want = want.strip_suffix('\n').unwrap_or(&want);
        if prompt.body() != want {
            return Err(format!("{key} differs:\n--- got\n{}\n--- want\n{want}", prompt.body()));
        }
        n += 1;
    }
    let ki = std::fs::read_to_string(crate_dir().join("tests/golden/ner.knowledge_infused.single.txt")).unwrap_or_default();
    if !ki.contains("the sentence should mimic the style of") {
        return Err("knowledge-infused NER golden lacks the style clause".into());
    }
    Ok(format!("{n} templates byte-identical"))
}

pub fn check_default_hyperparameters() -> Check {
    use clap::Parser;
    use synthkit::cli::{resolve_run_config, Cli, CliConfig, Command};
    let cli = Cli::try_parse_from(["synthkit", "generate", "--task", "t", "--seed", "1"]).map_err(|e| e.to_string())?;
    let Command::Generate(g) = &cli.command else { return Err("not generate".into()) };
    let rc = resolve_run_config(&CliConfig::default(), g).map_err(|e| e.to_string())?;
    let cli = Cli::try_parse_from(["synthkit", "elicit", "--what", "topics", "--out", "x"]).map_err(|e| e.to_string())?;
    let Command::Elicit(e) = &cli.command else { return Err("not elicit".into()) };
    let got = (rc.n_total, rc.shots_per_label, rc.params.temperature, rc.params.top_p, e.count);
    if got != (5000, 5, 1.0, 1.0, 300) {
        return Err(format!("(n_total, shots, temperature, top_p, topics) = {got:?}"));
    }
    Ok("n_total=5000 shots_per_label=5 temperature=1.0 top_p=1.0 topics=300".into())
}

pub fn check_cost_ledger() -> Check {
    let mut table = PriceTable::default();
    table.insert("m", ModelPrice { input_price_per_1k: "0.001".parse().unwrap(), output_price_per_1k: "0.002".parse().unwrap() });
    let unit = cost_of(TokenUsage { prompt_tokens: 1000, completion_tokens: 1000 }, "m", &table).map_err(|e| e.to_string())?;
    if unit != "0.003".parse::<Decimal>().unwrap() {
        return Err(format!("unit example gave {unit}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let usages: Vec<TokenUsage> = (0..500)
        .map(|_| TokenUsage { prompt_tokens: rng.random_range(0..5000), completion_tokens: rng.random_range(0..2000) })
        .collect();
    let ledger = |us: &[TokenUsage]| -> CostLedger {
        let mut l = CostLedger::default();
        for u in us {
            l.charge(*u, "m", &table).unwrap();
        }
        l
    };
    let whole = ledger(&usages);
    for split in [0, 1, 137, 250, 499, 500] {
        let (a, b) = usages.split_at(split);
        if ledger(a) + ledger(b) != whole {
            return Err(format!("split at {split} differs"));
        }
    }
    Ok(format!("0.003 exact; 6 splits of 500 calls sum to {}", whole.cost_usd))
}

/// Pearson statistic of `draws` against a uniform distribution over
/// `categories`, with the critical value at `alpha`.
pub fn chi_square_uniform(counts: &BTreeMap<String, u64>, categories: usize, draws: u64, alpha: f64) -> (f64, f64) {
    let expected = draws as f64 / categories as f64;
    let observed_zero = categories - counts.len();
    let stat = counts.values().map(|&o| (o as f64 - expected).powi(2) / expected).sum::<f64>() + observed_zero as f64 * expected;
    let crit = ChiSquared::new((categories - 1) as f64).unwrap().inverse_cdf(1.0 - alpha);
    (stat, crit)
}

pub fn check_sampling_uniformity() -> Check {
    let kg = kg();
    let types = kg.types();
    if types.len() != 4 {
        return Err(format!("fixture has {} types", types.len()));
    }
    let nodes: usize = types.iter().map(|t| kg.nodes_of_type(t).unwrap().len()).sum();
    let mut rng = SeededRng::new(2024).substream(&[synthkit::rng::tags::TOPIC]);
    let draws = sample_entity_topics_among(&kg, &types, 10_000, &mut rng).map_err(|e| e.to_string())?;
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for t in &draws {
        *counts.entry(t.primary_name.clone()).or_default() += 1;
    }
    let (stat, crit) = chi_square_uniform(&counts, nodes, 10_000, 0.001);
    if stat >= crit {
        return Err(format!("chi-square {stat:.2} >= critical {crit:.2} ({} categories)", nodes));
    }
    Ok(format!("chi-square {stat:.2} < {crit:.2} over {nodes} entities of 4 types"))
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}
