mod common;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use synthkit::dataset::{read_dataset, ReadMode};
use synthkit::genpipe::{run_generation, write_run, RunConfig, RunInputs, TopicSupply};
use synthkit::kg::{TopicKind, TopicSource};
use synthkit::llm::{FnBackend, LlmClient, LlmError, MockBackend, PriceTable};
use synthkit::promptkit::TemplatePack;
use synthkit::{PromptMode, TaskFamily};

fn config(task: &str, n: usize) -> RunConfig {
    RunConfig { task_id: task.into(), n_total: n, seed: 17, ..Default::default() }
}

/// Answers through the mock but remembers every prompt by hash.
fn recording_mock(seen: Arc<Mutex<BTreeMap<String, String>>>) -> FnBackend {
    let mock = MockBackend::default();
    FnBackend::new(move |req| {
        seen.lock().unwrap().insert(req.prompt.sha256.clone(), req.prompt.text.clone());
        mock.complete(req).map(|c| c.text)
    })
}

#[test]
fn records_carry_the_topic_and_style_their_prompt_used() {
    let kg = common::kg();
    let styles = common::styles();
    let pack = TemplatePack::builtin();
    for family in TaskFamily::ALL {
        let task = common::task(family);
        let seen = Arc::new(Mutex::new(BTreeMap::new()));
        let inputs = RunInputs {
            task: &task,
            pack: &pack,
            topics: TopicSupply::Kg(&kg),
            styles: Some(&styles),
            demos: None,
            prices: None,
        };
        let out = run_generation(&config(&task.id, 30), &inputs, &recording_mock(seen.clone())).unwrap();
        assert_eq!(out.records.len(), 30, "{family}");
        let seen = seen.lock().unwrap();
        for (i, r) in out.records.iter().enumerate() {
            assert_eq!(r.label, task.labels[i % task.labels.len()].name, "{family} slot {i}");
            assert_eq!(r.prompt_mode, PromptMode::KnowledgeInfused);
            let prompt = seen.get(&r.prompt_sha256).expect("record hash names a sent prompt");
            let topic = r.topic.as_ref().unwrap();
            assert_eq!(topic.source, TopicSource::Kg);
            assert!(prompt.contains(&topic.primary_name), "{family}: {prompt}");
            if let Some(second) = &topic.secondary_name {
                assert!(prompt.contains(second));
            }
            let style = r.style.as_deref().unwrap();
            assert!(styles.contains(style));
            if family != TaskFamily::NliPair {
                assert!(prompt.contains(style));
            }
            assert!(r.valid && r.check().is_ok());
            match family {
                TaskFamily::RelationExtraction => assert_eq!(topic.kind, TopicKind::EntityPair),
                TaskFamily::NliPair => {
                    assert!(r.text_secondary.is_some());
                    assert!(seen.contains_key(r.secondary_prompt_sha256.as_ref().unwrap()));
                }
                _ => assert_eq!(topic.kind, TopicKind::Entity),
            }
        }
    }
}

#[test]
fn relation_records_follow_kg_edges_or_are_negative() {
    let kg = common::kg();
    let styles = common::styles();
    let pack = TemplatePack::builtin();
    let task = common::task(TaskFamily::RelationExtraction);
    let inputs =
        RunInputs { task: &task, pack: &pack, topics: TopicSupply::Kg(&kg), styles: Some(&styles), demos: None, prices: None };
    let out = run_generation(&config(&task.id, 40), &inputs, &MockBackend::default()).unwrap();
    let name_to_id: BTreeMap<&str, &str> = kg.nodes().map(|n| (n.name.as_str(), n.id.as_str())).collect();
    for r in &out.records {
        let t = r.topic.as_ref().unwrap();
        let (h, tl) = (name_to_id[t.primary_name.as_str()], name_to_id[t.secondary_name.as_deref().unwrap()]);
        let linked = kg.edges().iter().any(|e| e.head_id == h && e.tail_id == tl);
        let negative = task.label(&r.label).map(|l| l.negative).unwrap_or(false);
        assert_eq!(linked, !negative, "{} {:?}", r.label, t);
    }
}

#[test]
fn failed_attempts_are_regenerated_and_accounted() {
    let kg = common::kg();
    let styles = common::styles();
    let pack = TemplatePack::builtin();
    let task = common::task(TaskFamily::Ner);
    let mock = MockBackend::default();
    // Roughly half of all prompts get an empty reply.
    let flaky = FnBackend::new(move |req| {
        if req.prompt.sha256.as_bytes()[0] < b'8' {
            Ok(String::new())
        } else {
            mock.complete(req).map(|c| c.text)
        }
    });
    let inputs =
        RunInputs { task: &task, pack: &pack, topics: TopicSupply::Kg(&kg), styles: Some(&styles), demos: None, prices: None };
    let out = run_generation(&config(&task.id, 120), &inputs, &flaky).unwrap();
    let c = &out.manifest.counts;
    assert!(out.manifest.accounting_holds());
    assert!(out.manifest.complete);
    assert_eq!(c.valid, out.records.len());
    assert_eq!(c.rejected_final, out.rejected.len());
    assert!(c.rejected_final > 0 && c.valid > c.rejected_final);
    assert_eq!(c.rejected_by_reason.get("empty_reply"), Some(&c.rejected_final));
    let failed = c.attempt_rejections["empty_reply"];
    assert_eq!(c.total_attempts, c.valid + failed);
    assert!(out.rejected.iter().all(|r| !r.valid && r.rejection_reason.as_deref() == Some("empty_reply")));

    let dir = tempfile::tempdir().unwrap();
    let paths = write_run(&out, dir.path()).unwrap();
    let back = read_dataset(&paths.dataset, ReadMode::Strict).unwrap();
    assert_eq!(back.records, out.records);
    let rejected = read_dataset(&paths.rejected, ReadMode::Strict).unwrap();
    assert_eq!(rejected.records.len(), c.rejected_final);
}

#[test]
fn transport_failure_aborts_with_partial_output() {
    let kg = common::kg();
    let styles = common::styles();
    let pack = TemplatePack::builtin();
    let task = common::task(TaskFamily::TextClassification);
    let mock = MockBackend::default();
    let calls = AtomicUsize::new(0);
    let failing = FnBackend::new(move |req| {
        if calls.fetch_add(1, Ordering::SeqCst) >= 25 {
            return Err(LlmError::Exhausted { attempts: 6, last: "HTTP 503".into() });
        }
        mock.complete(req).map(|c| c.text)
    });
    let inputs =
        RunInputs { task: &task, pack: &pack, topics: TopicSupply::Kg(&kg), styles: Some(&styles), demos: None, prices: None };
    let out = run_generation(&RunConfig { max_in_flight: 1, ..config(&task.id, 100) }, &inputs, &failing).unwrap();
    assert!(matches!(out.abort, Some(LlmError::Exhausted { .. })));
    assert!(!out.manifest.complete);
    assert!(out.manifest.abort_reason.as_deref().unwrap().contains("503"));
    assert!(out.manifest.accounting_holds());
    assert_eq!(out.records.len(), 25);
    assert_eq!(out.manifest.counts.unprocessed, 75);
}

#[test]
fn plain_and_demo_runs_need_no_topics() {
    let pack = TemplatePack::builtin();
    let task = common::task(TaskFamily::NliPair);
    let demos = common::few_shot(&task.id);
    for mode in [PromptMode::Plain, PromptMode::Demo] {
        let inputs =
            RunInputs { task: &task, pack: &pack, topics: TopicSupply::None, styles: None, demos: Some(&demos), prices: None };
        let out =
            run_generation(&RunConfig { mode, shots_per_label: 2, ..config(&task.id, 12) }, &inputs, &MockBackend::default())
                .unwrap();
        assert_eq!(out.records.len(), 12);
        assert!(out.records.iter().all(|r| r.topic.is_none() && r.style.is_none() && r.prompt_mode == mode));
    }
}

#[test]
fn cost_is_reported_with_a_price_table() {
    let kg = common::kg();
    let styles = common::styles();
    let pack = TemplatePack::builtin();
    let task = common::task(TaskFamily::Ner);
    let prices = PriceTable::load(&common::data("prices.toml")).unwrap();
    let inputs = RunInputs {
        task: &task,
        pack: &pack,
        topics: TopicSupply::Kg(&kg),
        styles: Some(&styles),
        demos: None,
        prices: Some(&prices),
    };
    let out = run_generation(&config(&task.id, 20), &inputs, &MockBackend::default()).unwrap();
    let u = out.manifest.usage;
    let want = synthkit::llm::cost_of(u, "gpt-3.5-turbo-0301", &prices).unwrap();
    assert_eq!(out.manifest.cost_usd, Some(want));
    assert_eq!(u, out.records.iter().map(|r| r.usage).sum());
}
