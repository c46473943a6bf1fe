use std::collections::BTreeMap;
use std::sync::Arc;

use skumap_core::clock::LogicalClock;
use skumap_core::eval::shipped_exemplars;
use skumap_core::model::{MatchDimension, MatchLabel, Provenance, Resolution};
use skumap_core::pipeline::{Engine, EngineConfig, MappingMode, PipelineError};
use skumap_core::provider::{HashEmbedder, ProviderKind, Providers};
use skumap_core::review::{EscalationReason, ReviewDecision, ReviewError, ReviewQueue, ReviewStatus};
use skumap_core::scenario::{in_memory_engine, stub_providers, stub_script, ScriptedPair, STUB_DIM, STUB_SEED};
use skumap_core::traces::{StoreMeta, TraceStore, ValidationStatus};

use MatchDimension::*;
use MatchLabel::*;

const BASE: &str = "Coca-Cola Zero Sugar 500ml";
const COMPARED: &str = "Coke Zero 0.5L Bottle";

fn coke(compared: &str) -> ScriptedPair {
    ScriptedPair::agreeing(BASE, compared, Equivalent)
        .question(Brand, "Is Coke the same brand as Coca-Cola?", "Yes, Coke is the Coca-Cola trademark.")
        .question(Quantity, "Is 0.5L equal to 500ml?", "Yes, 0.5 litres is 500 millilitres.")
}

fn engine(pairs: &[ScriptedPair]) -> Engine {
    in_memory_engine(stub_providers(&stub_script(pairs)))
}

#[test]
fn identical_titles_need_no_questions() {
    let e = engine(&[ScriptedPair::agreeing(BASE, BASE, Equivalent)]);
    let pair = e.new_pair(BASE, BASE).unwrap();
    let out = e.map_pair(&pair, MappingMode::Q2k).unwrap();
    assert_eq!(out.result.verdict.label, Equivalent);
    assert_eq!(out.record.m, 0);
    assert_eq!(out.result.web_queries_issued, 0);
    assert_eq!(out.record.completion_calls, 2);
    assert!(e.store().is_empty());
    assert!(out.review_item.is_none());
}

#[test]
fn fresh_then_reuse() {
    let e = engine(&[coke(COMPARED), coke("Coke Zero Sugar 0.5 L")]);
    let first = e.map_pair(&e.new_pair(BASE, COMPARED).unwrap(), MappingMode::Q2k).unwrap();
    assert_eq!(first.result.verdict.provenance, Provenance::Q2kFresh);
    assert!(!first.result.dedup_activated);
    assert_eq!(first.result.web_queries_issued, 2);
    assert_eq!(first.record.completion_calls, 1 + 2 + 1);
    assert!(!first.record.gate_judged, "empty store is never judged");
    assert!(first.result.answers.iter().all(|a| a.resolved_by == Resolution::FreshSearch));
    let tid = first.record.inserted_trace_id.expect("fresh path stores a trace");
    assert_eq!(e.store().len(), 1);

    let pair = e.new_pair(BASE, "Coke Zero Sugar 0.5 L").unwrap();
    let second = e.map_pair(&pair, MappingMode::Q2k).unwrap();
    assert_eq!(second.result.verdict.provenance, Provenance::Q2kReused);
    assert!(second.result.dedup_activated);
    assert_eq!(second.result.web_queries_issued, 0);
    assert_eq!(second.record.reused_trace_id, Some(tid));
    assert_eq!(second.record.completion_calls, 1 + 1 + 1);
    assert_eq!(e.providers().call_log().count_for(pair.pair_id(), ProviderKind::Search), 0);
    assert_eq!(e.store().len(), 1, "reuse inserts nothing");
    for (q, a) in second.result.questions.iter().zip(&second.result.answers) {
        assert_eq!(a.question_id, q.question_id);
        assert_eq!(a.resolved_by, Resolution::ReusedTrace);
    }
    assert!(second.result.is_consistent());
}

#[test]
fn insufficient_trace_is_not_reused() {
    let mut other = coke("Coke Zero Sugar 0.5 L");
    other.reuse_ok = false;
    let e = engine(&[coke(COMPARED), other]);
    e.map_pair(&e.new_pair(BASE, COMPARED).unwrap(), MappingMode::Q2k).unwrap();
    let out = e
        .map_pair(&e.new_pair(BASE, "Coke Zero Sugar 0.5 L").unwrap(), MappingMode::Q2k)
        .unwrap();
    assert!(out.record.gate_judged);
    assert!(!out.result.dedup_activated);
    assert_eq!(out.result.web_queries_issued, 2);
    assert_eq!(out.record.completion_calls, 1 + 2 + 1 + 1);
    assert_eq!(e.store().len(), 2);
}

#[test]
fn dissimilar_keys_skip_the_judge() {
    let fanta = ScriptedPair::agreeing("Fanta Orange 1.5L", "Fanta Grape 1.5L", NonEquivalent)
        .question(Variant, "Are orange and grape the same flavour?", "No, they are different flavours.");
    let e = engine(&[coke(COMPARED), fanta]);
    e.map_pair(&e.new_pair(BASE, COMPARED).unwrap(), MappingMode::Q2k).unwrap();
    let out = e
        .map_pair(&e.new_pair("Fanta Orange 1.5L", "Fanta Grape 1.5L").unwrap(), MappingMode::Q2k)
        .unwrap();
    assert!(!out.record.gate_judged);
    assert_eq!(out.record.completion_calls, 1 + 1 + 1);
    assert_eq!(out.result.verdict.label, NonEquivalent);
}

#[test]
fn low_confidence_escalates_and_high_does_not() {
    let mut unsure = coke(COMPARED);
    unsure.confidence = 0.4;
    let e = engine(&[unsure]);
    let out = e.map_pair(&e.new_pair(BASE, COMPARED).unwrap(), MappingMode::Q2k).unwrap();
    let item = out.review_item.expect("0.4 is below the threshold");
    assert_eq!(item.reason, EscalationReason::LowConfidence);
    assert_eq!(item.trace_id, out.record.inserted_trace_id);
    assert_eq!(e.queue().list(Some(ReviewStatus::Pending)).len(), 1);

    let e = engine(&[coke(COMPARED)]);
    let out = e.map_pair(&e.new_pair(BASE, COMPARED).unwrap(), MappingMode::Q2k).unwrap();
    assert!(out.review_item.is_none());
    assert!(e.queue().is_empty());
    assert!(matches!(
        e.escalate(out.result, false),
        Err(PipelineError::NotEscalatable(_))
    ));
}

#[test]
fn baselines_never_escalate() {
    let mut unsure = coke(COMPARED);
    unsure.confidence = 0.1;
    let e = engine(&[unsure]);
    for mode in [MappingMode::ZeroShot, MappingMode::FewShot, MappingMode::WebSearch] {
        let out = e.map_pair(&e.new_pair(BASE, COMPARED).unwrap(), mode).unwrap();
        assert!(out.review_item.is_none(), "{mode}");
    }
    assert!(e.queue().is_empty());
}

#[test]
fn missing_evidence_escalates_without_a_trace() {
    let mut script = stub_script(&[coke(COMPARED)]);
    script.search.clear();
    let e = in_memory_engine(stub_providers(&script));
    let out = e.map_pair(&e.new_pair(BASE, COMPARED).unwrap(), MappingMode::Q2k).unwrap();
    assert_eq!(out.result.verdict.confidence, 0.0);
    assert!(out.result.answers.is_empty());
    assert!(e.store().is_empty());
    assert_eq!(out.review_item.unwrap().reason, EscalationReason::NoEvidenceFound);
}

#[test]
fn conservation_holds_on_every_path() {
    let mut pairs = vec![ScriptedPair::agreeing(BASE, BASE, Equivalent), coke(COMPARED)];
    for c in ["Coke Zero 500 ml", "Coca Cola Zero 0.5l"] {
        pairs.push(coke(c));
    }
    let mut refused = coke("Coke Zero PET 0.5L");
    refused.reuse_ok = false;
    pairs.push(refused);
    let e = engine(&pairs);
    for p in &pairs {
        let out = e.map_pair(&e.new_pair(&p.base, &p.compared).unwrap(), MappingMode::Q2k).unwrap();
        let r = &out.record;
        let answered = if r.dedup_activated { 0 } else { r.m };
        assert_eq!(r.completion_calls, 1 + answered + u32::from(r.gate_judged) + 1, "{}", p.compared);
        assert_eq!(r.web_queries_issued, answered);
    }
}

#[test]
fn approve_promotes_the_trace() {
    let mut unsure = coke(COMPARED);
    unsure.confidence = 0.5;
    let e = engine(&[unsure]);
    let out = e.map_pair(&e.new_pair(BASE, COMPARED).unwrap(), MappingMode::Q2k).unwrap();
    let item = out.review_item.unwrap();
    let done = e
        .apply_review(item.item_id, ReviewDecision::Approve { note: Some("fine".into()) })
        .unwrap();
    assert_eq!(done.status, ReviewStatus::Approved);
    let snap = e.store().snapshot();
    assert_eq!(snap.len(), 2);
    assert_eq!(snap[1].validation_status, ValidationStatus::HumanValidated);
    assert_eq!(snap[1].concat_key, snap[0].concat_key);
    assert!(matches!(
        e.apply_review(item.item_id, ReviewDecision::Approve { note: None }),
        Err(PipelineError::Review(ReviewError::AlreadyDecided(_)))
    ));
}

#[test]
fn override_outranks_the_machine_trace() {
    let mut unsure = coke(COMPARED);
    unsure.confidence = 0.3;
    unsure.label = NonEquivalent;
    let e = engine(&[unsure]);
    let out = e.map_pair(&e.new_pair(BASE, COMPARED).unwrap(), MappingMode::Q2k).unwrap();
    let item = out.review_item.unwrap();
    let decision = ReviewDecision::Override {
        corrected_label: Equivalent,
        note: Some("same SKU, different size notation".into()),
    };
    let done = e.apply_review(item.item_id, decision).unwrap();
    assert_eq!(done.final_label(), Equivalent);
    assert_eq!(done.result.verdict.label, Equivalent);

    let key = e.store().snapshot()[0].concat_key.clone();
    let hits = e
        .store()
        .retrieve_topk(e.providers(), &skumap_core::provider::CallScope::detached(), &key, 5)
        .unwrap();
    assert_eq!(hits[0].trace.validation_status, ValidationStatus::HumanValidated);
    assert!(hits.iter().all(|h| h.trace.trace_id != out.record.inserted_trace_id.unwrap()));
    assert!(hits[0].trace.answers.answers[0].answer_text.contains("same SKU"));
    assert!(matches!(
        e.apply_review(999, ReviewDecision::Approve { note: None }),
        Err(PipelineError::Review(ReviewError::NotFound(999)))
    ));
}

#[test]
fn batch_keeps_input_order_and_worker_count_does_not_matter() {
    let titles = [
        COMPARED,
        "Coke Zero 500 ml",
        "Coca Cola Zero 0.5l",
        "Coke Zero Sugar 0.5 L",
        "Coke Zero PET 0.5L",
        "Coca-Cola Zero 500 mL bottle",
    ];
    let pairs: Vec<ScriptedPair> = titles.iter().map(|c| coke(c)).collect();
    let run = |workers: usize| {
        let e = engine(&pairs);
        let batch: Vec<_> = titles.iter().map(|c| e.new_pair(BASE, c).unwrap()).collect();
        let out = e.run_batch(&batch, MappingMode::Q2k, workers).unwrap();
        let ids: Vec<_> = out.log.records.iter().map(|r| r.index).collect();
        assert_eq!(ids, (0..titles.len()).collect::<Vec<_>>());
        (out.log.to_jsonl(), e.store().len())
    };
    let (one, stored_one) = run(1);
    let (eight, stored_eight) = run(8);
    assert_eq!(stored_one, 1, "only the first pair searches");
    assert_eq!(stored_one, stored_eight);
    assert_eq!(one, eight);
    assert_eq!(run(1).0, one);
}

#[test]
fn empty_batch_is_rejected() {
    let e = engine(&[]);
    assert!(matches!(e.run_batch(&[], MappingMode::Q2k, 4), Err(PipelineError::EmptyBatch)));
}

#[test]
fn failed_pairs_are_recorded_not_fatal() {
    let e = engine(&[coke(COMPARED)]);
    let batch = vec![
        e.new_pair(BASE, COMPARED).unwrap(),
        e.new_pair("Unscripted A", "Unscripted B").unwrap(),
    ];
    let out = e.run_batch(&batch, MappingMode::Q2k, 2).unwrap();
    assert!(!out.log.records[0].failed());
    assert!(out.log.records[1].failed());
    assert!(out.results[1].is_none());
    assert_eq!(e.stats().counters.failures, 1);
}

#[test]
fn baseline_call_shapes() {
    let chat = Arc::new(stub_script(&[coke(COMPARED)]).chat());
    let script = stub_script(&[coke(COMPARED)]);
    let providers = Providers::new(
        chat.clone(),
        Arc::new(HashEmbedder::new(STUB_DIM, STUB_SEED)),
        Arc::new(script.search_engine()),
    );
    let e = in_memory_engine(providers);

    let zs = e.map_pair(&e.new_pair(BASE, COMPARED).unwrap(), MappingMode::ZeroShot).unwrap();
    assert_eq!((zs.record.completion_calls, zs.record.web_queries_issued), (1, 0));
    assert_eq!(zs.result.verdict.provenance, Provenance::ZeroShot);

    let fs = e.map_pair(&e.new_pair(BASE, COMPARED).unwrap(), MappingMode::FewShot).unwrap();
    assert_eq!((fs.record.completion_calls, fs.record.web_queries_issued), (1, 0));
    let prompt = chat.captured().last().unwrap().system_prompt.clone();
    for (i, ex) in shipped_exemplars().iter().enumerate() {
        assert!(prompt.contains(&format!("Example {}: \"{}\"", i + 1, ex.base_product)), "{prompt}");
    }

    let ws = e.map_pair(&e.new_pair(BASE, COMPARED).unwrap(), MappingMode::WebSearch).unwrap();
    assert_eq!((ws.record.completion_calls, ws.record.web_queries_issued), (1, 1));

    let rule = e.map_pair(&e.new_pair(BASE, COMPARED).unwrap(), MappingMode::Rule).unwrap();
    assert_eq!(rule.record.completion_calls, 0);
    assert_eq!(rule.result.verdict.provenance, Provenance::Rule);
    assert_eq!(e.store().len(), 0);
}

#[test]
fn few_shot_without_exemplars_fails() {
    let providers = stub_providers(&stub_script(&[coke(COMPARED)]));
    let clock = Arc::new(LogicalClock::new());
    let store = Arc::new(TraceStore::in_memory(StoreMeta::for_providers(&providers), clock.clone()));
    let e = Engine::new(providers, store, Arc::new(ReviewQueue::in_memory(clock)));
    let pair = e.new_pair(BASE, COMPARED).unwrap();
    assert!(matches!(e.map_pair(&pair, MappingMode::FewShot), Err(PipelineError::MissingExemplars)));
}

#[test]
fn raised_threshold_escalates_more() {
    let e = engine(&[coke(COMPARED)]).with_config(EngineConfig {
        theta: 0.95,
        ..EngineConfig::default()
    });
    let out = e.map_pair(&e.new_pair(BASE, COMPARED).unwrap(), MappingMode::Q2k).unwrap();
    assert!(out.record.escalated);
    let reasons: BTreeMap<_, _> = e.queue().list(None).iter().map(|i| (i.item_id, i.reason)).collect();
    assert_eq!(reasons.into_values().collect::<Vec<_>>(), vec![EscalationReason::LowConfidence]);
}
