use std::fs::OpenOptions;
use std::io::Write;
use std::sync::Arc;

use skumap_core::clock::LogicalClock;
use skumap_core::model::MatchLabel::Equivalent;
use skumap_core::model::{MatchDimension, Provenance};
use skumap_core::pipeline::{Engine, MappingMode};
use skumap_core::review::{ReviewQueue, ReviewStatus};
use skumap_core::scenario::{stub_providers, stub_script, ScriptedPair};
use skumap_core::traces::{sidecar_path, StoreMeta, TraceError, TraceStore};

const BASE: &str = "Nongshim Shin Ramyun 120g x 5";

fn pairs() -> Vec<ScriptedPair> {
    ["Shin Ramyun Noodle Soup 5 Pack 120 g", "Nongshim Shin Ramyun 5x120g"]
        .iter()
        .map(|c| {
            let mut p = ScriptedPair::agreeing(BASE, c, Equivalent)
                .question(MatchDimension::Brand, "Is Shin Ramyun made by Nongshim?", "Yes.")
                .question(MatchDimension::Quantity, "Is 5 Pack of 120 g equal to 120g x 5?", "Yes.");
            p.confidence = 0.5;
            p
        })
        .collect()
}

fn open_engine(dir: &std::path::Path) -> Engine {
    let providers = stub_providers(&stub_script(&pairs()));
    let clock = Arc::new(LogicalClock::new());
    let meta = StoreMeta::for_providers(&providers);
    let store = TraceStore::open(&dir.join("traces.jsonl"), meta, clock.clone()).unwrap();
    let queue = ReviewQueue::open(&dir.join("review.jsonl"), clock).unwrap();
    Engine::new(providers, Arc::new(store), Arc::new(queue))
}

#[test]
fn state_survives_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let p = pairs();
    {
        let e = open_engine(dir.path());
        let out = e.map_pair(&e.new_pair(BASE, &p[0].compared).unwrap(), MappingMode::Q2k).unwrap();
        assert_eq!(out.result.verdict.provenance, Provenance::Q2kFresh);
        assert!(out.review_item.is_some());
    }
    let e = open_engine(dir.path());
    assert_eq!(e.store().len(), 1);
    assert_eq!(e.queue().list(Some(ReviewStatus::Pending)).len(), 1);
    let out = e.map_pair(&e.new_pair(BASE, &p[1].compared).unwrap(), MappingMode::Q2k).unwrap();
    assert_eq!(out.result.verdict.provenance, Provenance::Q2kReused);
    assert_eq!(out.result.web_queries_issued, 0);
}

#[test]
fn torn_tail_is_dropped_on_reopen() {
    let dir = tempfile::tempdir().unwrap();
    {
        let e = open_engine(dir.path());
        e.map_pair(&e.new_pair(BASE, &pairs()[0].compared).unwrap(), MappingMode::Q2k).unwrap();
    }
    let path = dir.path().join("traces.jsonl");
    let intact = std::fs::read(&path).unwrap();
    OpenOptions::new()
        .append(true)
        .open(&path)
        .unwrap()
        .write_all(br#"{"trace_id":2,"concat_key":"Quest"#)
        .unwrap();
    let e = open_engine(dir.path());
    assert_eq!(e.store().len(), 1);
    assert_eq!(std::fs::read(&path).unwrap(), intact);
}

#[test]
fn mismatched_embedder_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traces.jsonl");
    let clock = Arc::new(LogicalClock::new());
    TraceStore::open(&path, StoreMeta::new(64, "hash-a"), clock.clone()).unwrap();
    assert!(sidecar_path(&path).exists());
    let err = TraceStore::open(&path, StoreMeta::new(32, "hash-a"), clock.clone()).unwrap_err();
    assert!(matches!(err, TraceError::ConfigMismatch { .. } | TraceError::DimensionMismatch { .. }));
    let err = TraceStore::open(&path, StoreMeta::new(64, "hash-b"), clock.clone()).unwrap_err();
    assert!(matches!(err, TraceError::ConfigMismatch { .. }));
    assert!(TraceStore::open_existing(&path, clock).is_ok());
}

#[test]
fn corrupt_line_is_reported_with_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traces.jsonl");
    let clock = Arc::new(LogicalClock::new());
    TraceStore::open(&path, StoreMeta::new(8, "hash"), clock.clone()).unwrap();
    std::fs::write(&path, "not json\n").unwrap();
    match TraceStore::open(&path, StoreMeta::new(8, "hash"), clock) {
        Err(TraceError::Corrupt { line, .. }) => assert_eq!(line, 1),
        other => panic!("expected corrupt, got {other:?}"),
    }
}
