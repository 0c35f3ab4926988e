use std::sync::Arc;

use convtest::demo::{demo_config, order_support_backend};
use convtest::generators::Stage;
use convtest::llm::LlmClient;
use convtest::model::TestCase;
use convtest::pipeline::{run_pipeline, ArtifactIndex, ArtifactStore, RunConfig};
use convtest_curation::{
    compute_statuses, CurationConfig, CurationError, CurationService, Decision, ListQuery, Status, Verdict,
};
use proptest::prelude::*;

fn demo_run(root: &std::path::Path, id: &str) {
    let client = LlmClient::new(Arc::new(order_support_backend()), 4);
    run_pipeline(root, demo_config(id), client).unwrap();
}

fn verdict(artifact: &str, who: &str, d: Decision) -> Verdict {
    Verdict {
        artifact_id: artifact.into(),
        annotator_id: who.into(),
        decision: d,
        note: None,
        timestamp: 0,
    }
}

fn service(root: &std::path::Path) -> CurationService {
    CurationService::new(root, CurationConfig::default())
}

fn accept_all_reviewed(svc: &CurationService, run: &str) {
    let page = svc
        .list_artifacts(
            run,
            &ListQuery {
                page_size: Some(1000),
                ..ListQuery::default()
            },
        )
        .unwrap();
    for item in page.items.iter().filter(|i| svc.config().reviewed_stages.contains(&i.stage)) {
        for who in ["ann1", "ann2"] {
            svc.submit_verdict(Some(run), verdict(&item.id, who, Decision::Accept)).unwrap();
        }
    }
}

#[test]
fn two_accepts_accept_one_reject_removes() {
    let tmp = tempfile::tempdir().unwrap();
    demo_run(tmp.path(), "r");
    let svc = service(tmp.path());
    let s = svc.submit_verdict(None, verdict("intent-000-p0", "a", Decision::Accept)).unwrap();
    assert_eq!(s.status, Status::Pending);
    let s = svc.submit_verdict(None, verdict("intent-000-p0", "b", Decision::Accept)).unwrap();
    assert_eq!(s.status, Status::Accepted);

    svc.submit_verdict(None, verdict("intent-001-p0", "a", Decision::Accept)).unwrap();
    let s = svc.submit_verdict(None, verdict("intent-001-p0", "b", Decision::Reject)).unwrap();
    assert_eq!(s.status, Status::Removed);
}

#[test]
fn rejecting_a_procedure_removes_its_descendants() {
    let tmp = tempfile::tempdir().unwrap();
    demo_run(tmp.path(), "r");
    let svc = service(tmp.path());
    svc.submit_verdict(Some("r"), verdict("intent-000-p0", "a", Decision::Reject)).unwrap();
    let cg = svc.artifact(Some("r"), "intent-000-p0-cg").unwrap();
    assert_eq!(cg.summary.status.status, Status::Removed);
    assert_eq!(cg.summary.status.removed_via.as_deref(), Some("intent-000-p0"));
    let other = svc.artifact(Some("r"), "intent-001-p0-cg").unwrap();
    assert_eq!(other.summary.status.status, Status::Pending);
}

#[test]
fn hand_built_lineage_cascade() {
    let mut idx = ArtifactIndex::default();
    idx.insert("i".into(), Stage::Intents, None);
    idx.insert("p".into(), Stage::Procedures, Some("i".into()));
    idx.insert("p-apis".into(), Stage::Apis, Some("p".into()));
    idx.insert("p-fg".into(), Stage::Flowgraphs, Some("p-apis".into()));
    idx.insert("p-cg".into(), Stage::Convgraphs, Some("p-fg".into()));
    idx.insert("p-cg-c0".into(), Stage::Conversations, Some("p-cg".into()));
    idx.insert("q".into(), Stage::Procedures, Some("i".into()));
    let st = compute_statuses(&idx, &[verdict("p", "a", Decision::Reject)], 2);
    let removed: Vec<&str> = st
        .values()
        .filter(|s| s.status == Status::Removed)
        .map(|s| s.artifact_id.as_str())
        .collect();
    assert_eq!(removed, vec!["p", "p-apis", "p-cg", "p-cg-c0", "p-fg"]);
    assert_eq!(st["q"].status, Status::Pending);
    assert_eq!(st["i"].status, Status::Pending);
}

#[test]
fn filters_and_unknown_run() {
    let tmp = tempfile::tempdir().unwrap();
    demo_run(tmp.path(), "r");
    let svc = service(tmp.path());
    let fg = svc
        .list_artifacts(
            "r",
            &ListQuery {
                stage: Some(Stage::Flowgraphs),
                ..ListQuery::default()
            },
        )
        .unwrap();
    assert_eq!(fg.total, 2);
    assert!(fg.items.iter().all(|i| i.stage == Stage::Flowgraphs));
    assert!(fg.items.iter().all(|i| i.validation_report.is_some()));

    svc.submit_verdict(Some("r"), verdict("intent-000-p0-fg", "a", Decision::Accept)).unwrap();
    svc.submit_verdict(Some("r"), verdict("intent-000-p0-fg", "b", Decision::Accept)).unwrap();
    let pending = svc
        .list_artifacts(
            "r",
            &ListQuery {
                stage: Some(Stage::Flowgraphs),
                status: Some(Status::Pending),
                ..ListQuery::default()
            },
        )
        .unwrap();
    assert_eq!(pending.items.len(), 1);
    assert_eq!(pending.items[0].id, "intent-001-p0-fg");

    assert!(matches!(
        svc.list_artifacts("nope", &ListQuery::default()),
        Err(CurationError::UnknownRun(_))
    ));
    assert!(matches!(
        svc.submit_verdict(Some("r"), verdict("ghost", "a", Decision::Accept)),
        Err(CurationError::UnknownArtifact(_))
    ));
}

#[test]
fn listing_is_ordered_and_paged() {
    let tmp = tempfile::tempdir().unwrap();
    demo_run(tmp.path(), "r");
    let svc = service(tmp.path());
    let all = svc
        .list_artifacts(
            "r",
            &ListQuery {
                page_size: Some(1000),
                ..ListQuery::default()
            },
        )
        .unwrap();
    let ids: Vec<&str> = all.items.iter().map(|i| i.id.as_str()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    let p1 = svc
        .list_artifacts(
            "r",
            &ListQuery {
                page: 1,
                page_size: Some(5),
                ..ListQuery::default()
            },
        )
        .unwrap();
    assert_eq!(p1.total, all.total);
    assert_eq!(p1.items.iter().map(|i| i.id.as_str()).collect::<Vec<_>>(), ids[5..10].to_vec());
}

#[test]
fn identical_verdict_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    demo_run(tmp.path(), "r");
    let svc = service(tmp.path());
    let a = svc.submit_verdict(None, verdict("intent-000", "a", Decision::Accept)).unwrap();
    let verdicts = std::fs::read(tmp.path().join("r/curation/verdicts.jsonl")).unwrap();
    let b = svc.submit_verdict(None, verdict("intent-000", "a", Decision::Accept)).unwrap();
    assert_eq!(a, b);
    assert_eq!(std::fs::read(tmp.path().join("r/curation/verdicts.jsonl")).unwrap(), verdicts);
    assert_eq!(svc.artifact(None, "intent-000").unwrap().verdicts.len(), 1);
}

#[test]
fn export_requires_complete_curation_unless_forced() {
    let tmp = tempfile::tempdir().unwrap();
    demo_run(tmp.path(), "r");
    let svc = service(tmp.path());
    assert!(matches!(svc.export("r", false), Err(CurationError::IncompleteCuration { .. })));
    let forced = svc.export("r", true).unwrap();
    assert!(forced.forced);
    let store = ArtifactStore::open(tmp.path(), "r").unwrap();
    let all: Vec<TestCase> = store.read_jsonl("tests.jsonl").unwrap();
    assert_eq!(forced.tests, all);
}

#[test]
fn all_accepted_exports_everything() {
    let tmp = tempfile::tempdir().unwrap();
    demo_run(tmp.path(), "r");
    let svc = service(tmp.path());
    accept_all_reviewed(&svc, "r");
    let bundle = svc.export("r", false).unwrap();
    let store = ArtifactStore::open(tmp.path(), "r").unwrap();
    let all: Vec<TestCase> = store.read_jsonl("tests.jsonl").unwrap();
    assert_eq!(bundle.tests, all);
    assert!(bundle.stats.is_conserved());
    assert!(bundle.stats.stages.values().all(|s| s.manually_filtered == 0));
    let on_disk: Vec<TestCase> = store.read_jsonl("curation/tests.jsonl").unwrap();
    assert_eq!(on_disk, all);
}

#[test]
fn removed_conversation_drops_its_tests() {
    let tmp = tempfile::tempdir().unwrap();
    demo_run(tmp.path(), "r");
    let svc = service(tmp.path());
    accept_all_reviewed(&svc, "r");
    let store = ArtifactStore::open(tmp.path(), "r").unwrap();
    let all: Vec<TestCase> = store.read_jsonl("tests.jsonl").unwrap();
    let victim = all[0].conversation_id.clone();
    svc.submit_verdict(Some("r"), verdict(&victim, "ann2", Decision::Reject)).unwrap();
    let bundle = svc.export("r", false).unwrap();
    assert!(bundle.tests.iter().all(|t| t.conversation_id != victim));
    assert_eq!(
        bundle.tests.len(),
        all.iter().filter(|t| t.conversation_id != victim).count()
    );
    let conv = bundle.stats.get(Stage::Conversations);
    assert_eq!(conv.manually_filtered, 1);
    let removed_tests = all.len() - bundle.tests.len();
    assert_eq!(bundle.stats.get(Stage::Tests).manually_filtered, removed_tests);
    assert!(bundle.stats.is_conserved());
}

#[test]
fn empty_run_exports_empty_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let store = ArtifactStore::new(tmp.path(), "empty");
    store.write_json("config.json", &RunConfig::default()).unwrap();
    let svc = service(tmp.path());
    let bundle = svc.export("empty", false).unwrap();
    assert!(bundle.tests.is_empty());
    assert!(bundle.stats.stages.values().all(|s| *s == Default::default()));
}

fn fixed_index() -> ArtifactIndex {
    let mut idx = ArtifactIndex::default();
    idx.insert("i".into(), Stage::Intents, None);
    for p in ["p0", "p1"] {
        idx.insert(p.into(), Stage::Procedures, Some("i".into()));
        let cg = format!("{p}-cg");
        idx.insert(cg.clone(), Stage::Convgraphs, Some(p.into()));
        for c in 0..2 {
            let conv = format!("{cg}-c{c}");
            idx.insert(conv.clone(), Stage::Conversations, Some(cg.clone()));
            for t in 0..2 {
                idx.insert(format!("{conv}-t{t}"), Stage::Tests, Some(conv.clone()));
            }
        }
    }
    idx
}

fn kept(idx: &ArtifactIndex, history: &[Verdict]) -> Vec<String> {
    compute_statuses(idx, history, 2)
        .into_values()
        .filter(|s| s.status != Status::Removed)
        .map(|s| s.artifact_id)
        .collect()
}

proptest! {
    #[test]
    fn adding_a_reject_only_shrinks_the_export(
        picks in proptest::collection::vec((0usize..15, 0usize..3, any::<bool>()), 0..30),
        extra in (0usize..15, 0usize..3),
    ) {
        let idx = fixed_index();
        let ids: Vec<String> = idx.entries.keys().cloned().collect();
        let who = ["a", "b", "c"];
        let history: Vec<Verdict> = picks
            .iter()
            .map(|(i, w, acc)| verdict(&ids[*i], who[*w], if *acc { Decision::Accept } else { Decision::Reject }))
            .collect();
        let before = kept(&idx, &history);
        let mut more = history.clone();
        more.push(verdict(&ids[extra.0], who[extra.1], Decision::Reject));
        let after = kept(&idx, &more);
        prop_assert!(after.iter().all(|id| before.contains(id)));

        // recomputing from scratch gives the same answer
        prop_assert_eq!(compute_statuses(&idx, &history, 2), compute_statuses(&idx, &history, 2));
        // replaying an identical final verdict changes nothing
        if let Some(last) = history.last() {
            let mut dup = history.clone();
            dup.push(last.clone());
            prop_assert_eq!(compute_statuses(&idx, &dup, 2), compute_statuses(&idx, &history, 2));
        }
    }
}
