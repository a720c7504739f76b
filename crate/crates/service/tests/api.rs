use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use triage_core::exec::Execution;
use triage_core::generator::{generate_cases, GeneratedCase};
use triage_core::ingest::write_jsonl;
use triage_core::metrics::BootstrapConfig;
use triage_core::pipeline::PromptTemplates;
use triage_core::{GeneratorConfig, Pipeline, PipelineConfig, StubBackend, TriageStore};
use triage_service::commands::{load_fixture, store_report};
use triage_service::{router, AppState};

const DATE: &str = "2025-10-01";

struct Harness {
    _dir: tempfile::TempDir,
    store: Arc<TriageStore>,
    app: Router,
    cases: Vec<GeneratedCase>,
}

fn quick_pipeline() -> Pipeline<StubBackend> {
    Pipeline::with_config(
        StubBackend::new(),
        PromptTemplates::builtin(),
        PipelineConfig {
            backoff: std::time::Duration::ZERO,
            ..Default::default()
        },
    )
}

fn triaged(n: usize, static_dir: Option<&Path>) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let cases = generate_cases(&GeneratorConfig::new(n, 17)).unwrap();
    let input = dir.path().join("cases.jsonl");
    let records: Vec<_> = cases.iter().map(|g| g.record.clone()).collect();
    write_jsonl(std::fs::File::create(&input).unwrap(), &records).unwrap();
    let store = Arc::new(TriageStore::open(&dir.path().join("store")).unwrap());
    store
        .run_batch(
            &quick_pipeline(),
            DATE.parse().unwrap(),
            &input,
            Execution::Sequential,
        )
        .unwrap();
    let app = router(
        AppState::new(store.clone()),
        static_dir.map(Path::to_path_buf),
    );
    Harness {
        _dir: dir,
        store,
        app,
        cases,
    }
}

async fn send_raw(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, bytes.to_vec())
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let (status, bytes) = send_raw(app, req).await;
    (
        status,
        serde_json::from_slice(&bytes).unwrap_or(Value::Null),
    )
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post(app: &Router, body: Value) -> (StatusCode, Value) {
    send(
        app,
        Request::post("/v1/feedback")
            .header("content-type", "application/json")
            .body(Body::from(body.to_string()))
            .unwrap(),
    )
    .await
}

fn tier_rank(t: &Value) -> u8 {
    match t.as_str().unwrap() {
        "Affirmative" => 0,
        "Maybe" => 1,
        "Negative" => 2,
        other => panic!("unexpected tier {other}"),
    }
}

#[tokio::test]
async fn worklist_is_affirmative_first_and_flags_external_group() {
    let h = triaged(120, None);
    let (status, body) = get(&h.app, &format!("/v1/worklist?date={DATE}")).await;
    assert_eq!(status, StatusCode::OK);
    let rows = body["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 120);
    let ranks: Vec<u8> = rows.iter().map(|r| tier_rank(&r["tier"])).collect();
    assert!(ranks.windows(2).all(|w| w[0] <= w[1]), "{ranks:?}");
    assert!(body.get("notice").is_none());

    let external: Vec<&str> = h
        .cases
        .iter()
        .filter(|g| g.record.case.external_provider_group)
        .map(|g| g.record.case.case_id.as_str())
        .collect();
    assert!(!external.is_empty());
    for row in rows {
        let id = row["case_id"].as_str().unwrap();
        assert_eq!(
            row["external_provider_group"].as_bool().unwrap(),
            external.contains(&id)
        );
        assert_eq!(row["feedback_status"], "pending");
    }
}

#[tokio::test]
async fn worklist_for_empty_date_has_notice() {
    let h = triaged(5, None);
    let (status, body) = get(&h.app, "/v1/worklist?date=2031-01-01").await;
    assert_eq!(status, StatusCode::OK);
    assert!(body["rows"].as_array().unwrap().is_empty());
    assert!(body["notice"].is_string());

    let (status, body) = get(&h.app, "/v1/worklist").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("date"));
    let (status, _) = get(&h.app, "/v1/worklist?date=tomorrow").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn feedback_grows_denominator_and_never_touches_triage() {
    let h = triaged(30, None);
    let metrics_uri = "/v1/metrics?replicates=100&seed=5";
    let (_, before) = get(&h.app, metrics_uri).await;
    assert_eq!(before["evaluable_cases"], 0);
    assert!(before["notice"].is_string());

    let id = h.cases[0].record.case.case_id.clone();
    let (_, case_before) = get(&h.app, &format!("/v1/cases/{id}")).await;

    let (status, ack) = post(
        &h.app,
        json!({"case_id": id, "decision": "No", "reviewer_id": "hosp-01",
               "reason": "Planned ICU admission after surgery."}),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(ack["case_id"], id.as_str());
    assert_eq!(ack["category"], "IncompatibleLevelOfCare");

    let (_, after) = get(&h.app, metrics_uri).await;
    assert_eq!(after["evaluable_cases"], 1);
    assert_eq!(after["feedback_categories"]["IncompatibleLevelOfCare"], 1);

    // a later decision on the same case replaces, not adds
    let (status, _) = post(
        &h.app,
        json!({"case_id": id, "decision": "Yes", "reviewer_id": "hosp-02",
               "recorded_at": "2099-01-01T00:00:00Z"}),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    let (_, again) = get(&h.app, metrics_uri).await;
    assert_eq!(again["evaluable_cases"], 1);
    assert_eq!(again["feedback_categories"]["IncompatibleLevelOfCare"], 0);

    let (_, case_after) = get(&h.app, &format!("/v1/cases/{id}")).await;
    assert_eq!(case_after["result"], case_before["result"]);
    assert_eq!(case_after["feedback"].as_array().unwrap().len(), 2);
    assert_eq!(case_after["latest_decision"], "Yes");

    let (_, wl) = get(&h.app, &format!("/v1/worklist?date={DATE}")).await;
    let row = wl["rows"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["case_id"] == id.as_str())
        .unwrap();
    assert_eq!(row["feedback_status"], "reviewed");
}

#[tokio::test]
async fn unknown_case_is_404_naming_the_case() {
    let h = triaged(3, None);
    let (status, body) = post(
        &h.app,
        json!({"case_id": "NOPE-1", "decision": "Yes", "reviewer_id": "hosp-01"}),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["case_id"], "NOPE-1");
    assert!(body["error"].as_str().unwrap().contains("NOPE-1"));

    let (status, body) = get(&h.app, "/v1/cases/NOPE-2").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["case_id"], "NOPE-2");
    assert_eq!(h.store.snapshot().feedback_count(), 0);
}

#[tokio::test]
async fn malformed_feedback_is_400() {
    let h = triaged(3, None);
    let id = h.cases[0].record.case.case_id.clone();
    for body in [
        json!({"case_id": id, "decision": "Perhaps", "reviewer_id": "r"}),
        json!({"case_id": id, "decision": "Yes"}),
        json!({"case_id": id, "decision": "Yes", "reviewer_id": "  "}),
        json!({"case_id": id, "decision": "No", "reviewer_id": "r", "category": "vibes"}),
    ] {
        let (status, err) = post(&h.app, body.clone()).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert!(err["error"].is_string());
    }
    let (status, _) = send(
        &h.app,
        Request::post("/v1/feedback")
            .header("content-type", "application/json")
            .body(Body::from("{not json"))
            .unwrap(),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(h.store.snapshot().feedback_count(), 0);
}

#[tokio::test]
async fn case_record_carries_raw_response() {
    let h = triaged(40, None);
    let llm = h
        .cases
        .iter()
        .find(|g| g.expected_tier() == triage_core::Classification::Affirmative)
        .unwrap();
    let (status, body) = get(&h.app, &format!("/v1/cases/{}", llm.record.case.case_id)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["result"]["source"], "LlmPipeline");
    assert!(body["result"]["raw_response"]
        .as_str()
        .unwrap()
        .starts_with("Affirmative"));
    assert!(body["triaged_at"].is_string());
}

#[tokio::test]
async fn metrics_on_fixture_match_cli_report() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(TriageStore::open(dir.path()).unwrap());
    load_fixture(&store).unwrap();
    let app = router(AppState::new(store.clone()), None);
    let (status, body) = get(&app, "/v1/metrics?window=all&seed=7").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        body["confusion"],
        json!({"tp": 284, "fp": 203, "fn": 19, "tn": 571})
    );
    let s = &body["sensitivity"];
    let shown = format!(
        "{:.2} ({:.2}\u{2013}{:.2})",
        s["point"].as_f64().unwrap(),
        s["ci_lo"].as_f64().unwrap(),
        s["ci_hi"].as_f64().unwrap()
    );
    assert_eq!(shown, "0.94 (0.91\u{2013}0.96)");

    let cli = store_report(
        &store,
        triage_core::Window::All,
        &BootstrapConfig {
            seed: 7,
            ..Default::default()
        },
    );
    let (_, raw) = send_raw(
        &app,
        Request::get("/v1/metrics?window=all&seed=7")
            .body(Body::empty())
            .unwrap(),
    )
    .await;
    assert_eq!(serde_json::to_vec(&cli).unwrap(), raw);
    let hist: u64 = body["feedback_categories"]
        .as_object()
        .unwrap()
        .values()
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert_eq!(hist, 149);
}

#[tokio::test]
async fn metrics_rejects_bad_queries() {
    let h = triaged(3, None);
    for uri in [
        "/v1/metrics?replicates=0",
        "/v1/metrics?replicates=1000000",
        "/v1/metrics?window=2025-10-05..2025-10-01",
        "/v1/metrics?replicates=lots",
        "/v1/metrics?seed=-1",
    ] {
        let (status, body) = get(&h.app, uri).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri}");
        assert!(body["error"].is_string(), "{uri}");
    }
}

#[tokio::test]
async fn serves_static_ui_beside_api() {
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<h1>worklist</h1>").unwrap();
    let h = triaged(2, Some(ui.path()));
    let resp = h
        .app
        .clone()
        .oneshot(Request::get("/index.html").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&bytes[..], b"<h1>worklist</h1>");
    let (status, _) = get(&h.app, &format!("/v1/worklist?date={DATE}")).await;
    assert_eq!(status, StatusCode::OK);
}
