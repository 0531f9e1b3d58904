use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use serde_json::{json, Value};
use tower::ServiceExt;
use triage_cli::service::{router, AppState};
use triage_cli::store::SessionStore;
use triage_core::conversation::{trail_jsonl, Engine, EngineConfig, FixedClock};
use triage_core::demographics::{Demographics, Sex};
use triage_core::flowchart::{load_library, FlowchartLibrary, NodeKind};
use triage_core::gateway::{HashEmbedder, StubGenerator};
use triage_core::retrieval::{build_index, LlmSelector, RetrievalConfig, Retriever};

fn library_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/flowcharts")
}

fn library() -> Arc<FlowchartLibrary> {
    Arc::new(load_library(&library_dir()).unwrap().0)
}

fn engine() -> Engine {
    let mut e = Engine::offline(library(), EngineConfig::default()).unwrap().with_clock(FixedClock("2025-01-01T00:00:00.000Z".into()));
    let stub = StubGenerator::new("stub-selector").with_fallback(|req| {
        Ok(if req.prompt.contains("Concern: I've been having a stomachache") { "Abdominal Pain Flowchart".into() } else { "no flowchart available".into() })
    });
    e.retriever = Retriever {
        index: build_index(&e.library, &HashEmbedder).unwrap(),
        embedder: Box::new(HashEmbedder),
        selector: Box::new(LlmSelector::new(stub)),
        config: RetrievalConfig::default(),
    };
    e
}

fn state() -> Arc<AppState> {
    AppState::new(engine(), SessionStore::memory(Duration::from_secs(600)))
}

async fn call(state: &Arc<AppState>, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, Option<String>, String) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header(header::CONTENT_TYPE, "application/json");
    }
    let req = req.body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty)).unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let ctype = resp.headers().get(header::CONTENT_TYPE).map(|v| v.to_str().unwrap().to_string());
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, ctype, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn call_json(state: &Arc<AppState>, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let text = body.map(|b| b.to_string());
    let (status, _, out) = call(state, method, uri, text.as_deref()).await;
    (status, serde_json::from_str(&out).unwrap_or(Value::Null))
}

async fn create(state: &Arc<AppState>, body: Value) -> String {
    let (status, v) = call_json(state, Method::POST, "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

async fn say(state: &Arc<AppState>, id: &str, text: &str) -> (StatusCode, Value) {
    call_json(state, Method::POST, &format!("/sessions/{id}/messages"), Some(json!({ "text": text }))).await
}

#[tokio::test]
async fn create_session_statuses() {
    let st = state();
    let (s, v) = call_json(&st, Method::POST, "/sessions", None).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["phase"], "collecting_demographics");
    let (s, v) = call_json(&st, Method::POST, "/sessions", Some(json!({"sex": "female", "age_value": 8, "age_unit": "months"}))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["phase"], "collecting_concern");

    let (s, v) = call_json(&st, Method::POST, "/sessions", Some(json!({"sex": "male", "age_value": 0}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "invalid_demographics");
    let (s, _) = call_json(&st, Method::POST, "/sessions", Some(json!({"age_unit": "years"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call_json(&st, Method::POST, "/sessions", Some(json!({"sex": "robot"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _, _) = call(&st, Method::POST, "/sessions", Some("{not json")).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call_json(&st, Method::POST, "/sessions", Some(json!({"unexpected": 1}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_ids_are_404() {
    let st = state();
    for uri in ["/sessions/0123456789abcdef0123456789abcdef", "/sessions/nope/trail", "/flowcharts/nope"] {
        let (s, v) = call_json(&st, Method::GET, uri, None).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(v["error"]["code"], "not_found");
    }
    let (s, _) = say(&st, "missing", "hello").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn message_body_must_carry_text() {
    let st = state();
    let id = create(&st, json!({})).await;
    let (s, _) = call_json(&st, Method::POST, &format!("/sessions/{id}/messages"), Some(json!({}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, v) = say(&st, &id, "male, 35").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["session"]["phase"], "collecting_concern");
}

#[tokio::test]
async fn closed_sessions_conflict() {
    let st = state();
    let id = create(&st, json!({"sex": "male", "age_value": 35})).await;
    let (s, v) = say(&st, &id, "my car broke down").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["session"]["phase"], "no_flowchart_escalation");
    let (s, v) = say(&st, &id, "hello?").await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"]["code"], "session_closed");
}

#[tokio::test]
async fn switch_rules() {
    let st = state();
    let id = create(&st, json!({"sex": "male", "age_value": 35})).await;
    let uri = format!("/sessions/{id}/switch");
    let (s, _) = call_json(&st, Method::POST, &uri, Some(json!({"flowchart_id": "fever"}))).await;
    assert_eq!(s, StatusCode::CONFLICT, "no switch before a selection");
    say(&st, &id, "I've been having a stomachache for a few hours now").await;
    let (s, _) = call_json(&st, Method::POST, &uri, Some(json!({}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, v) = call_json(&st, Method::POST, &uri, Some(json!({"flowchart_id": "fever"}))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["session"]["current_flowchart"]["id"], "fever");
    assert_eq!(v["session"]["node_id"], "N1");
}

#[tokio::test]
async fn flowchart_listing_and_documents() {
    let st = state();
    let (s, v) = call_json(&st, Method::GET, "/flowcharts", None).await;
    assert_eq!(s, StatusCode::OK);
    let ids: Vec<&str> = v.as_array().unwrap().iter().map(|c| c["id"].as_str().unwrap()).collect();
    assert_eq!(ids.len(), 12);
    assert!(ids.contains(&"abdominal_pain_adult"));
    let (s, v) = call_json(&st, Method::GET, "/flowcharts/fever", None).await;
    assert_eq!(s, StatusCode::OK);
    let on_disk: Value = serde_json::from_str(&std::fs::read_to_string(library_dir().join("fever.json")).unwrap()).unwrap();
    assert_eq!(v, on_disk);
}

/// Drops one question edge whose target stays reachable, so only the missing branch is wrong.
fn missing_branch_mutant(lib: &FlowchartLibrary) -> Value {
    for chart in lib.iter() {
        let doc: Value = serde_json::from_str(&std::fs::read_to_string(library_dir().join(format!("{}.json", chart.id))).unwrap()).unwrap();
        let edges = doc["edges"].as_array().unwrap();
        for (i, e) in edges.iter().enumerate() {
            let from = e["from"].as_str().unwrap();
            let to = e["to"].as_str().unwrap();
            let is_question = chart.nodes.values().any(|n| n.id.as_str() == from && n.kind() == NodeKind::Question);
            let in_degree = edges.iter().filter(|x| x["to"] == to).count();
            if is_question && in_degree > 1 {
                let mut mutant = doc.clone();
                mutant["edges"].as_array_mut().unwrap().remove(i);
                return mutant;
            }
        }
    }
    panic!("no chart has a shared target");
}

#[tokio::test]
async fn validate_endpoint_reports_without_mutating() {
    let st = state();
    let before = st.engine.library.fingerprint();
    let mutant = missing_branch_mutant(&st.engine.library);
    let (s, v) = call_json(&st, Method::POST, "/flowcharts:validate", Some(mutant)).await;
    assert_eq!(s, StatusCode::OK);
    let errors = v["errors"].as_array().unwrap();
    assert_eq!(errors.len(), 1, "{v}");
    assert_eq!(errors[0]["rule"], "MissingBranch");

    let clean = std::fs::read_to_string(library_dir().join("fever.json")).unwrap();
    let (s, _, body) = call(&st, Method::POST, "/flowcharts:validate", Some(&clean)).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["errors"], json!([]));

    let (s, _, _) = call(&st, Method::POST, "/flowcharts:validate", Some("{\"id\": 3}")).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(st.engine.library.fingerprint(), before);
    assert_eq!(load_library(&library_dir()).unwrap().0.fingerprint(), before);
}

#[tokio::test]
async fn healthz_reports_components() {
    let st = state();
    let (s, v) = call_json(&st, Method::GET, "/healthz", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    assert_eq!(v["flowcharts"], 12);
}

#[tokio::test]
async fn views_hide_internal_counters() {
    let st = state();
    let id = create(&st, json!({"sex": "male", "age_value": 35})).await;
    say(&st, &id, "I've been having a stomachache for a few hours now").await;
    let (_, v) = say(&st, &id, "I'm not sure").await;
    let text = v.to_string();
    assert!(!text.contains("consecutive_non_advances"));
    assert!(!text.contains("redirect_depth"));
}

#[tokio::test]
async fn http_matches_in_process_engine() {
    let turns = ["I've been having a stomachache for a few hours now", "No, this is the first time", "hmm, maybe?", "yes", "no"];

    let local = engine();
    let mut session = local.start_session(Some(Demographics::years(Sex::Male, 35).unwrap()));
    let mut expected = Vec::new();
    for t in turns {
        if session.phase.is_closed() {
            break;
        }
        let reply = local.submit_message(&mut session, t).unwrap();
        expected.push((reply, session.phase.name().to_string()));
    }

    let st = state();
    let id = create(&st, json!({"sex": "male", "age_value": 35, "age_unit": "years"})).await;
    let mut got = Vec::new();
    for t in turns.iter().take(expected.len()) {
        let (s, v) = say(&st, &id, t).await;
        assert_eq!(s, StatusCode::OK, "{v}");
        got.push((v["reply"].as_str().unwrap().to_string(), v["session"]["phase"].as_str().unwrap().to_string()));
    }
    assert_eq!(got, expected);

    let (s, ctype, body) = call(&st, Method::GET, &format!("/sessions/{id}/trail"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(ctype.as_deref(), Some("application/x-ndjson"));
    assert_eq!(body, trail_jsonl(&session.trail));
    assert!(body.lines().count() >= 2);

    let (_, v) = call_json(&st, Method::GET, &format!("/sessions/{id}"), None).await;
    let local_view = serde_json::to_value(local.view(&session)).unwrap();
    let mut remote = v.clone();
    remote["id"] = local_view["id"].clone();
    assert_eq!(remote, local_view);
}

#[tokio::test]
async fn concurrent_posts_to_one_session_serialize() {
    let st = state();
    let id = create(&st, json!({"sex": "male", "age_value": 35})).await;
    say(&st, &id, "I've been having a stomachache for a few hours now").await;
    let mut handles = Vec::new();
    for _ in 0..8 {
        let st = st.clone();
        let id = id.clone();
        handles.push(tokio::spawn(async move { say(&st, &id, "what's the weather like?").await }));
    }
    for h in handles {
        h.await.unwrap();
    }
    let (_, _, trail) = call(&st, Method::GET, &format!("/sessions/{id}/trail"), None).await;
    let turns: Vec<u64> = trail.lines().map(|l| serde_json::from_str::<Value>(l).unwrap()["turn"].as_u64().unwrap()).collect();
    let mut sorted = turns.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(turns, sorted, "turn numbers strictly increase");
}
