use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use backchain_cli::server::{router, AppState};
use backchain_cli::store::ProofStore;
use backchain_core::backend::{Backend, Conditioning, KnowledgeBase, MockBackend, Result as BackendResult};
use backchain_core::memory::MemoryStore;
use backchain_core::{Decoding, QaPair, Statement};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn backend(name: &str) -> Arc<dyn Backend> {
    Arc::new(MockBackend::new(KnowledgeBase::load(fixture(name)).unwrap()))
}

fn app(backend: Arc<dyn Backend>, proofs: ProofStore) -> (Router, Arc<AppState>) {
    let state = Arc::new(AppState::new(backend, MemoryStore::in_memory(), proofs));
    (router(state.clone()), state)
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn parse(body: &str) -> Value {
    serde_json::from_str(body).unwrap()
}

#[tokio::test]
async fn health_reports_counts() {
    let (app, _) = app(backend("magnet.json"), ProofStore::in_memory());
    let (status, body) = call(&app, Method::GET, "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    let v = parse(&body);
    assert_eq!(v["status"], "ok");
    assert_eq!(v["proofs"], 0);
}

#[tokio::test]
async fn ask_stores_a_retrievable_proof() {
    let (app, _) = app(backend("obqa.json"), ProofStore::in_memory());
    let req = json!({
        "question": "Which object would a magnet pick up?",
        "options": ["a wooden spoon", "an iron nail", "a glass cup", "a rubber band"],
    });
    let (status, body) = call(&app, Method::POST, "/ask", Some(&req.to_string())).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let v = parse(&body);
    assert_eq!(v["result"]["chosen_index"], 1);
    let id = v["proof_id"].as_str().unwrap();

    let (status, stored) = call(&app, Method::GET, &format!("/proofs/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let record = parse(&stored);
    assert_eq!(record["result"], v["result"]);
    assert_eq!(record["cfg"]["k_root"], 6);
}

#[tokio::test]
async fn proofs_survive_a_restart_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("proofs.jsonl");
    let (app1, _) = app(backend("magnet.json"), ProofStore::open(&path).unwrap());
    let req = json!({"question": "Can a magnet attract a penny?", "options": ["yes", "no"]});
    let (_, body) = call(&app1, Method::POST, "/ask", Some(&req.to_string())).await;
    let id = parse(&body)["proof_id"].as_str().unwrap().to_string();
    let (_, before) = call(&app1, Method::GET, &format!("/proofs/{id}"), None).await;
    drop(app1);

    let (app2, _) = app(backend("magnet.json"), ProofStore::open(&path).unwrap());
    let (status, after) = call(&app2, Method::GET, &format!("/proofs/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(before, after);
}

#[tokio::test]
async fn unknown_proof_is_404() {
    let (app, _) = app(backend("magnet.json"), ProofStore::in_memory());
    let (status, body) = call(&app, Method::GET, "/proofs/does-not-exist", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(parse(&body)["error"].is_string());
}

#[tokio::test]
async fn bad_ask_bodies_are_400() {
    let (app, _) = app(backend("magnet.json"), ProofStore::in_memory());
    for body in [
        "not json",
        r#"{"options": ["yes", "no"]}"#,
        r#"{"question": "Q?", "options": ["yes", "no"], "surprise": 1}"#,
        r#"{"question": "Q?", "options": ["only one"]}"#,
        r#"{"question": "Q?", "options": ["a", "b"], "cfg": {"max_depth": 3, "k_root": 0, "k_inner": 1, "filter_threshold": 0.5, "temperature": 2.0, "top_p": 0.95, "seed": 0, "force_root_proof": true, "selection": "one_deep"}}"#,
        r#"{"question": "Q?", "options": ["a", "b"], "mode": "telepathy"}"#,
    ] {
        let (status, resp) = call(&app, Method::POST, "/ask", Some(body)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body} -> {resp}");
    }
}

#[tokio::test]
async fn open_ended_without_candidates_is_rejected() {
    let (app, _) = app(backend("magnet.json"), ProofStore::in_memory());
    let req = json!({"question": "What can a magnet attract?", "open_ended": true});
    let (status, _) = call(&app, Method::POST, "/ask", Some(&req.to_string())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn belief_crud() {
    let (app, state) = app(backend("magnet.json"), ProofStore::in_memory());
    let (status, body) = call(
        &app,
        Method::POST,
        "/beliefs",
        Some(r#"{"statement": "Copper is not magnetic.", "asserted_true": true, "note": "pennies"}"#),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_eq!(parse(&body)["note"], "pennies");
    assert_eq!(state.memory.read().unwrap().len(), 1);

    let (status, body) = call(&app, Method::GET, "/beliefs", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(parse(&body).as_array().unwrap().len(), 1);

    let (status, _) = call(&app, Method::POST, "/beliefs", Some(r#"{"statement": "x"}"#)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let key = "copper%20is%20not%20magnetic";
    let (status, _) = call(&app, Method::DELETE, &format!("/beliefs/{key}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = call(&app, Method::DELETE, &format!("/beliefs/{key}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

struct Slow(MockBackend);

impl Slow {
    fn nap(&self) {
        std::thread::sleep(Duration::from_millis(100));
    }
}

impl Backend for Slow {
    fn name(&self) -> String {
        "slow".into()
    }
    fn generate_premises(
        &self,
        h: &Statement,
        cond: Conditioning<'_>,
        k: usize,
        decoding: &Decoding,
    ) -> BackendResult<Vec<Vec<Statement>>> {
        self.nap();
        self.0.generate_premises(h, cond, k, decoding)
    }
    fn score_direct(&self, s: &Statement, cond: Conditioning<'_>) -> BackendResult<f64> {
        self.nap();
        self.0.score_direct(s, cond)
    }
    fn score_entailment(&self, p: &[Statement], h: &Statement, cond: Conditioning<'_>) -> BackendResult<f64> {
        self.nap();
        self.0.score_entailment(p, h, cond)
    }
    fn hypothesize(&self, qa: &QaPair) -> BackendResult<Statement> {
        self.0.hypothesize(qa)
    }
    fn generate_candidates(&self, question: &str, n: usize) -> BackendResult<Vec<String>> {
        self.0.generate_candidates(question, n)
    }
}

#[tokio::test]
async fn slow_search_times_out_with_progress() {
    let slow = Slow(MockBackend::new(KnowledgeBase::load(fixture("obqa.json")).unwrap()));
    let state = AppState {
        request_timeout: Duration::from_millis(250),
        ..AppState::new(Arc::new(slow), MemoryStore::in_memory(), ProofStore::in_memory())
    };
    let state = Arc::new(state);
    let app = router(state.clone());
    let req =
        json!({"question": "Which object would a magnet pick up?", "options": ["a wooden spoon", "an iron nail"]});
    let (status, body) = call(&app, Method::POST, "/ask", Some(&req.to_string())).await;
    assert_eq!(status, StatusCode::GATEWAY_TIMEOUT);
    let progress = parse(&body)["progress"].as_str().unwrap().to_string();
    assert!(progress.contains("backend call"), "{progress}");
    assert!(!progress.starts_with("0 "), "{progress}");
    assert!(state.proofs.is_empty());
}

#[tokio::test]
async fn falsifying_a_premise_flips_the_answer() {
    let (app, _) = app(backend("magnet.json"), ProofStore::in_memory());
    let ask = json!({"question": "Can a magnet attract a penny?", "options": ["yes", "no"], "use_memory": true});
    let (_, before) = call(&app, Method::POST, "/ask", Some(&ask.to_string())).await;
    assert_eq!(parse(&before)["result"]["chosen_option"], "yes");

    let correction = r#"{"statement": "Copper is magnetic.", "asserted_true": false}"#;
    assert_eq!(call(&app, Method::POST, "/beliefs", Some(correction)).await.0, StatusCode::CREATED);
    let (_, after) = call(&app, Method::POST, "/ask", Some(&ask.to_string())).await;
    let result = &parse(&after)["result"];
    assert_eq!(result["chosen_option"], "no");
    let chosen = result["per_option"][result["chosen_index"].as_u64().unwrap() as usize]["proof"].to_string();
    assert!(!chosen.contains("\"Copper is magnetic.\""), "{chosen}");
    assert!(chosen.contains("\"Copper is not magnetic.\""), "{chosen}");
}

#[tokio::test]
async fn sequential_corrections_are_all_listed() {
    let (app, _) = app(backend("magnet.json"), ProofStore::in_memory());
    for body in [
        r#"{"statement": "Copper is magnetic.", "asserted_true": false}"#,
        r#"{"statement": "A penny is made of copper.", "asserted_true": true}"#,
    ] {
        assert_eq!(call(&app, Method::POST, "/beliefs", Some(body)).await.0, StatusCode::CREATED);
    }
    let (_, body) = call(&app, Method::GET, "/beliefs", None).await;
    let listed: Vec<String> =
        parse(&body).as_array().unwrap().iter().map(|b| b["text"].as_str().unwrap().to_string()).collect();
    assert_eq!(listed.len(), 2);
    assert!(listed.contains(&"Copper is magnetic.".to_string()));
    assert!(listed.contains(&"A penny is made of copper.".to_string()));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_asks_match_sequential_ones() {
    let (app, _) = app(backend("obqa.json"), ProofStore::in_memory());
    let body = |seed: u64| {
        json!({
            "question": "Which object would a magnet pick up?",
            "options": ["a wooden spoon", "an iron nail", "a glass cup", "a rubber band"],
            "cfg": {"max_depth": 3, "k_root": 6, "k_inner": 2, "filter_threshold": 0.5, "temperature": 2.0,
                    "top_p": 0.95, "seed": seed, "force_root_proof": true, "selection": "one_deep"},
        })
        .to_string()
    };
    let strip = |text: &str| {
        let mut v = parse(text)["result"].clone();
        v["wall_time_ms"] = 0.into();
        v["question_id"] = Value::Null;
        v
    };
    let mut sequential = Vec::new();
    for seed in 0..8 {
        sequential.push(strip(&call(&app, Method::POST, "/ask", Some(&body(seed))).await.1));
    }
    let handles: Vec<_> = (0..8u64)
        .map(|seed| {
            let app = app.clone();
            let body = body(seed);
            tokio::spawn(async move { call(&app, Method::POST, "/ask", Some(&body)).await })
        })
        .collect();
    for (seed, handle) in handles.into_iter().enumerate() {
        let (status, text) = handle.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        assert_eq!(strip(&text), sequential[seed], "seed {seed}");
    }
}
