//! HTTP service: ask, proof lookup, belief corrections and health.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::Router;
use backchain_core::backend::{Backend, Conditioning, Result as BackendResult};
use backchain_core::memory::{BeliefOverride, MemoryStore, Source};
use backchain_core::pipeline::{AnswerMode, Pipeline, PipelineError, QuestionRecord};
use backchain_core::{rescore_tree, Decoding, QaPair, SearchConfig, Statement};
use chrono::Utc;
use serde::Deserialize;
use serde_json::json;

use crate::store::{ProofRecord, ProofStore};

pub const DEFAULT_REQUEST_TIMEOUT: Duration = Duration::from_secs(120);

pub struct AppState {
    pub backend: Arc<dyn Backend>,
    pub default_cfg: SearchConfig,
    pub default_mode: AnswerMode,
    pub n_candidates: usize,
    pub memory: RwLock<MemoryStore>,
    pub proofs: ProofStore,
    pub request_timeout: Duration,
}

impl AppState {
    pub fn new(backend: Arc<dyn Backend>, memory: MemoryStore, proofs: ProofStore) -> Self {
        Self {
            backend,
            default_cfg: SearchConfig::default(),
            default_mode: AnswerMode::Entailer,
            n_candidates: backchain_core::pipeline::DEFAULT_CANDIDATES,
            memory: RwLock::new(memory),
            proofs,
            request_timeout: DEFAULT_REQUEST_TIMEOUT,
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/ask", post(ask))
        .route("/proofs/{id}", get(get_proof))
        .route("/beliefs", post(add_belief).get(list_beliefs))
        .route("/beliefs/{key}", delete(remove_belief))
        .route("/health", get(health))
        .with_state(state)
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, axum::Json(json!({ "error": message.into() }))).into_response()
}

fn raw_json(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, String> {
    serde_json::from_slice(body).map_err(|e| format!("malformed body: {e}"))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AskRequest {
    question: String,
    #[serde(default)]
    options: Vec<String>,
    #[serde(default)]
    open_ended: bool,
    #[serde(default)]
    n_candidates: Option<usize>,
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    gold_index: Option<usize>,
    #[serde(default)]
    cfg: Option<SearchConfig>,
    #[serde(default)]
    mode: Option<AnswerMode>,
    #[serde(default)]
    use_memory: bool,
}

/// Counts finished backend calls so a timed-out request can say how far it got.
struct Counting {
    inner: Arc<dyn Backend>,
    calls: Arc<AtomicUsize>,
}

impl Counting {
    fn tick<T>(&self, r: BackendResult<T>) -> BackendResult<T> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        r
    }
}

impl Backend for Counting {
    fn name(&self) -> String {
        self.inner.name()
    }
    fn generate_premises(
        &self,
        h: &Statement,
        cond: Conditioning<'_>,
        k: usize,
        decoding: &Decoding,
    ) -> BackendResult<Vec<Vec<Statement>>> {
        self.tick(self.inner.generate_premises(h, cond, k, decoding))
    }
    fn score_direct(&self, s: &Statement, cond: Conditioning<'_>) -> BackendResult<f64> {
        self.tick(self.inner.score_direct(s, cond))
    }
    fn score_entailment(&self, p: &[Statement], h: &Statement, cond: Conditioning<'_>) -> BackendResult<f64> {
        self.tick(self.inner.score_entailment(p, h, cond))
    }
    fn hypothesize(&self, qa: &QaPair) -> BackendResult<Statement> {
        self.tick(self.inner.hypothesize(qa))
    }
    fn generate_candidates(&self, question: &str, n: usize) -> BackendResult<Vec<String>> {
        self.tick(self.inner.generate_candidates(question, n))
    }
    fn negate(&self, s: &Statement) -> BackendResult<Statement> {
        self.tick(self.inner.negate(s))
    }
}

fn pipeline_status(e: &PipelineError) -> StatusCode {
    use backchain_core::backend::BackendError as B;
    match e {
        _ if e.is_retryable() => StatusCode::SERVICE_UNAVAILABLE,
        PipelineError::Dataset(_) => StatusCode::BAD_REQUEST,
        PipelineError::Backend { source: B::Declarativization { .. } | B::OpenEndedUnsupported(_), .. } => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        _ => StatusCode::BAD_GATEWAY,
    }
}

async fn ask(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: AskRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(msg) => return error(StatusCode::BAD_REQUEST, msg),
    };
    let cfg = req.cfg.unwrap_or_else(|| state.default_cfg.clone());
    if let Err(e) = cfg.validate() {
        return error(StatusCode::BAD_REQUEST, e.to_string());
    }
    let proof_id = uuid::Uuid::new_v4().to_string();
    let question = QuestionRecord {
        id: req.id.unwrap_or_else(|| proof_id.clone()),
        question: req.question,
        options: req.options,
        open_ended: req.open_ended,
        n_candidates: req.n_candidates,
        gold_index: req.gold_index,
        gold_text: None,
    };
    if let Err(e) = question.validate() {
        return error(StatusCode::BAD_REQUEST, e.to_string());
    }
    let mode = req.mode.unwrap_or(state.default_mode);
    let memory = req.use_memory.then(|| state.memory.read().unwrap_or_else(|e| e.into_inner()).clone());

    let calls = Arc::new(AtomicUsize::new(0));
    let backend: Arc<dyn Backend> = Arc::new(Counting { inner: state.backend.clone(), calls: calls.clone() });
    let pipeline = Pipeline::new(backend, cfg.clone()).with_n_candidates(state.n_candidates);
    let q = question.clone();
    let work = tokio::task::spawn_blocking(move || match &memory {
        Some(store) => pipeline.answer_with_memory(&q, mode, store),
        None => pipeline.answer(&q, mode, None),
    });
    let result = match tokio::time::timeout(state.request_timeout, work).await {
        Err(_) => {
            let done = calls.load(Ordering::Relaxed);
            return (
                StatusCode::GATEWAY_TIMEOUT,
                axum::Json(json!({
                    "error": format!("search exceeded {}s", state.request_timeout.as_secs_f64()),
                    "progress": format!("{done} backend call(s) completed; no proof was stored"),
                })),
            )
                .into_response();
        }
        Ok(Err(join)) => return error(StatusCode::INTERNAL_SERVER_ERROR, format!("search task failed: {join}")),
        Ok(Ok(Err(e))) => return error(pipeline_status(&e), e.to_string()),
        Ok(Ok(Ok(result))) => result,
    };
    for (i, option) in result.per_option.iter().enumerate() {
        if let Some(proof) = &option.proof {
            if let Err(e) = rescore_tree(proof) {
                log::error!("option {i} produced an inconsistent proof: {e}");
                return error(StatusCode::INTERNAL_SERVER_ERROR, format!("option {i}: {e}"));
            }
        }
    }
    let record = ProofRecord { proof_id: proof_id.clone(), question, result, cfg, created_at: Utc::now() };
    if let Err(e) = state.proofs.append(&record) {
        return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string());
    }
    axum::Json(json!({ "proof_id": proof_id, "result": record.result })).into_response()
}

async fn get_proof(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match state.proofs.get(&id) {
        Some(body) => raw_json(StatusCode::OK, body),
        None => error(StatusCode::NOT_FOUND, format!("no proof {id:?}")),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BeliefRequest {
    statement: String,
    asserted_true: bool,
    #[serde(default)]
    note: Option<String>,
}

async fn add_belief(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: BeliefRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(msg) => return error(StatusCode::BAD_REQUEST, msg),
    };
    let statement = match Statement::new(&req.statement) {
        Ok(s) => s,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let entry = BeliefOverride {
        statement,
        asserted_true: req.asserted_true,
        source: Source::User,
        created_at: Utc::now(),
        note: req.note,
    };
    let mut store = state.memory.write().unwrap_or_else(|e| e.into_inner());
    match store.upsert(entry) {
        Ok(stored) => (StatusCode::CREATED, axum::Json(stored)).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn list_beliefs(State(state): State<Arc<AppState>>) -> Response {
    let store = state.memory.read().unwrap_or_else(|e| e.into_inner());
    axum::Json(store.list()).into_response()
}

async fn remove_belief(State(state): State<Arc<AppState>>, Path(key): Path<String>) -> Response {
    let mut store = state.memory.write().unwrap_or_else(|e| e.into_inner());
    match store.remove(&key) {
        Ok(Some(removed)) => axum::Json(removed).into_response(),
        Ok(None) => error(StatusCode::NOT_FOUND, format!("no belief with key {key:?}")),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    let beliefs = state.memory.read().unwrap_or_else(|e| e.into_inner()).len();
    axum::Json(json!({
        "status": "ok",
        "backend": state.backend.name(),
        "proofs": state.proofs.len(),
        "beliefs": beliefs,
    }))
    .into_response()
}
