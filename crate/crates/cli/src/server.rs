//! HTTP JSON service: `POST /classify`, `POST /process`, `GET /healthz`.
//!
//! The model is loaded once in the background; until it is ready every
//! endpoint answers 503. Classification and rewriting are blocking calls and
//! run on the blocking pool under the configured request timeout.

use std::sync::{Arc, OnceLock};
use std::time::Duration;

use agqr_core::checkpoint::load_checkpoint;
use agqr_core::classifier::Classification;
use agqr_core::error::ClassifierError;
use agqr_core::features::FeatureVector;
use agqr_core::{
    AmbiguityDetector, AmbiguityLabel, AmbiguityType, ChatTurn, Conversation, FrameworkMode, Pipeline, Query,
    QueryClassifier, Rewriter, VerdictSource,
};
use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::ServiceConfig;
use crate::error::CliError;

/// Everything a request needs once the model is loaded.
pub struct Service {
    detector: Arc<AmbiguityDetector>,
    pipeline: Pipeline,
}

impl Service {
    pub fn new(detector: AmbiguityDetector, rewriter: Arc<dyn Rewriter>, history_window: usize) -> Self {
        let detector = Arc::new(detector);
        let classifier: Arc<dyn QueryClassifier> = detector.clone();
        let pipeline = Pipeline::new(Some(classifier), rewriter).with_history_window(history_window);
        Self { detector, pipeline }
    }

    /// Loads and validates the checkpoint and builds the configured clients.
    pub fn from_config(cfg: &ServiceConfig) -> Result<Self, CliError> {
        let path = cfg.checkpoint.as_deref().ok_or_else(|| CliError::Usage("no checkpoint configured".into()))?;
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        let mut model = load_checkpoint(&bytes).map_err(|e| CliError::config(path, e))?;
        if let Some(t) = cfg.threshold {
            model.threshold = t;
        }
        let embedder = cfg.embedder_for(&model.embedder)?;
        let (types, common) = cfg.lexicons()?;
        let detector =
            AmbiguityDetector::new(Arc::new(model), embedder, types, common).map_err(|e| CliError::config(path, e))?;
        Ok(Self::new(detector, cfg.rewriter.build()?, cfg.history_window))
    }

    pub fn model_version(&self) -> &str {
        &self.detector.model().version
    }
}

pub struct AppState {
    service: OnceLock<Arc<Service>>,
    timeout: Duration,
}

impl AppState {
    pub fn loading(timeout: Duration) -> Arc<Self> {
        Arc::new(Self { service: OnceLock::new(), timeout })
    }

    pub fn ready(service: Service, timeout: Duration) -> Arc<Self> {
        let state = Self::loading(timeout);
        state.set_ready(service);
        state
    }

    /// Has no effect if a service is already installed.
    pub fn set_ready(&self, service: Service) {
        let _ = self.service.set(Arc::new(service));
    }

    fn service(&self) -> Result<Arc<Service>, ApiError> {
        self.service.get().cloned().ok_or(ApiError::NotReady)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/classify", post(classify))
        .route("/process", post(process))
        .with_state(state)
}

/// Binds, starts loading the model, and serves until the process ends.
/// A model that fails to load stops the service with that error.
pub async fn serve(cfg: ServiceConfig) -> Result<(), CliError> {
    let listener = tokio::net::TcpListener::bind(&cfg.bind)
        .await
        .map_err(|e| CliError::runtime(format!("bind {}: {e}", cfg.bind)))?;
    tracing::info!(addr = %cfg.bind, "listening");
    let state = AppState::loading(cfg.request_timeout());
    let loader_state = state.clone();
    let loader = tokio::task::spawn_blocking(move || {
        let service = Service::from_config(&cfg)?;
        tracing::info!(model_version = service.model_version(), "model loaded");
        loader_state.set_ready(service);
        Ok::<(), CliError>(())
    });
    let server = axum::serve(listener, router(state));
    tokio::select! {
        res = server => res.map_err(CliError::runtime),
        res = loader => match res {
            Ok(Ok(())) => std::future::pending().await,
            Ok(Err(e)) => Err(e),
            Err(e) => Err(CliError::runtime(e)),
        },
    }
}

#[derive(Debug)]
enum ApiError {
    BadRequest(String),
    NotReady,
    Unavailable(String),
    Timeout,
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind, message) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, "bad_request", m),
            ApiError::NotReady => (StatusCode::SERVICE_UNAVAILABLE, "not_ready", "model is loading".into()),
            ApiError::Unavailable(m) => (StatusCode::SERVICE_UNAVAILABLE, "unavailable", m),
            ApiError::Timeout => (StatusCode::GATEWAY_TIMEOUT, "timeout", "request timed out".into()),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, "internal", m),
        };
        (status, Json(json!({ "error": kind, "message": message }))).into_response()
    }
}

impl From<ClassifierError> for ApiError {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::Embed(_) => ApiError::Unavailable(e.to_string()),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(e.to_string()))
}

fn parse_query(text: String) -> Result<Query, ApiError> {
    Query::new(text).map_err(|e| ApiError::BadRequest(e.to_string()))
}

async fn blocking<T, F>(state: &AppState, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    match tokio::time::timeout(state.timeout, tokio::task::spawn_blocking(f)).await {
        Ok(Ok(res)) => res,
        Ok(Err(e)) => Err(ApiError::Internal(e.to_string())),
        Err(_) => Err(ApiError::Timeout),
    }
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    model_version: Option<String>,
}

async fn healthz(State(state): State<Arc<AppState>>) -> Response {
    match state.service.get() {
        Some(s) => Json(Health { status: "ok", model_version: Some(s.model_version().to_string()) }).into_response(),
        None => (StatusCode::SERVICE_UNAVAILABLE, Json(Health { status: "loading", model_version: None }))
            .into_response(),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifyRequest {
    query: String,
    /// Accepted for symmetry with `/process`; classification uses the query alone.
    #[serde(default)]
    #[allow(dead_code)]
    history: Vec<ChatTurn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub label: AmbiguityLabel,
    #[serde(rename = "type")]
    pub ambiguity_type: AmbiguityType,
    pub score: f64,
    pub source: VerdictSource,
    pub masked: String,
    pub features: FeatureVector,
}

impl From<Classification> for ClassifyResponse {
    fn from(c: Classification) -> Self {
        Self {
            label: c.verdict.label,
            ambiguity_type: c.verdict.ambiguity_type,
            score: c.verdict.score,
            source: c.verdict.source,
            masked: c.masked.text,
            features: c.features,
        }
    }
}

async fn classify(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<ClassifyResponse>, ApiError> {
    let req: ClassifyRequest = parse_body(&body)?;
    let query = parse_query(req.query)?;
    let service = state.service()?;
    let out = blocking(&state, move || Ok(service.detector.classify_detailed(&query)?)).await?;
    Ok(Json(out.into()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProcessRequest {
    query: String,
    #[serde(default)]
    history: Vec<ChatTurn>,
    mode: FrameworkMode,
}

async fn process(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: ProcessRequest = parse_body(&body)?;
    let conv = Conversation::new(req.history, parse_query(req.query)?);
    let service = state.service()?;
    let record = blocking(&state, move || Ok(service.pipeline.process(&conv, req.mode)?)).await?;
    Ok(Json(record).into_response())
}
