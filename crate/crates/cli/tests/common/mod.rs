#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use agqr::config::{LlmRewriterConfig, RewriterConfig};
use agqr::server::{router, AppState, Service};
use agqr_core::classifier::{fit, TrainOutcome};
use agqr_core::embed::{EmbedderKind, RemoteEmbedder, RemoteEmbedderConfig};
use agqr_core::lexical::{EntityTypeLexicon, WordList};
use agqr_core::synthetic::{Split, SyntheticCorpus};
use agqr_core::{AmbiguityDetector, ClassifierModel, Embedder, EmbedderSpec, HashingEmbedder, MockRewriter, TrainConfig};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub const TIMEOUT: Duration = Duration::from_secs(30);

pub struct Trained {
    pub split: Split,
    pub outcome: TrainOutcome,
    pub elapsed: Duration,
}

/// Desk-scale model: 3500 clear + 3500 ambiguous synthetic queries, 70/15/15
/// split, default hyperparameters. Trained once per test binary.
pub fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let split = SyntheticCorpus::generate(1, 3500, 3500).split(0.7, 0.15, 1);
        let started = std::time::Instant::now();
        let outcome = fit(&split.train, &split.validation, &TrainConfig::default(), &HashingEmbedder::default())
            .expect("training succeeds");
        Trained { split, outcome, elapsed: started.elapsed() }
    })
}

pub fn model() -> Arc<ClassifierModel> {
    Arc::new(trained().outcome.model.clone())
}

pub fn detector_with(model: Arc<ClassifierModel>, embedder: Arc<dyn Embedder>) -> AmbiguityDetector {
    AmbiguityDetector::new(model, embedder, EntityTypeLexicon::default_types(), WordList::default_common_words())
        .expect("embedder matches model")
}

pub fn detector() -> AmbiguityDetector {
    detector_with(model(), Arc::new(HashingEmbedder::default()))
}

pub fn rewrite_table() -> MockRewriter {
    MockRewriter::from_json(r#"{"What is it?": "What is the row count of the Web Events dataset?"}"#).unwrap()
}

/// Nothing listens on port 1 of the loopback interface, so connections are
/// refused immediately and no traffic leaves the machine.
const DEAD_ENDPOINT: &str = "http://127.0.0.1:1";

pub fn main_service() -> Router {
    router(AppState::ready(Service::new(detector(), Arc::new(rewrite_table()), 5), TIMEOUT))
}

pub fn loading_service() -> Router {
    router(AppState::loading(TIMEOUT))
}

pub fn rewriter_down_service() -> Router {
    let rewriter = RewriterConfig::Llm(LlmRewriterConfig {
        endpoint: format!("{DEAD_ENDPOINT}/chat"),
        model: "unreachable".into(),
        temperature: 0.0,
        timeout_ms: Some(2_000),
        max_retries: Some(1),
        initial_backoff_ms: Some(1),
        max_in_flight: None,
        debug_bodies: false,
        token_env: "AGQR_TEST_UNSET_TOKEN".into(),
        template: None,
    })
    .build()
    .unwrap();
    router(AppState::ready(Service::new(detector(), rewriter, 5), TIMEOUT))
}

pub fn embedder_down_service() -> Router {
    let mut m = (*model()).clone();
    m.embedder = EmbedderSpec { kind: EmbedderKind::Remote, dim: m.embedder.dim, identity: "remote-encoder".into() };
    let embedder = RemoteEmbedder::new(RemoteEmbedderConfig {
        endpoint: format!("{DEAD_ENDPOINT}/embed"),
        model: "remote-encoder".into(),
        dim: m.embedder.dim,
        token: None,
        timeout: Duration::from_secs(2),
        max_in_flight: 2,
    });
    let det = detector_with(Arc::new(m), Arc::new(embedder));
    router(AppState::ready(Service::new(det, Arc::new(rewrite_table()), 5), TIMEOUT))
}

pub fn service(name: &str) -> Router {
    match name {
        "main" => main_service(),
        "loading" => loading_service(),
        "rewriter_down" => rewriter_down_service(),
        "embedder_down" => embedder_down_service(),
        other => panic!("unknown fixture service {other}"),
    }
}

pub async fn call(app: Router, method: &str, path: &str, body: Option<String>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(path)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    (status, value)
}

pub fn crate_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(rel)
}

pub fn schema(name: &str) -> jsonschema::Validator {
    let text = std::fs::read_to_string(crate_path(&format!("schemas/{name}.json"))).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

pub fn schema_errors(name: &str, instance: &Value) -> Vec<String> {
    schema(name).iter_errors(instance).map(|e| format!("{} at {}", e, e.instance_path)).collect()
}

/// Every key of `expected` must be present in `actual` with a matching value;
/// numbers match within 1e-9.
pub fn contains(expected: &Value, actual: &Value, path: &str) -> Result<(), String> {
    match (expected, actual) {
        (Value::Object(e), Value::Object(a)) => {
            for (k, ev) in e {
                let av = a.get(k).ok_or_else(|| format!("{path}/{k}: missing"))?;
                contains(ev, av, &format!("{path}/{k}"))?;
            }
            Ok(())
        }
        (Value::Array(e), Value::Array(a)) if e.len() == a.len() => {
            e.iter().zip(a).enumerate().try_for_each(|(i, (ev, av))| contains(ev, av, &format!("{path}/{i}")))
        }
        (Value::Number(e), Value::Number(a)) => {
            let (e, a) = (e.as_f64().unwrap(), a.as_f64().unwrap());
            if (e - a).abs() <= 1e-9 {
                Ok(())
            } else {
                Err(format!("{path}: expected {e}, got {a}"))
            }
        }
        (e, a) if e == a => Ok(()),
        (e, a) => Err(format!("{path}: expected {e}, got {a}")),
    }
}

fn response_schema(path: &str, status: StatusCode) -> &'static str {
    match (path, status.is_success()) {
        ("/healthz", _) => "healthz_response",
        ("/classify", true) => "classify_response",
        ("/process", true) => "process_response",
        _ => "error_response",
    }
}

/// Runs every golden case; returns (name, outcome) pairs.
pub async fn run_golden_fixtures() -> Vec<(String, Result<(), String>)> {
    let text = std::fs::read_to_string(crate_path("tests/fixtures/service_golden.json")).unwrap();
    let cases: Vec<Value> = serde_json::from_str(&text).unwrap();
    let mut out = Vec::new();
    for case in cases {
        let name = case["name"].as_str().unwrap().to_string();
        let body = match (&case.get("raw"), &case.get("body")) {
            (Some(raw), _) => Some(raw.as_str().unwrap().to_string()),
            (None, Some(b)) => Some(b.to_string()),
            (None, None) => None,
        };
        let path = case["path"].as_str().unwrap();
        let app = service(case["service"].as_str().unwrap());
        let (status, value) = call(app, case["method"].as_str().unwrap(), path, body).await;
        let expected_status = case["status"].as_u64().unwrap() as u16;
        let result = if status.as_u16() != expected_status {
            Err(format!("status {status}, expected {expected_status}; body {value}"))
        } else {
            let errors = schema_errors(response_schema(path, status), &value);
            if errors.is_empty() {
                contains(&case["expect"], &value, "")
            } else {
                Err(format!("schema: {}; body {value}", errors.join("; ")))
            }
        };
        out.push((name, result));
    }
    out
}
