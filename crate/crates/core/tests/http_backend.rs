use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use rubricate_core::backend::{
    count_tokens, BackendConfig, BackendError, ChatBackend, CompletionRequest, HttpBackend, RetryPolicy,
    RetryingBackend, SystemClock,
};
use serde_json::{json, Value};

/// Request body and `Authorization` header.
type Seen = (Value, Option<String>);

async fn spawn(app: Router) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}/v1")
}

fn config(endpoint: String) -> BackendConfig {
    BackendConfig {
        endpoint_url: endpoint,
        model_name: "local-model".into(),
        ..BackendConfig::default()
    }
}

#[tokio::test]
async fn sends_openai_shaped_request_and_reads_usage() {
    let seen: Arc<Mutex<Option<Seen>>> = Arc::default();
    let s = seen.clone();
    let app = Router::new().route(
        "/v1/chat/completions",
        post(move |headers: HeaderMap, Json(body): Json<Value>| {
            let s = s.clone();
            async move {
                let auth = headers.get("authorization").map(|v| v.to_str().unwrap().to_string());
                *s.lock().unwrap() = Some((body, auth));
                Json(json!({
                    "choices": [{"message": {"role": "assistant", "content": "true"}}],
                    "usage": {"prompt_tokens": 123, "completion_tokens": 1}
                }))
            }
        }),
    );
    let backend = HttpBackend::with_api_key(&config(spawn(app).await), Some("sk-test".into())).unwrap();
    let out = backend.complete(&CompletionRequest::new("Is it?")).await.unwrap();
    assert_eq!(out.text, "true");
    assert_eq!((out.input_tokens, out.output_tokens), (123, 1));
    let (body, auth) = seen.lock().unwrap().take().unwrap();
    assert_eq!(body["model"], "local-model");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"], json!([{"role": "user", "content": "Is it?"}]));
    assert_eq!(auth.as_deref(), Some("Bearer sk-test"));
}

#[tokio::test]
async fn missing_usage_falls_back_to_local_token_counts() {
    let app = Router::new().route(
        "/v1/chat/completions",
        post(|| async { Json(json!({"choices": [{"message": {"content": "false because"}}]})) }),
    );
    let backend = HttpBackend::with_api_key(&config(spawn(app).await), None).unwrap();
    let prompt = "Consider a YouTube comment.";
    let out = backend.complete(&CompletionRequest::new(prompt)).await.unwrap();
    assert_eq!(out.input_tokens, count_tokens(prompt));
    assert_eq!(out.output_tokens, count_tokens("false because"));
}

#[tokio::test]
async fn status_codes_are_classified() {
    for (code, retryable) in [(429u16, true), (503, true), (400, false), (401, false)] {
        let app = Router::new().route(
            "/v1/chat/completions",
            post(move || async move { (StatusCode::from_u16(code).unwrap(), "nope") }),
        );
        let backend = HttpBackend::with_api_key(&config(spawn(app).await), None).unwrap();
        let err = backend.complete(&CompletionRequest::new("x")).await.unwrap_err();
        assert_eq!(err.is_retryable(), retryable, "status {code}: {err}");
    }
}

#[tokio::test]
async fn malformed_bodies_are_fatal() {
    let app = Router::new().route("/v1/chat/completions", post(|| async { Json(json!({"choices": []})) }));
    let backend = HttpBackend::with_api_key(&config(spawn(app).await), None).unwrap();
    let err = backend.complete(&CompletionRequest::new("x")).await.unwrap_err();
    assert!(matches!(err, BackendError::Fatal(_)));
}

#[tokio::test]
async fn retrying_backend_recovers_from_throttling() {
    let hits = Arc::new(AtomicUsize::new(0));
    let h = hits.clone();
    let app = Router::new().route(
        "/v1/chat/completions",
        post(move || {
            let n = h.fetch_add(1, Ordering::SeqCst);
            async move {
                if n < 2 {
                    (StatusCode::TOO_MANY_REQUESTS, Json(json!({"error": "slow down"})))
                } else {
                    (
                        StatusCode::OK,
                        Json(json!({"choices": [{"message": {"content": "Label: true"}}]})),
                    )
                }
            }
        }),
    );
    let http = HttpBackend::with_api_key(&config(spawn(app).await), None).unwrap();
    let backend = RetryingBackend::new(
        http,
        RetryPolicy::new(3, std::time::Duration::from_millis(1)),
        Arc::new(SystemClock::new()),
    );
    let out = backend.complete(&CompletionRequest::new("x")).await.unwrap();
    assert_eq!(out.text, "Label: true");
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[tokio::test]
async fn unreachable_endpoint_is_retryable() {
    let backend = HttpBackend::with_api_key(&config("http://127.0.0.1:9/v1".into()), None).unwrap();
    let err = backend.complete(&CompletionRequest::new("x")).await.unwrap_err();
    assert!(err.is_retryable(), "{err}");
}
