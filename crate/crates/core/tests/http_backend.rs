//! The chat-completions client against an in-process mock provider.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use webagent::llm::{complete, HttpBackend, HttpConfig, LlmBackend, LlmError, LlmRequest, Turn};

#[derive(Clone, Default)]
struct Mock {
    /// Replies served in order; the last one repeats.
    replies: Arc<Mutex<Vec<(u16, Value)>>>,
    seen: Arc<Mutex<Vec<(Option<String>, Value)>>>,
}

async fn chat(State(mock): State<Mock>, headers: HeaderMap, Json(body): Json<Value>) -> Response {
    let auth = headers.get("authorization").and_then(|v| v.to_str().ok()).map(str::to_string);
    mock.seen.lock().unwrap().push((auth, body));
    let (status, reply) = {
        let mut r = mock.replies.lock().unwrap();
        if r.len() > 1 {
            r.remove(0)
        } else {
            r[0].clone()
        }
    };
    let status = StatusCode::from_u16(status).unwrap();
    match reply {
        Value::String(s) => (status, s).into_response(),
        v => (status, Json(v)).into_response(),
    }
}

async fn serve(replies: Vec<(u16, Value)>) -> (String, Mock) {
    let mock = Mock {
        replies: Arc::new(Mutex::new(replies)),
        ..Mock::default()
    };
    let app = Router::new().route("/v1/chat/completions", post(chat)).with_state(mock.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (format!("http://{addr}/v1"), mock)
}

fn backend(base: &str) -> HttpBackend {
    let mut config = HttpConfig::new(base, "test-model", "sk-test");
    config.backoff_base = Duration::from_millis(5);
    HttpBackend::new(config).unwrap()
}

fn ok_reply(text: &str) -> Value {
    json!({
        "model": "test-model-2025",
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": 120, "completion_tokens": 8}
    })
}

#[tokio::test]
async fn completion_carries_text_usage_and_auth() {
    let (base, mock) = serve(vec![(200, ok_reply("hello"))]).await;
    let b = backend(&base);
    let req = LlmRequest::new("sys", vec![Turn::user("hi").with_image(vec![1, 2, 3])]);
    let resp = complete(&b, &req).await.unwrap();
    assert_eq!(resp.text, "hello");
    assert_eq!((resp.input_tokens, resp.output_tokens), (120, 8));
    assert_eq!(resp.model_id, "test-model-2025");

    let seen = mock.seen.lock().unwrap();
    let (auth, body) = &seen[0];
    assert_eq!(auth.as_deref(), Some("Bearer sk-test"));
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][0], json!({"role": "system", "content": "sys"}));
    assert_eq!(body["messages"][1]["content"][1]["image_url"]["url"], "data:image/png;base64,AQID");
    assert_eq!(body["temperature"], 0.6);
}

#[tokio::test]
async fn rate_limits_are_retried_then_surface() {
    let (base, mock) = serve(vec![(429, json!({"error": "slow down"})), (200, ok_reply("done"))]).await;
    let resp = backend(&base).complete(&LlmRequest::new("s", vec![Turn::user("u")])).await.unwrap();
    assert_eq!(resp.text, "done");
    assert_eq!(mock.seen.lock().unwrap().len(), 2);

    let (base, mock) = serve(vec![(429, json!({"error": "slow down"}))]).await;
    let err = backend(&base).complete(&LlmRequest::new("s", vec![Turn::user("u")])).await.unwrap_err();
    assert!(matches!(err, LlmError::RateLimited { .. }), "{err:?}");
    assert_eq!(mock.seen.lock().unwrap().len(), 4);
}

#[tokio::test]
async fn provider_failures_are_classified() {
    let (base, _) = serve(vec![(400, json!({"error": {"code": "context_length_exceeded"}}))]).await;
    let err = backend(&base).complete(&LlmRequest::new("s", vec![Turn::user("u")])).await.unwrap_err();
    assert!(matches!(err, LlmError::ContextOverflow(_)), "{err:?}");

    let (base, _) = serve(vec![(500, json!("upstream exploded"))]).await;
    let err = backend(&base).complete(&LlmRequest::new("s", vec![Turn::user("u")])).await.unwrap_err();
    assert!(matches!(&err, LlmError::ProviderError(m) if m.contains("500") && m.contains("upstream exploded")), "{err:?}");

    let (base, _) = serve(vec![(200, json!({"choices": []}))]).await;
    let err = backend(&base).complete(&LlmRequest::new("s", vec![Turn::user("u")])).await.unwrap_err();
    assert!(matches!(err, LlmError::ProviderError(_)), "{err:?}");
}

#[tokio::test]
async fn unreachable_provider_is_a_provider_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}/v1", listener.local_addr().unwrap());
    drop(listener);
    let err = backend(&base).complete(&LlmRequest::new("s", vec![Turn::user("u")])).await.unwrap_err();
    assert!(matches!(err, LlmError::ProviderError(_)), "{err:?}");
}

#[tokio::test]
async fn invalid_requests_never_reach_the_wire() {
    let (base, mock) = serve(vec![(200, ok_reply("x"))]).await;
    let b = backend(&base);
    let err = complete(&b, &LlmRequest::new("s", vec![])).await.unwrap_err();
    assert!(matches!(err, LlmError::InvalidRequest(_)));
    let bad_image = LlmRequest::new("s", vec![Turn::assistant("a").with_image(vec![0])]);
    assert!(complete(&b, &bad_image).await.is_err());
    assert!(mock.seen.lock().unwrap().is_empty());
    assert_eq!(b.model_id(), "test-model");
}
