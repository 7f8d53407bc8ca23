mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use initiative_cli::engine::{ModelKind, Models};
use initiative_cli::server::{router, serve, AppState, ChatResponse, SessionView};
use initiative_core::corpus::Speaker;
use serde_json::{json, Value};
use tower::ServiceExt;

fn state(default: ModelKind, store: Option<std::path::PathBuf>) -> Arc<AppState> {
    let models = Models::load_available(common::trained()).unwrap();
    Arc::new(AppState::new(models, default, 7, store).unwrap())
}

async fn call(app: &axum::Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn post(body: Value) -> Request<Body> {
    Request::post("/chat")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

#[tokio::test]
async fn health_lists_models() {
    let app = router(state(ModelKind::Continuous, None));
    let (s, v) = call(&app, get("/health")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    assert_eq!(v["models"], json!(["unified", "discrete", "continuous"]));
}

#[tokio::test]
async fn chat_creates_a_session_and_records_history() {
    let app = router(state(ModelKind::Continuous, None));
    let (s, v) = call(&app, post(json!({"session_id": "a1", "utterance": "hi there", "mode_override": null, "seed": 4}))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let r: ChatResponse = serde_json::from_value(v.clone()).unwrap();
    assert_eq!(r.model, ModelKind::Continuous);
    assert!(r.predicted_ccto.is_some() && r.predicted_ttnt.is_some());
    for key in ["response", "transition_sentence", "predicted_ccto", "predicted_ttnt", "model"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    let (s, v) = call(&app, get("/sessions/a1")).await;
    assert_eq!(s, StatusCode::OK);
    let view: SessionView = serde_json::from_value(v).unwrap();
    assert_eq!(view.history.len(), 2);
    assert_eq!(view.history[0].text, "hi there");
    assert_eq!(view.history[1].speaker, Speaker::System);
    assert_eq!(view.history[1].text, r.response);
}

#[tokio::test]
async fn discrete_override_is_echoed_and_unified_has_no_mode() {
    let app = router(state(ModelKind::Discrete, None));
    let body = json!({"session_id": "d", "utterance": "i lost my wallet", "mode_override": {"ccto": "chitchat", "ttnt": "transition"}, "seed": 1});
    let (s, v) = call(&app, post(body)).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["predicted_ccto"], "chitchat");
    assert_eq!(v["predicted_ttnt"], "transition");
    assert_eq!(v["model"], "discrete");
    let (s, v) = call(&app, post(json!({"session_id": "u", "utterance": "hello", "model": "unified"}))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["predicted_ccto"], Value::Null);
    assert_eq!(v["model"], "unified");
}

#[tokio::test]
async fn malformed_requests_get_json_errors() {
    let app = router(state(ModelKind::Continuous, None));
    let bad = Request::post("/chat")
        .header("content-type", "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    let (s, v) = call(&app, bad).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["kind"], "bad_request");
    for body in [
        json!({"session_id": "x", "utterance": "   "}),
        json!({"session_id": "../etc", "utterance": "hi"}),
        json!({"session_id": "x", "utterance": "hi", "mode_override": {"ccto": "chitchat", "ttnt": "transition"}}),
        json!({"session_id": "x", "utterance": "hi", "mode_override": {"ccto": "smalltalk", "ttnt": "normal"}}),
        json!({"utterance": "hi"}),
        json!({"session_id": "x", "utterance": "hi", "model": "gpt"}),
    ] {
        let (s, v) = call(&app, post(body.clone())).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{body}");
        assert!(v["error"].is_string(), "{body}");
    }
    let (s, v) = call(&app, get("/sessions/x")).await;
    assert_eq!(s, StatusCode::NOT_FOUND, "failed requests must not create sessions");
    assert_eq!(v["kind"], "not_found");
}

#[tokio::test]
async fn session_model_is_fixed() {
    let app = router(state(ModelKind::Continuous, None));
    let (s, _) = call(&app, post(json!({"session_id": "m", "utterance": "hi", "model": "unified"}))).await;
    assert_eq!(s, StatusCode::OK);
    let (s, v) = call(&app, post(json!({"session_id": "m", "utterance": "hi", "model": "discrete"}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["kind"], "conflict");
    let (_, v) = call(&app, get("/sessions/m")).await;
    assert_eq!(v["history"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn replays_are_deterministic_across_restarts() {
    let turns = ["hello", "i want to book a taxi", "thanks"];
    let mut runs = Vec::new();
    for _ in 0..2 {
        let app = router(state(ModelKind::Continuous, None));
        let mut out = Vec::new();
        for t in turns {
            let (s, v) = call(&app, post(json!({"session_id": "r", "utterance": t}))).await;
            assert_eq!(s, StatusCode::OK);
            out.push(v);
        }
        runs.push(out);
    }
    assert_eq!(runs[0], runs[1]);
}

#[tokio::test]
async fn transcripts_persist_and_restore() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(state(ModelKind::Discrete, Some(dir.path().to_path_buf())));
    let (s, _) = call(&app, post(json!({"session_id": "p", "utterance": "hello"}))).await;
    assert_eq!(s, StatusCode::OK);
    let (_, before) = call(&app, get("/sessions/p")).await;
    let lines = std::fs::read_to_string(dir.path().join("p.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 2);

    let app = router(state(ModelKind::Continuous, Some(dir.path().to_path_buf())));
    let (s, after) = call(&app, get("/sessions/p")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(before, after);
    assert_eq!(after["model"], "discrete");
    let (s, v) = call(&app, post(json!({"session_id": "p", "utterance": "again"}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["model"], "discrete");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn interleaved_sessions_over_tcp_stay_separate() {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(serve(listener, state(ModelKind::Continuous, None), async {
        let _ = rx.await;
    }));
    let client = reqwest::Client::new();
    let url = format!("http://{addr}");
    let send = |id: &'static str, text: String| {
        let client = client.clone();
        let url = url.clone();
        async move {
            let r = client
                .post(format!("{url}/chat"))
                .json(&json!({"session_id": id, "utterance": text}))
                .send()
                .await
                .unwrap();
            assert_eq!(r.status(), 200);
            r.json::<Value>().await.unwrap()
        }
    };
    for round in 0..3 {
        let (a, b, a2) = tokio::join!(
            send("alpha", format!("alpha says {round}")),
            send("beta", format!("beta says {round}")),
            send("alpha", format!("alpha again {round}")),
        );
        assert!(a["response"].is_string() && b["response"].is_string() && a2["response"].is_string());
    }
    let view = |id: &'static str| {
        let client = client.clone();
        let url = url.clone();
        async move {
            client
                .get(format!("{url}/sessions/{id}"))
                .send()
                .await
                .unwrap()
                .json::<SessionView>()
                .await
                .unwrap()
        }
    };
    let (alpha, beta) = tokio::join!(view("alpha"), view("beta"));
    assert_eq!(alpha.history.len(), 12);
    assert_eq!(beta.history.len(), 6);
    for (i, t) in alpha.history.iter().enumerate() {
        assert_eq!(t.speaker, if i % 2 == 0 { Speaker::User } else { Speaker::System });
        if i % 2 == 0 {
            assert!(t.text.starts_with("alpha"), "{}", t.text);
        }
    }
    assert!(beta.history.iter().step_by(2).all(|t| t.text.starts_with("beta")));
    let health: Value = client.get(format!("{url}/health")).send().await.unwrap().json().await.unwrap();
    assert_eq!(health["status"], "ok");
    tx.send(()).unwrap();
    server.await.unwrap().unwrap();
}
