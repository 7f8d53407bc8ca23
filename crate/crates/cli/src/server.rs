//! HTTP chat service: `POST /chat`, `GET /health`, `GET /sessions/{id}`.

use std::collections::HashMap;
use std::future::Future;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use initiative_core::corpus::{DialogueMode, DialogueTurn, GenerationMode, TurnKind};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;

use crate::config::SERVE_LOCK;
use crate::engine::{ModelKind, Models, Session};
use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeOverride {
    pub ccto: DialogueMode,
    pub ttnt: TurnKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatRequest {
    pub session_id: String,
    pub utterance: String,
    #[serde(default)]
    pub mode_override: Option<ModeOverride>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Only read when the session is created; defaults to the server's model.
    #[serde(default)]
    pub model: Option<ModelKind>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub response: String,
    pub transition_sentence: Option<String>,
    pub predicted_ccto: Option<DialogueMode>,
    pub predicted_ttnt: Option<TurnKind>,
    pub model: ModelKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub model: ModelKind,
    pub history: Vec<DialogueTurn>,
}

#[derive(Serialize, Deserialize)]
struct StoredTurn {
    model: ModelKind,
    turn: DialogueTurn,
}

pub struct AppState {
    models: Arc<Models>,
    default_model: ModelKind,
    seed: u64,
    store: Option<PathBuf>,
    sessions: Mutex<HashMap<String, Arc<tokio::sync::Mutex<Session>>>>,
}

impl AppState {
    pub fn new(models: Models, default_model: ModelKind, seed: u64, store: Option<PathBuf>) -> CliResult<Self> {
        if !models.has(default_model) {
            return Err(CliError::ModelUnavailable(default_model.to_string()));
        }
        if let Some(dir) = &store {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        Ok(Self {
            models: Arc::new(models),
            default_model,
            seed,
            store,
            sessions: Mutex::new(HashMap::new()),
        })
    }

    fn transcript(&self, id: &str) -> Option<PathBuf> {
        self.store.as_ref().map(|d| d.join(format!("{id}.jsonl")))
    }

    fn restore(&self, id: &str) -> CliResult<Option<Session>> {
        let Some(path) = self.transcript(id).filter(|p| p.exists()) else {
            return Ok(None);
        };
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let mut session: Option<Session> = None;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let t: StoredTurn = serde_json::from_str(line)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            session
                .get_or_insert_with(|| Session::new(id, t.model, self.seed))
                .history
                .push(t.turn);
        }
        Ok(session)
    }

    fn persist(&self, session: &Session, turns: &[DialogueTurn]) -> CliResult<()> {
        let Some(path) = self.transcript(&session.id) else {
            return Ok(());
        };
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| CliError::io(&path, e))?;
        for t in turns {
            let line = serde_json::to_string(&StoredTurn {
                model: session.model,
                turn: t.clone(),
            })
            .expect("turn serializes");
            writeln!(f, "{line}").map_err(|e| CliError::io(&path, e))?;
        }
        Ok(())
    }

    fn existing(&self, id: &str) -> CliResult<Option<Arc<tokio::sync::Mutex<Session>>>> {
        let mut map = self.sessions.lock().expect("session map poisoned");
        if let Some(s) = map.get(id) {
            return Ok(Some(s.clone()));
        }
        Ok(self.restore(id)?.map(|s| {
            let s = Arc::new(tokio::sync::Mutex::new(s));
            map.insert(id.to_string(), s.clone());
            s
        }))
    }

    fn session(&self, id: &str, model: ModelKind) -> CliResult<Arc<tokio::sync::Mutex<Session>>> {
        if let Some(s) = self.existing(id)? {
            return Ok(s);
        }
        let mut map = self.sessions.lock().expect("session map poisoned");
        Ok(map
            .entry(id.to_string())
            .or_insert_with(|| Arc::new(tokio::sync::Mutex::new(Session::new(id, model, self.seed))))
            .clone())
    }
}

struct ApiError(CliError);

impl From<CliError> for ApiError {
    fn from(e: CliError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            CliError::BadRequest(_) | CliError::ModelUnavailable(_) => StatusCode::BAD_REQUEST,
            CliError::NotFound(_) => StatusCode::NOT_FOUND,
            CliError::Conflict(_) => StatusCode::CONFLICT,
            CliError::Core(initiative_core::Error::Overlength { .. }) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(self.0.to_json())).into_response()
    }
}

fn valid_id(id: &str) -> Result<(), ApiError> {
    let ok = !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(CliError::BadRequest("session_id must be 1-128 characters of [A-Za-z0-9_-]".into()).into())
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "models": state.models.available(),
        "default_model": state.default_model,
    }))
}

async fn get_session(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<SessionView>, ApiError> {
    valid_id(&id)?;
    let Some(s) = state.existing(&id)? else {
        return Err(CliError::NotFound(format!("unknown session `{id}`")).into());
    };
    let s = s.lock().await;
    Ok(Json(SessionView {
        session_id: s.id.clone(),
        model: s.model,
        history: s.history.clone(),
    }))
}

async fn chat(State(state): State<Arc<AppState>>, body: Result<Json<ChatRequest>, JsonRejection>) -> Result<Response, ApiError> {
    let Json(req) = body.map_err(|e| CliError::BadRequest(e.body_text()))?;
    valid_id(&req.session_id)?;
    let model = req.model.unwrap_or(state.default_model);
    if !state.models.has(model) {
        return Err(CliError::ModelUnavailable(model.to_string()).into());
    }
    let handle = state.session(&req.session_id, model)?;
    // one generation per session at a time; other sessions are not blocked
    let mut session = handle.lock().await;
    if req.model.is_some_and(|m| m != session.model) {
        return Err(CliError::Conflict(format!(
            "session `{}` uses the {} model",
            session.id, session.model
        ))
        .into());
    }
    let override_mode = req.mode_override.map(|m| GenerationMode::new(m.ccto, m.ttnt));
    let snapshot = session.clone();
    let models = state.models.clone();
    let utterance = req.utterance.clone();
    let result = tokio::task::spawn_blocking(move || snapshot.respond(&models, &utterance, override_mode, req.seed))
        .await
        .map_err(|e| CliError::Config(format!("generation task failed: {e}")))
        .and_then(|r| r)
        .and_then(|(reply, turns)| state.persist(&session, &turns).map(|_| (reply, turns)));
    let (reply, turns) = match result {
        Ok(r) => r,
        Err(e) => {
            if session.history.is_empty() {
                let mut map = state.sessions.lock().expect("session map poisoned");
                if map.get(&session.id).is_some_and(|h| Arc::ptr_eq(h, &handle)) {
                    map.remove(&session.id);
                }
            }
            return Err(e.into());
        }
    };
    session.commit(turns, override_mode);
    let body = ChatResponse {
        response: reply.response().to_string(),
        transition_sentence: reply.transition_sentence().map(str::to_string),
        predicted_ccto: reply.mode.map(|m| m.ccto),
        predicted_ttnt: reply.mode.map(|m| m.ttnt),
        model: reply.model,
    };
    Ok(Json(body).into_response())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/chat", post(chat))
        .route("/health", get(health))
        .route("/sessions/{id}", get(get_session))
        .with_state(state)
}

/// Serves until `shutdown` resolves, then lets in-flight requests finish.
pub async fn serve<F>(listener: TcpListener, state: Arc<AppState>, shutdown: F) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// Marks an output directory as being served; removed on drop.
pub struct ServeLock(PathBuf);

impl ServeLock {
    pub fn acquire(out: &Path) -> CliResult<Self> {
        let path = out.join(SERVE_LOCK);
        std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .and_then(|mut f| writeln!(f, "{}", std::process::id()))
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => CliError::Locked(out.display().to_string()),
                _ => CliError::io(&path, e),
            })?;
        Ok(Self(path))
    }
}

impl Drop for ServeLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}
