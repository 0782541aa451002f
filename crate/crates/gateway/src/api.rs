//! HTTP API. Reads are served from state snapshots; every mutation is sent
//! to the engine's command channel and applied on its thread.

use std::collections::VecDeque;
use std::convert::Infallible;
use std::sync::mpsc::{self, Sender};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::watch;

use archemist_core::orchestrator::{Command, CommandError, SubmitError};
use archemist_core::persistence::JournalRecord;
use archemist_core::recipe::{parse_recipe, RecipeDoc};
use archemist_core::state::{ControlCommand, StateAuthority};

use crate::view::{DiagnosticView, StateView};

/// Version segment of the schema paths.
pub const SCHEMA_VERSION: &str = "v1";

const REPLY_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
pub struct SubmitRequest {
    /// Recipe document text.
    pub recipe: String,
    #[serde(default = "one")]
    pub count: u32,
    /// Starting location; the server default when omitted.
    #[serde(default)]
    pub location: Option<String>,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
pub struct SubmitResponse {
    pub samples: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ControlAction {
    Pause,
    Resume,
    Halt,
}

impl From<ControlAction> for ControlCommand {
    fn from(a: ControlAction) -> Self {
        match a {
            ControlAction::Pause => ControlCommand::Pause,
            ControlAction::Resume => ControlCommand::Resume,
            ControlAction::Halt => ControlCommand::Halt,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
pub struct ControlRequest {
    pub command: ControlAction,
}

/// Revision after a control command or acknowledgement.
#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
pub struct RevisionResponse {
    pub revision: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<DiagnosticView>,
}

#[derive(Debug, Deserialize)]
pub struct StreamQuery {
    /// Send records after this revision; defaults to the current one.
    pub from: Option<u64>,
}

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("recipe is invalid")]
    Invalid(Vec<DiagnosticView>),
    #[error("{0}")]
    Rejected(String),
    #[error("processing is halted")]
    Halted,
    #[error("unknown alert {0}")]
    UnknownAlert(u64),
    #[error("engine is not running")]
    EngineGone,
    #[error("{0}")]
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self {
            ApiError::Invalid(_) | ApiError::Rejected(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Halted => StatusCode::CONFLICT,
            ApiError::UnknownAlert(_) => StatusCode::NOT_FOUND,
            ApiError::EngineGone => StatusCode::SERVICE_UNAVAILABLE,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let error = self.to_string();
        let diagnostics = match self {
            ApiError::Invalid(d) => d,
            _ => Vec::new(),
        };
        (status, Json(ErrorBody { error, diagnostics })).into_response()
    }
}

impl From<SubmitError> for ApiError {
    fn from(e: SubmitError) -> Self {
        match e {
            SubmitError::Halted => ApiError::Halted,
            SubmitError::Invalid(d) => ApiError::Invalid(d.iter().map(DiagnosticView::from).collect()),
            SubmitError::Rejected(m) => ApiError::Rejected(m),
        }
    }
}

impl From<CommandError> for ApiError {
    fn from(e: CommandError) -> Self {
        match e {
            CommandError::UnknownAlert(id) => ApiError::UnknownAlert(id),
            CommandError::Authority(e) => ApiError::Internal(e.to_string()),
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    authority: Arc<StateAuthority>,
    commands: Sender<Command>,
    revisions: watch::Receiver<u64>,
    default_location: String,
}

impl AppState {
    /// Subscribes to `authority` commits; `commands` feeds the engine loop.
    pub fn new(authority: Arc<StateAuthority>, commands: Sender<Command>, default_location: &str) -> Self {
        let (tx, rx) = watch::channel(authority.revision());
        authority.observe(Box::new(move |record, _| {
            tx.send_replace(record.revision);
        }));
        Self {
            authority,
            commands,
            revisions: rx,
            default_location: default_location.to_string(),
        }
    }

    /// Sends a command and waits for the engine's reply off the async runtime.
    async fn request<T: Send + 'static>(
        &self,
        make: impl FnOnce(Sender<T>) -> Command,
    ) -> Result<T, ApiError> {
        let (tx, rx) = mpsc::channel();
        self.commands.send(make(tx)).map_err(|_| ApiError::EngineGone)?;
        tokio::task::spawn_blocking(move || rx.recv_timeout(REPLY_TIMEOUT))
            .await
            .map_err(|e| ApiError::Internal(e.to_string()))?
            .map_err(|_| ApiError::EngineGone)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/samples", post(submit))
        .route("/state", get(current_state))
        .route("/state/stream", get(stream_state))
        .route("/control", post(control))
        .route("/alerts/:id/ack", post(ack))
        .route("/schema", get(schema_index))
        .route("/schema/:version/:name", get(schema))
        .with_state(state)
}

async fn submit(State(app): State<AppState>, Json(req): Json<SubmitRequest>) -> Result<Json<SubmitResponse>, ApiError> {
    let recipe = parse_recipe(&RecipeDoc::new(req.recipe, "request"))
        .map_err(|list| ApiError::Invalid(list.iter().map(DiagnosticView::from).collect()))?;
    let location = req.location.unwrap_or_else(|| app.default_location.clone());
    let count = req.count;
    let ids = app
        .request(move |reply| Command::Submit {
            recipe: Arc::new(recipe),
            count,
            location,
            reply,
        })
        .await??;
    Ok(Json(SubmitResponse { samples: ids }))
}

async fn current_state(State(app): State<AppState>) -> Json<StateView> {
    Json(StateView::of(&app.authority.snapshot()))
}

async fn control(State(app): State<AppState>, Json(req): Json<ControlRequest>) -> Result<Json<RevisionResponse>, ApiError> {
    let command = req.command.into();
    let revision = app.request(move |reply| Command::Control { command, reply }).await??;
    Ok(Json(RevisionResponse { revision }))
}

async fn ack(State(app): State<AppState>, Path(id): Path<u64>) -> Result<Json<RevisionResponse>, ApiError> {
    let revision = app.request(move |reply| Command::Ack { alert: id, reply }).await??;
    Ok(Json(RevisionResponse { revision }))
}

struct StreamCursor {
    authority: Arc<StateAuthority>,
    revisions: watch::Receiver<u64>,
    sent: u64,
    pending: VecDeque<JournalRecord>,
}

fn record_event(record: &JournalRecord) -> Event {
    let kind = serde_json::to_value(record.kind).ok();
    let kind = kind.as_ref().and_then(|v| v.as_str()).unwrap_or("record");
    Event::default()
        .id(record.revision.to_string())
        .event(kind)
        .json_data(record)
        .unwrap_or_else(|_| Event::default().comment("unencodable record"))
}

/// Journal records as server-sent events, one per revision, ascending.
async fn stream_state(
    State(app): State<AppState>,
    Query(q): Query<StreamQuery>,
) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let mut revisions = app.revisions.clone();
    revisions.mark_unchanged();
    let cursor = StreamCursor {
        sent: q.from.unwrap_or_else(|| app.authority.revision()),
        authority: app.authority.clone(),
        revisions,
        pending: VecDeque::new(),
    };
    let events = stream::unfold(cursor, |mut c| async move {
        loop {
            if let Some(record) = c.pending.pop_front() {
                c.sent = record.revision;
                return Some((Ok(record_event(&record)), c));
            }
            c.revisions.mark_unchanged();
            c.pending.extend(c.authority.records_after(c.sent));
            if c.pending.is_empty() && c.revisions.changed().await.is_err() {
                return None;
            }
        }
    });
    Sse::new(events).keep_alive(KeepAlive::default())
}

/// Named JSON schemas for every request and response body.
pub fn schemas() -> Vec<(&'static str, schemars::schema::RootSchema)> {
    use schemars::schema_for;
    vec![
        ("state_view", schema_for!(StateView)),
        ("submit_request", schema_for!(SubmitRequest)),
        ("submit_response", schema_for!(SubmitResponse)),
        ("control_request", schema_for!(ControlRequest)),
        ("revision_response", schema_for!(RevisionResponse)),
        ("error", schema_for!(ErrorBody)),
        ("mass_point", schema_for!(crate::view::MassPoint)),
    ]
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SchemaIndex {
    pub version: String,
    pub schemas: Vec<String>,
}

async fn schema_index() -> Json<SchemaIndex> {
    Json(SchemaIndex {
        version: SCHEMA_VERSION.into(),
        schemas: schemas()
            .into_iter()
            .map(|(name, _)| format!("/schema/{SCHEMA_VERSION}/{name}"))
            .collect(),
    })
}

async fn schema(Path((version, name)): Path<(String, String)>) -> Response {
    let found = (version == SCHEMA_VERSION)
        .then(|| schemas().into_iter().find(|(n, _)| *n == name))
        .flatten();
    match found {
        Some((_, schema)) => Json(schema).into_response(),
        None => (
            StatusCode::NOT_FOUND,
            Json(ErrorBody {
                error: format!("no schema '{name}' in version '{version}'"),
                diagnostics: Vec::new(),
            }),
        )
            .into_response(),
    }
}
