use std::convert::Infallible;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use teachbench_core::autochat::{
    direct_message, generate_batch, knowledge_at, BatchEvent, ChatContext, ReviewMode, ReviewSession,
};
use teachbench_core::store::Project;
use teachbench_core::{KnowledgeState, Message, StudentProfile};
use tokio::sync::mpsc;
use tokio_stream::wrappers::UnboundedReceiverStream;
use tokio_stream::StreamExt;

use crate::error::{ApiError, ApiResult, Body};
use crate::state::{AppState, Progress, SessionEntry};

#[derive(Debug, Serialize)]
pub struct SessionView {
    pub project_id: String,
    #[serde(flatten)]
    pub session: ReviewSession,
}

impl SessionView {
    fn new(project_id: &str, session: ReviewSession) -> Self {
        Self {
            project_id: project_id.to_string(),
            session,
        }
    }
}

fn context<'a>(state: &'a AppState, project: &'a Project) -> ChatContext<'a> {
    ChatContext {
        diagram: &project.diagram,
        diagram_version: project.diagram_version,
        topic: &project.topic,
        components: &project.components,
        gateways: &state.gateways,
        settings: &state.settings,
    }
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub project_id: String,
    pub mode: ReviewMode,
    #[serde(default)]
    pub profile_id: Option<String>,
}

pub async fn create(
    State(state): State<AppState>,
    Body(req): Body<CreateSession>,
) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let project = state.store.load(&req.project_id)?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let session = match (req.mode, req.profile_id) {
        (ReviewMode::Automated, Some(profile_id)) => {
            if project.profile(&profile_id).is_none() {
                return Err(ApiError::not_found(format!("profile {profile_id}")));
            }
            ReviewSession::automated(id, profile_id, &project.diagram, project.diagram_version)
        }
        (ReviewMode::Automated, None) => return Err(ApiError::validation("automated sessions need a profile_id")),
        (ReviewMode::Direct, None) => ReviewSession::direct(id, &project.diagram, project.diagram_version)?,
        (ReviewMode::Direct, Some(_)) => return Err(ApiError::validation("direct sessions take no profile_id")),
        (ReviewMode::Testcases, _) => {
            return Err(ApiError::validation(
                "test cases run through /projects/{id}/testcases/{set}/run",
            ))
        }
    };
    state.store.save_session(&project.id, &session)?;
    state.register(&project.id, session.clone());
    Ok((StatusCode::CREATED, Json(SessionView::new(&project.id, session))))
}

#[derive(Debug, Deserialize)]
pub struct ListQuery {
    pub project_id: String,
}

pub async fn list(State(state): State<AppState>, Query(q): Query<ListQuery>) -> ApiResult<Json<Vec<SessionView>>> {
    let sessions = state.store.list_sessions(&q.project_id)?;
    Ok(Json(
        sessions
            .into_iter()
            .map(|s| SessionView::new(&q.project_id, s))
            .collect(),
    ))
}

/// Current copy of a session with its stale flag refreshed.
pub async fn get(State(state): State<AppState>, Path(sid): Path<String>) -> ApiResult<Json<SessionView>> {
    let entry = state.session(&sid)?;
    let project = state.store.load(&entry.project_id)?;
    let mut session = entry.shared.snapshot().await;
    session.conversation.refresh_staleness(project.diagram_version);
    Ok(Json(SessionView::new(&entry.project_id, session)))
}

pub async fn delete(State(state): State<AppState>, Path(sid): Path<String>) -> ApiResult<StatusCode> {
    let entry = state.session(&sid)?;
    let _guard = entry.shared.try_begin()?;
    state.store.delete_session(&entry.project_id, &sid)?;
    state.forget(&sid);
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Deserialize)]
pub struct BatchQuery {
    #[serde(default = "yes")]
    pub stream: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Serialize)]
pub struct BatchResult {
    pub messages: Vec<Message>,
    pub length: usize,
}

/// Terminal event of a batch stream.
#[derive(Debug, Serialize, Deserialize)]
pub struct Done {
    pub status: String,
    pub length: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

fn bound_profile(project: &Project, session: &ReviewSession) -> ApiResult<StudentProfile> {
    let id = session
        .profile_id
        .as_deref()
        .ok_or_else(|| ApiError::validation("batches run only in automated sessions"))?;
    project
        .profile(id)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("profile {id}")))
}

fn record(entry: &SessionEntry, event: BatchEvent) {
    entry.progress.lock().expect("progress").events.push(event);
}

/// Runs one batch of six messages. Streams `message` events followed by a
/// `done` event; `?stream=false` waits and returns the messages as JSON.
pub async fn batch(
    State(state): State<AppState>,
    Path(sid): Path<String>,
    Query(q): Query<BatchQuery>,
) -> ApiResult<Response> {
    let entry = state.session(&sid)?;
    let mut guard = entry.shared.try_begin()?;
    let project = state.store.load(&entry.project_id)?;
    if let Err(e) = guard.ensure_fresh(project.diagram_version) {
        state.store.save_session(&entry.project_id, &guard)?;
        return Err(e.into());
    }
    if guard.mode != ReviewMode::Automated {
        return Err(ApiError::validation("batches run only in automated sessions"));
    }
    let profile = bound_profile(&project, &guard)?;
    profile.ready_for_simulation(&project.components)?;
    {
        let mut progress = entry.progress.lock().expect("progress");
        *progress = Progress {
            running: true,
            batch: progress.batch + 1,
            events: Vec::new(),
        };
    }

    if !q.stream {
        let (tx, mut rx) = mpsc::unbounded_channel::<BatchEvent>();
        let outcome = generate_batch(&mut guard, &profile, &context(&state, &project), Some(&tx)).await;
        drop(tx);
        while let Some(event) = rx.recv().await {
            record(&entry, event);
        }
        let saved = state.store.save_session(&entry.project_id, &guard);
        entry.progress.lock().expect("progress").running = false;
        let messages = outcome?;
        saved?;
        let length = guard.conversation.len();
        return Ok(Json(BatchResult { messages, length }).into_response());
    }

    let (core_tx, mut core_rx) = mpsc::unbounded_channel::<BatchEvent>();
    let (sse_tx, sse_rx) = mpsc::unbounded_channel::<Event>();
    let task_state = state.clone();
    let task_entry = entry.clone();
    tokio::spawn(async move {
        let forward_entry = task_entry.clone();
        let forward_tx = sse_tx.clone();
        let forwarder = tokio::spawn(async move {
            while let Some(event) = core_rx.recv().await {
                if let BatchEvent::Message { index, message } = &event {
                    let data = serde_json::json!({"index": index, "message": message});
                    let _ = forward_tx.send(Event::default().event("message").data(data.to_string()));
                }
                record(&forward_entry, event);
            }
        });
        let outcome = generate_batch(&mut guard, &profile, &context(&task_state, &project), Some(&core_tx)).await;
        drop(core_tx);
        let _ = forwarder.await;
        let length = guard.conversation.len();
        let saved = task_state.store.save_session(&task_entry.project_id, &guard);
        let done = match (outcome, saved) {
            (Ok(_), Ok(())) => Done {
                status: "completed".into(),
                length,
                error: None,
            },
            (Ok(_), Err(e)) | (Err(e), _) => Done {
                status: "rolled_back".into(),
                length,
                error: Some(e.into()),
            },
        };
        task_entry.progress.lock().expect("progress").running = false;
        drop(guard);
        let data = serde_json::to_string(&done).expect("done event serializes");
        let _ = sse_tx.send(Event::default().event("done").data(data));
    });

    let stream = UnboundedReceiverStream::new(sse_rx).map(Ok::<_, Infallible>);
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()).into_response())
}

#[derive(Debug, Deserialize)]
pub struct EventsQuery {
    #[serde(default)]
    pub after: usize,
}

#[derive(Debug, Serialize)]
pub struct EventsView {
    pub running: bool,
    pub batch: u64,
    /// Number of events recorded so far; pass it back as `after`.
    pub next: usize,
    pub events: Vec<BatchEvent>,
}

/// Polling alternative to the batch stream.
pub async fn events(
    State(state): State<AppState>,
    Path(sid): Path<String>,
    Query(q): Query<EventsQuery>,
) -> ApiResult<Json<EventsView>> {
    let entry = state.session(&sid)?;
    let progress = entry.progress.lock().expect("progress");
    Ok(Json(EventsView {
        running: progress.running,
        batch: progress.batch,
        next: progress.events.len(),
        events: progress.events.iter().skip(q.after).cloned().collect(),
    }))
}

pub async fn regenerate(State(state): State<AppState>, Path(sid): Path<String>) -> ApiResult<Json<SessionView>> {
    let entry = state.session(&sid)?;
    let mut guard = entry.shared.try_begin()?;
    let project = state.store.load(&entry.project_id)?;
    guard.regenerate(&project.diagram, project.diagram_version)?;
    state.store.save_session(&entry.project_id, &guard)?;
    *entry.progress.lock().expect("progress") = Progress::default();
    Ok(Json(SessionView::new(&entry.project_id, guard.clone())))
}

#[derive(Debug, Deserialize)]
pub struct SendMessage {
    pub text: String,
}

#[derive(Debug, Serialize)]
pub struct DirectReply {
    pub index: usize,
    pub reply: Message,
    pub length: usize,
}

pub async fn message(
    State(state): State<AppState>,
    Path(sid): Path<String>,
    Body(req): Body<SendMessage>,
) -> ApiResult<Json<DirectReply>> {
    let entry = state.session(&sid)?;
    let mut guard = entry.shared.try_begin()?;
    let project = state.store.load(&entry.project_id)?;
    if let Err(e) = guard.ensure_fresh(project.diagram_version) {
        state.store.save_session(&entry.project_id, &guard)?;
        return Err(e.into());
    }
    let reply = direct_message(&mut guard, &req.text, &context(&state, &project)).await?;
    state.store.save_session(&entry.project_id, &guard)?;
    let length = guard.conversation.len();
    Ok(Json(DirectReply {
        index: length - 1,
        reply,
        length,
    }))
}

#[derive(Debug, Deserialize)]
pub struct Rollback {
    pub to_index: usize,
}

pub async fn rollback(
    State(state): State<AppState>,
    Path(sid): Path<String>,
    Body(req): Body<Rollback>,
) -> ApiResult<Json<SessionView>> {
    let entry = state.session(&sid)?;
    let mut guard = entry.shared.try_begin()?;
    guard.rollback(req.to_index)?;
    state.store.save_session(&entry.project_id, &guard)?;
    Ok(Json(SessionView::new(&entry.project_id, guard.clone())))
}

#[derive(Debug, Serialize)]
pub struct KnowledgeView {
    pub index: usize,
    pub knowledge: KnowledgeState,
    pub acquired: Vec<usize>,
    /// Components acquired at this message and not at the previous student
    /// message, or not in the profile's starting knowledge for the first one.
    pub newly_acquired: Vec<usize>,
}

pub async fn knowledge(
    State(state): State<AppState>,
    Path((sid, index)): Path<(String, usize)>,
) -> ApiResult<Json<KnowledgeView>> {
    let entry = state.session(&sid)?;
    let session = entry.shared.snapshot().await;
    let conv = &session.conversation;
    let knowledge = knowledge_at(conv, index)?;
    let previous = conv.messages()[..index]
        .iter()
        .rev()
        .find_map(|m| m.knowledge_snapshot.clone())
        .or_else(|| {
            let project = state.store.load(&entry.project_id).ok()?;
            Some(project.profile(session.profile_id.as_deref()?)?.initial_knowledge.clone())
        });
    let newly_acquired = knowledge
        .acquired_indices()
        .into_iter()
        .filter(|&i| previous.as_ref().is_none_or(|p| !p.is_acquired(i)))
        .collect();
    Ok(Json(KnowledgeView {
        index,
        acquired: knowledge.acquired_indices(),
        knowledge,
        newly_acquired,
    }))
}
