use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use teachbench_core::autochat::{run_test_cases, ChatContext, TestCaseResult, TestCaseSet};
use teachbench_core::store::Project;
use teachbench_core::student::StudentSimulator;
use teachbench_core::{EvalRecord, KnowledgeComponent, NodeId, StateDiagram, StudentProfile, Topic, TraitOverview};

use crate::error::{ApiError, ApiResult, Body};
use crate::state::AppState;

#[derive(Debug, Serialize)]
pub struct ProjectSummary {
    pub id: String,
    pub name: String,
    pub diagram_version: u64,
    pub revision: u64,
    pub profiles: usize,
}

pub async fn list(State(state): State<AppState>) -> ApiResult<Json<Vec<ProjectSummary>>> {
    let mut out = Vec::new();
    for id in state.store.list_projects()? {
        let p = state.store.load(&id)?;
        out.push(ProjectSummary {
            id: p.id,
            name: p.name,
            diagram_version: p.diagram_version,
            revision: p.revision,
            profiles: p.profiles.len(),
        });
    }
    Ok(Json(out))
}

#[derive(Debug, Deserialize)]
pub struct CreateProject {
    #[serde(default)]
    pub id: Option<String>,
    pub name: String,
}

pub async fn create(
    State(state): State<AppState>,
    Body(req): Body<CreateProject>,
) -> ApiResult<(StatusCode, Json<Project>)> {
    let id = req.id.unwrap_or_else(|| uuid::Uuid::new_v4().simple().to_string());
    let project = Project::starter(id, req.name);
    state.store.create(&project)?;
    Ok((StatusCode::CREATED, Json(project)))
}

pub async fn get(State(state): State<AppState>, Path(pid): Path<String>) -> ApiResult<Json<Project>> {
    Ok(Json(state.store.load(&pid)?))
}

pub async fn delete(State(state): State<AppState>, Path(pid): Path<String>) -> ApiResult<StatusCode> {
    state.mutate(&pid, |_| Ok(())).await?;
    state.store.delete(&pid)?;
    state.forget_project(&pid);
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Serialize)]
pub struct DiagramView {
    pub diagram: StateDiagram,
    pub diagram_version: u64,
    pub warnings: Vec<String>,
}

pub async fn get_diagram(State(state): State<AppState>, Path(pid): Path<String>) -> ApiResult<Json<DiagramView>> {
    let p = state.store.load(&pid)?;
    Ok(Json(DiagramView {
        warnings: p.diagram.validate().warnings,
        diagram: p.diagram,
        diagram_version: p.diagram_version,
    }))
}

#[derive(Debug, Serialize)]
pub struct VersionBump {
    pub diagram_version: u64,
    pub warnings: Vec<String>,
    pub stale_sessions: usize,
}

/// Flags every stored conversation of the project that predates `version`.
/// A session busy with a batch is checked again before its next use.
async fn mark_stale(state: &AppState, project_id: &str, version: u64) -> ApiResult<usize> {
    let mut count = 0;
    for stored in state.store.list_sessions(project_id)? {
        let session = match state.cached_session(&stored.id) {
            Some(entry) => match entry.shared.try_begin() {
                Ok(mut guard) => {
                    guard.conversation.refresh_staleness(version);
                    guard.clone()
                }
                Err(_) => continue,
            },
            None => {
                let mut s = stored;
                s.conversation.refresh_staleness(version);
                s
            }
        };
        if session.conversation.stale {
            state.store.save_session(project_id, &session)?;
            count += 1;
        }
    }
    Ok(count)
}

#[derive(Debug, Deserialize)]
pub struct PutDiagram {
    pub diagram: StateDiagram,
}

pub async fn put_diagram(
    State(state): State<AppState>,
    Path(pid): Path<String>,
    Body(req): Body<PutDiagram>,
) -> ApiResult<Json<VersionBump>> {
    let (project, version) = state.mutate(&pid, |p| p.set_diagram(req.diagram)).await?;
    let stale_sessions = mark_stale(&state, &pid, version).await?;
    Ok(Json(VersionBump {
        diagram_version: version,
        warnings: project.diagram.validate().warnings,
        stale_sessions,
    }))
}

#[derive(Debug, Deserialize)]
pub struct PutComponents {
    pub components: Vec<String>,
}

pub async fn put_components(
    State(state): State<AppState>,
    Path(pid): Path<String>,
    Body(req): Body<PutComponents>,
) -> ApiResult<Json<VersionBump>> {
    let components = KnowledgeComponent::list(&req.components);
    let (_, version) = state.mutate(&pid, |p| p.set_components(components)).await?;
    let stale_sessions = mark_stale(&state, &pid, version).await?;
    Ok(Json(VersionBump {
        diagram_version: version,
        warnings: Vec::new(),
        stale_sessions,
    }))
}

pub async fn put_topic(
    State(state): State<AppState>,
    Path(pid): Path<String>,
    Body(topic): Body<Topic>,
) -> ApiResult<Json<VersionBump>> {
    let (_, version) = state.mutate(&pid, |p| p.set_topic(topic)).await?;
    let stale_sessions = mark_stale(&state, &pid, version).await?;
    Ok(Json(VersionBump {
        diagram_version: version,
        warnings: Vec::new(),
        stale_sessions,
    }))
}

pub async fn get_layout(State(state): State<AppState>, Path(pid): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(state.store.load_layout(&pid)?))
}

pub async fn put_layout(
    State(state): State<AppState>,
    Path(pid): Path<String>,
    Body(layout): Body<Value>,
) -> ApiResult<Json<Value>> {
    state.store.save_layout(&pid, &layout)?;
    Ok(Json(layout))
}

pub async fn list_profiles(
    State(state): State<AppState>,
    Path(pid): Path<String>,
) -> ApiResult<Json<Vec<StudentProfile>>> {
    Ok(Json(state.store.load(&pid)?.profiles))
}

pub async fn create_profile(
    State(state): State<AppState>,
    Path(pid): Path<String>,
    Body(mut profile): Body<StudentProfile>,
) -> ApiResult<(StatusCode, Json<StudentProfile>)> {
    if profile.id.is_empty() {
        profile.id = uuid::Uuid::new_v4().simple().to_string();
    }
    let created = profile.clone();
    state
        .mutate(&pid, |p| {
            if p.profile(&profile.id).is_some() {
                return Err(teachbench_core::Error::Validation(format!("profile {} already exists", profile.id)));
            }
            p.upsert_profile(profile)
        })
        .await?;
    Ok((StatusCode::CREATED, Json(created)))
}

pub async fn get_profile(
    State(state): State<AppState>,
    Path((pid, prid)): Path<(String, String)>,
) -> ApiResult<Json<StudentProfile>> {
    let project = state.store.load(&pid)?;
    project
        .profile(&prid)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("profile {prid}")))
}

pub async fn put_profile(
    State(state): State<AppState>,
    Path((pid, prid)): Path<(String, String)>,
    Body(mut profile): Body<StudentProfile>,
) -> ApiResult<Json<StudentProfile>> {
    profile.id = prid;
    let saved = profile.clone();
    state.mutate(&pid, |p| p.upsert_profile(profile)).await?;
    Ok(Json(saved))
}

pub async fn delete_profile(
    State(state): State<AppState>,
    Path((pid, prid)): Path<(String, String)>,
) -> ApiResult<StatusCode> {
    let store = state.store.clone();
    state.mutate(&pid, |p| store.remove_profile(p, &prid)).await?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Serialize)]
pub struct OverviewView {
    pub text: String,
    pub edited: bool,
    pub outdated: bool,
}

impl OverviewView {
    fn of(profile: &StudentProfile) -> Self {
        let o = profile.trait_overview.as_ref();
        Self {
            text: profile.overview_text().to_string(),
            edited: o.is_some_and(|o| o.edited),
            outdated: o.is_some_and(|o| o.is_outdated(&profile.ratings)),
        }
    }
}

/// Runs interpret on the profile's current ratings.
pub async fn generate_overview(
    State(state): State<AppState>,
    Path((pid, prid)): Path<(String, String)>,
) -> ApiResult<Json<OverviewView>> {
    let project = state.store.load(&pid)?;
    let profile = project
        .profile(&prid)
        .ok_or_else(|| ApiError::not_found(format!("profile {prid}")))?;
    let sim = StudentSimulator::new(&project.topic, &project.components, &state.gateways.student, &state.settings);
    let overview: TraitOverview = sim.interpret(&profile.ratings).await?;
    let (project, _) = state
        .mutate(&pid, |p| {
            let target = p
                .profile_mut(&prid)
                .ok_or_else(|| teachbench_core::Error::NotFound(format!("profile {prid}")))?;
            let mut updated = target.clone();
            updated.trait_overview = Some(overview);
            p.upsert_profile(updated)
        })
        .await?;
    Ok(Json(OverviewView::of(project.profile(&prid).expect("profile just saved"))))
}

#[derive(Debug, Deserialize)]
pub struct EditOverview {
    pub text: String,
}

pub async fn edit_overview(
    State(state): State<AppState>,
    Path((pid, prid)): Path<(String, String)>,
    Body(req): Body<EditOverview>,
) -> ApiResult<Json<OverviewView>> {
    if req.text.trim().is_empty() {
        return Err(ApiError::validation("overview text is empty"));
    }
    let (project, _) = state
        .mutate(&pid, |p| {
            let mut updated = p
                .profile(&prid)
                .cloned()
                .ok_or_else(|| teachbench_core::Error::NotFound(format!("profile {prid}")))?;
            updated.edit_overview(req.text);
            p.upsert_profile(updated)
        })
        .await?;
    Ok(Json(OverviewView::of(project.profile(&prid).expect("profile just saved"))))
}

pub async fn list_test_cases(
    State(state): State<AppState>,
    Path(pid): Path<String>,
) -> ApiResult<Json<Vec<TestCaseSet>>> {
    Ok(Json(state.store.load(&pid)?.test_case_sets))
}

#[derive(Debug, Deserialize)]
pub struct PutTestCases {
    #[serde(default)]
    pub name: String,
    pub cases: Vec<String>,
}

pub async fn put_test_cases(
    State(state): State<AppState>,
    Path((pid, set_id)): Path<(String, String)>,
    Body(req): Body<PutTestCases>,
) -> ApiResult<Json<TestCaseSet>> {
    let set = TestCaseSet {
        id: set_id,
        name: req.name,
        cases: req.cases,
    };
    let saved = set.clone();
    state.mutate(&pid, |p| p.upsert_test_case_set(set)).await?;
    Ok(Json(saved))
}

pub async fn delete_test_cases(
    State(state): State<AppState>,
    Path((pid, set_id)): Path<(String, String)>,
) -> ApiResult<StatusCode> {
    state.mutate(&pid, |p| p.remove_test_case_set(&set_id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Default, Deserialize)]
pub struct RunTestCases {
    #[serde(default)]
    pub start_node: Option<NodeId>,
}

#[derive(Debug, Serialize)]
pub struct TestCaseRun {
    pub set_id: String,
    pub diagram_version: u64,
    pub results: Vec<TestCaseResult>,
}

pub async fn run_test_case_set(
    State(state): State<AppState>,
    Path((pid, set_id)): Path<(String, String)>,
    body: axum::body::Bytes,
) -> ApiResult<Json<TestCaseRun>> {
    let req: RunTestCases = if body.iter().all(u8::is_ascii_whitespace) {
        RunTestCases::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::new("schema_error", e.to_string()))?
    };
    let project = state.store.load(&pid)?;
    let set = project
        .test_case_set(&set_id)
        .ok_or_else(|| ApiError::not_found(format!("test case set {set_id}")))?;
    let ctx = ChatContext {
        diagram: &project.diagram,
        diagram_version: project.diagram_version,
        topic: &project.topic,
        components: &project.components,
        gateways: &state.gateways,
        settings: &state.settings,
    };
    let results = run_test_cases(&set.cases, &ctx, req.start_node.as_ref()).await?;
    Ok(Json(TestCaseRun {
        set_id,
        diagram_version: project.diagram_version,
        results,
    }))
}

pub async fn list_records(
    State(state): State<AppState>,
    Path(pid): Path<String>,
) -> ApiResult<Json<Vec<EvalRecord>>> {
    Ok(Json(state.store.load(&pid)?.eval_records))
}

#[derive(Debug, Deserialize)]
pub struct AddRecords {
    pub records: Vec<EvalRecord>,
}

pub async fn add_records(
    State(state): State<AppState>,
    Path(pid): Path<String>,
    Body(req): Body<AddRecords>,
) -> ApiResult<Json<Value>> {
    let added = req.records.len();
    let (project, _) = state.mutate(&pid, |p| p.add_records(req.records)).await?;
    Ok(Json(json!({"added": added, "total": project.eval_records.len()})))
}
