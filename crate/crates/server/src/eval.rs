use axum::extract::{Path, State};
use axum::Json;
use serde::{Deserialize, Serialize};
use teachbench_core::eval::{run_interview, run_lesson, BiasReport, DialogueScript, Transcript};
use teachbench_core::sampler::{materialize, sample_grid, LevelVector, GRID_SIZE};
use teachbench_core::{phase_transition_components, EvalRecord, Pipeline, StudentProfile};

use crate::error::{ApiError, ApiResult, Body};
use crate::state::AppState;

#[derive(Debug, Deserialize)]
pub struct SampleRequest {
    pub k: usize,
    #[serde(default)]
    pub seed: Option<LevelVector>,
    #[serde(default)]
    pub pipeline: Pipeline,
    /// Takes the component list from this project.
    #[serde(default)]
    pub project_id: Option<String>,
    /// Also adds the sampled profiles to the project.
    #[serde(default)]
    pub save: bool,
}

#[derive(Debug, Serialize)]
pub struct SampleResponse {
    pub grid_size: usize,
    pub k: usize,
    pub seed: LevelVector,
    pub levels: Vec<LevelVector>,
    pub profiles: Vec<StudentProfile>,
}

pub async fn sample(State(state): State<AppState>, Body(req): Body<SampleRequest>) -> ApiResult<Json<SampleResponse>> {
    if req.save && req.project_id.is_none() {
        return Err(ApiError::validation("save needs a project_id"));
    }
    let seed = match req.seed {
        Some(seed) => seed,
        None => LevelVector::new([0; 5])?,
    };
    let components = match &req.project_id {
        Some(pid) => state.store.load(pid)?.components,
        None => phase_transition_components(),
    };
    let levels = sample_grid(req.k, seed)?;
    let profiles = levels
        .iter()
        .enumerate()
        .map(|(i, v)| materialize(*v, format!("P{}", i + 1), v.code(), &components, req.pipeline))
        .collect::<teachbench_core::Result<Vec<_>>>()?;
    if let (true, Some(pid)) = (req.save, &req.project_id) {
        let to_save = profiles.clone();
        state
            .mutate(pid, |p| to_save.into_iter().try_for_each(|profile| p.upsert_profile(profile)))
            .await?;
    }
    Ok(Json(SampleResponse {
        grid_size: GRID_SIZE,
        k: req.k,
        seed,
        levels,
        profiles,
    }))
}

#[derive(Debug, Deserialize)]
pub struct DialogueRequest {
    pub profile_id: String,
    #[serde(default)]
    pub script: Option<DialogueScript>,
}

pub async fn interview(
    State(state): State<AppState>,
    Path(pid): Path<String>,
    Body(req): Body<DialogueRequest>,
) -> ApiResult<Json<Transcript>> {
    let project = state.store.load(&pid)?;
    let profile = project
        .profile(&req.profile_id)
        .ok_or_else(|| ApiError::not_found(format!("profile {}", req.profile_id)))?;
    let script = req.script.unwrap_or_else(DialogueScript::default_interview);
    let t = run_interview(
        profile,
        &script,
        &project.topic,
        &project.components,
        &state.gateways.student,
        &state.settings,
    )
    .await?;
    Ok(Json(t))
}

pub async fn lesson(
    State(state): State<AppState>,
    Path(pid): Path<String>,
    Body(req): Body<DialogueRequest>,
) -> ApiResult<Json<Transcript>> {
    let project = state.store.load(&pid)?;
    let profile = project
        .profile(&req.profile_id)
        .ok_or_else(|| ApiError::not_found(format!("profile {}", req.profile_id)))?;
    let script = req.script.unwrap_or_else(DialogueScript::default_lesson);
    let t = run_lesson(
        profile,
        &script,
        &project.topic,
        &project.components,
        &state.gateways,
        &state.settings,
    )
    .await?;
    Ok(Json(t))
}

/// Either a stored project's profiles and records, or both given inline.
#[derive(Debug, Deserialize)]
pub struct ReportRequest {
    #[serde(default)]
    pub project_id: Option<String>,
    #[serde(default)]
    pub profiles: Option<Vec<StudentProfile>>,
    #[serde(default)]
    pub records: Option<Vec<EvalRecord>>,
}

#[derive(Debug, Serialize)]
pub struct ReportResponse {
    pub report: BiasReport,
    pub markdown: String,
}

pub async fn report(State(state): State<AppState>, Body(req): Body<ReportRequest>) -> ApiResult<Json<ReportResponse>> {
    let (profiles, records) = match req {
        ReportRequest {
            project_id: Some(pid),
            profiles: None,
            records: None,
        } => {
            let p = state.store.load(&pid)?;
            (p.profiles, p.eval_records)
        }
        ReportRequest {
            project_id: None,
            profiles: Some(profiles),
            records: Some(records),
        } => (profiles, records),
        _ => return Err(ApiError::validation("give either project_id, or both profiles and records")),
    };
    let report = BiasReport::build(&profiles, &records)?;
    Ok(Json(ReportResponse {
        markdown: report.to_markdown(),
        report,
    }))
}
