use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use teachbench_core::autochat::{generate_batch, ChatContext, ReviewSession};
use teachbench_core::eval::{load_records, run_interview, run_lesson, BiasReport, DialogueScript, Transcript};
use teachbench_core::gateway::{Gateway, Gateways, ProviderConfig, Script, TraceLog};
use teachbench_core::sampler::{enumerate_grid, materialize, sample_grid, LevelVector, GRID_SIZE};
use teachbench_core::store::{load_project_file, Project, Store, PROJECT_FILE};
use teachbench_core::student::StudentSimulator;
use teachbench_core::{Conversation, Error, Pipeline, Role, StudentProfile};
use teachbench_server::{ServerConfig, TOKEN_ENV};

use crate::config::Config;
use crate::CliError;

const DEMO_SCRIPT: &str = include_str!("../../../fixtures/demo_script.json");

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Schema(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn out_dir(config: &Config) -> Result<&Path, CliError> {
    std::fs::create_dir_all(&config.out)?;
    Ok(&config.out)
}

fn gateways(config: &Config) -> Result<Gateways, CliError> {
    let gateway = match &config.provider {
        Some(path) => {
            let cfg = ProviderConfig::load(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            Gateway::from_config(&cfg).map_err(|e| CliError::Config(e.to_string()))?
        }
        None => Gateway::scripted(Script::parse(DEMO_SCRIPT).expect("bundled demo script parses")),
    };
    let gateway = if config.trace {
        let log = TraceLog::with_file(&out_dir(config)?.join("trace.jsonl"))?;
        gateway.with_trace(Arc::new(log))
    } else {
        gateway
    };
    Ok(Gateways::shared(gateway))
}

fn load_project(config: &Config) -> Result<Project, CliError> {
    match &config.project {
        Some(path) if path.is_dir() => Ok(load_project_file(&path.join(PROJECT_FILE))?),
        Some(path) => Ok(load_project_file(path)?),
        None => Ok(Project::starter("starter", "Starter")),
    }
}

fn load_profiles(path: &Path) -> Result<Vec<StudentProfile>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.display().to_string()),
        _ => e.into(),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())).into())
}

fn find_profile(project: &Project, id: &str, extra: Option<&Path>) -> Result<StudentProfile, CliError> {
    if let Some(p) = project.profile(id) {
        return Ok(p.clone());
    }
    if let Some(path) = extra {
        if let Some(p) = load_profiles(path)?.into_iter().find(|p| p.id == id) {
            p.validate(&project.components)?;
            return Ok(p);
        }
    }
    Err(Error::NotFound(format!("profile {id}")).into())
}

pub async fn serve(config: &Config, bind: SocketAddr, static_dir: Option<PathBuf>) -> Result<(), CliError> {
    let server = ServerConfig {
        bind,
        store_root: config.store.clone(),
        gateways: gateways(config)?,
        settings: config.sim.clone(),
        token: std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty()),
        static_dir,
    };
    teachbench_server::serve(server, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}

pub fn init(config: &Config, id: &str, name: Option<String>, profiles: Option<&Path>) -> Result<(), CliError> {
    let store = Store::open(&config.store)?;
    let mut project = Project::starter(id, name.unwrap_or_else(|| id.to_string()));
    if let Some(path) = profiles {
        for p in load_profiles(path)? {
            project.upsert_profile(p)?;
        }
    }
    store.create(&project)?;
    println!("{}", store.project_dir(id).display());
    Ok(())
}

/// `--seed` is a grid index or five comma-separated levels.
fn parse_seed(seed: &str) -> Result<LevelVector, CliError> {
    if seed.contains(',') {
        let levels: Vec<u8> = seed
            .split(',')
            .map(|s| s.trim().parse::<u8>())
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::Config(format!("seed {seed:?} is not a list of levels")))?;
        let levels: [u8; 5] = levels
            .try_into()
            .map_err(|_| CliError::Config(format!("seed {seed:?} needs five levels")))?;
        return Ok(LevelVector::new(levels)?);
    }
    let index: usize = seed
        .parse()
        .map_err(|_| CliError::Config(format!("seed {seed:?} is neither a grid index nor a level list")))?;
    enumerate_grid()
        .get(index)
        .copied()
        .ok_or_else(|| Error::OutOfRange(format!("seed index {index} exceeds the {GRID_SIZE}-point grid")).into())
}

pub fn sample(config: &Config, k: usize, seed: &str, pipeline: Pipeline) -> Result<(), CliError> {
    let seed = parse_seed(seed)?;
    let project = load_project(config)?;
    let levels = sample_grid(k, seed)?;
    let profiles = levels
        .iter()
        .enumerate()
        .map(|(i, v)| materialize(*v, format!("P{}", i + 1), v.code(), &project.components, pipeline))
        .collect::<Result<Vec<_>, _>>()?;
    let path = out_dir(config)?.join("profiles.json");
    write_json(&path, &profiles)?;
    println!("grid {GRID_SIZE}, k {k}, seed {}", seed.code());
    for (p, v) in profiles.iter().zip(&levels) {
        println!("{}  {}", p.id, v.code());
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn render_session(conversation: &Conversation) -> String {
    let mut out = String::new();
    for m in conversation.messages() {
        match m.role {
            Role::Pca => {
                let node = m.active_node_id.as_ref().map(|n| n.as_str()).unwrap_or("-");
                out.push_str(&format!("Agent [{node}]: {}\n", m.text));
            }
            Role::Student => {
                let known = m
                    .knowledge_snapshot
                    .as_ref()
                    .map(|k| k.acquired_indices().iter().map(|i| i.to_string()).collect::<Vec<_>>().join(","))
                    .unwrap_or_default();
                out.push_str(&format!("Student [knows {known}]: {}\n", m.text));
            }
        }
    }
    out
}

async fn with_overview(
    project: &Project,
    profile: &mut StudentProfile,
    gateways: &Gateways,
    config: &Config,
) -> Result<(), CliError> {
    if profile.pipeline == Pipeline::Ours {
        StudentSimulator::new(&project.topic, &project.components, &gateways.student, &config.sim)
            .ensure_overview(profile, false)
            .await?;
    }
    Ok(())
}

pub async fn autochat(config: &Config, profile_id: &str, profiles: Option<&Path>) -> Result<(), CliError> {
    let project = load_project(config)?;
    let mut profile = find_profile(&project, profile_id, profiles)?;
    let gateways = gateways(config)?;
    with_overview(&project, &mut profile, &gateways, config).await?;
    let ctx = ChatContext {
        diagram: &project.diagram,
        diagram_version: project.diagram_version,
        topic: &project.topic,
        components: &project.components,
        gateways: &gateways,
        settings: &config.sim,
    };
    let mut session = ReviewSession::automated(
        format!("autochat-{}", profile.id),
        profile.id.clone(),
        &project.diagram,
        project.diagram_version,
    );
    let out = out_dir(config)?;
    let base = out.join(format!("autochat-{}", profile.id));
    let mut failure = None;
    for _ in 0..config.batches {
        if let Err(e) = generate_batch(&mut session, &profile, &ctx, None).await {
            failure = Some(e);
            break;
        }
    }
    write_json(&base.with_extension("json"), &session)?;
    std::fs::write(base.with_extension("txt"), render_session(&session.conversation))?;
    write_json(&out.join(format!("profile-{}.json", profile.id)), &profile)?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    println!(
        "{} messages over {} batch(es); wrote {}",
        session.conversation.len(),
        config.batches,
        base.with_extension("json").display()
    );
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub enum Kind {
    Interview,
    Lesson,
}

pub async fn dialogue(
    config: &Config,
    kind: Kind,
    profile_id: &str,
    profiles: Option<&Path>,
    script: Option<&Path>,
) -> Result<(), CliError> {
    let project = load_project(config)?;
    let mut profile = find_profile(&project, profile_id, profiles)?;
    let gateways = gateways(config)?;
    with_overview(&project, &mut profile, &gateways, config).await?;
    let script = match (script, kind) {
        (Some(path), _) => DialogueScript::load(path)?,
        (None, Kind::Interview) => DialogueScript::default_interview(),
        (None, Kind::Lesson) => DialogueScript::default_lesson(),
    };
    let (name, transcript): (&str, Transcript) = match kind {
        Kind::Interview => (
            "interview",
            run_interview(&profile, &script, &project.topic, &project.components, &gateways.student, &config.sim)
                .await?,
        ),
        Kind::Lesson => (
            "lesson",
            run_lesson(&profile, &script, &project.topic, &project.components, &gateways, &config.sim).await?,
        ),
    };
    let base = out_dir(config)?.join(format!("{name}-{}", profile.id));
    write_json(&base.with_extension("json"), &transcript)?;
    std::fs::write(base.with_extension("txt"), transcript.render())?;
    if let Some(abort) = &transcript.aborted {
        return Err(CliError::Core(match abort.code.as_str() {
            "provider_error" => Error::Gateway(teachbench_core::gateway::GatewayError::Transport(abort.message.clone())),
            _ => Error::Validation(abort.message.clone()),
        }));
    }
    println!("{} messages; wrote {}", transcript.conversation.len(), base.with_extension("json").display());
    Ok(())
}

pub fn report(config: &Config, records: &Path, profiles: Option<&Path>) -> Result<(), CliError> {
    let profiles = match (profiles, &config.project) {
        (Some(path), _) => load_profiles(path)?,
        (None, Some(_)) => load_project(config)?.profiles,
        (None, None) => return Err(CliError::Config("report needs --profiles or --project".into())),
    };
    let records = load_records(records)?;
    let report = BiasReport::build(&profiles, &records)?;
    let out = out_dir(config)?;
    report.write(out)?;
    print!("{}", report.to_markdown());
    Ok(())
}

pub fn export(config: &Config, id: &str) -> Result<(), CliError> {
    let store = Store::open(&config.store)?;
    let path = out_dir(config)?.join(format!("{id}.zip"));
    store.export_zip(id, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn import(config: &Config, archive: &Path) -> Result<(), CliError> {
    let store = Store::open(&config.store)?;
    let id = store.import_zip(archive)?;
    println!("imported {id}");
    Ok(())
}
