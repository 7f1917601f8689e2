//! Plain-file project persistence.
//!
//! ```text
//! <root>/<project-id>/project.json
//! <root>/<project-id>/layout.json
//! <root>/<project-id>/conversations/<session-id>.json
//! <root>/<project-id>/.lock
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::autochat::{ReviewMode, ReviewSession, TestCaseSet};
use crate::error::{Error, Result};
use crate::model::{
    phase_transition_components, validate_components, EvalRecord, KnowledgeComponent, StateDiagram, StudentProfile,
    Topic, SCHEMA_VERSION,
};

pub const PROJECT_FILE: &str = "project.json";
pub const CONVERSATIONS_DIR: &str = "conversations";
pub const LAYOUT_FILE: &str = "layout.json";
const LOCK_FILE: &str = ".lock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub schema: u32,
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub topic: Topic,
    pub components: Vec<KnowledgeComponent>,
    pub diagram: StateDiagram,
    /// Bumped by every change to the diagram or the component list.
    pub diagram_version: u64,
    /// Bumped by every other mutation.
    #[serde(default)]
    pub revision: u64,
    #[serde(default)]
    pub profiles: Vec<StudentProfile>,
    #[serde(default)]
    pub test_case_sets: Vec<TestCaseSet>,
    #[serde(default)]
    pub eval_records: Vec<EvalRecord>,
}

fn check_id(kind: &str, id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !id.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "{kind} id {id:?} must be 1-128 characters of letters, digits, '-', '_' or '.'"
        )))
    }
}

impl Project {
    /// Project with the phase-transition curriculum and starter diagram.
    pub fn starter(id: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            id: id.into(),
            name: name.into(),
            topic: Topic::default(),
            components: phase_transition_components(),
            diagram: StateDiagram::starter(),
            diagram_version: 1,
            revision: 0,
            profiles: Vec::new(),
            test_case_sets: Vec::new(),
            eval_records: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Schema(format!("unsupported version {}", self.schema)));
        }
        check_id("project", &self.id)?;
        validate_components(&self.components)?;
        self.diagram.validate().into_result()?;
        for (i, p) in self.profiles.iter().enumerate() {
            check_id("profile", &p.id)?;
            if self.profiles[..i].iter().any(|q| q.id == p.id) {
                return Err(Error::validation(format!("duplicate profile id {}", p.id)));
            }
            p.validate(&self.components)?;
        }
        for (i, s) in self.test_case_sets.iter().enumerate() {
            check_id("test case set", &s.id)?;
            if self.test_case_sets[..i].iter().any(|t| t.id == s.id) {
                return Err(Error::validation(format!("duplicate test case set id {}", s.id)));
            }
        }
        for r in &self.eval_records {
            self.check_record(r)?;
        }
        Ok(())
    }

    fn check_record(&self, r: &EvalRecord) -> Result<()> {
        if self.profile(&r.profile_id).is_none() {
            return Err(Error::NotFound(format!("profile {} referenced by a record", r.profile_id)));
        }
        r.validate(self.components.len())
    }

    pub fn profile(&self, id: &str) -> Option<&StudentProfile> {
        self.profiles.iter().find(|p| p.id == id)
    }

    pub fn profile_mut(&mut self, id: &str) -> Option<&mut StudentProfile> {
        self.profiles.iter_mut().find(|p| p.id == id)
    }

    pub fn test_case_set(&self, id: &str) -> Option<&TestCaseSet> {
        self.test_case_sets.iter().find(|s| s.id == id)
    }

    /// Replaces the diagram; conversations made against the old one go stale.
    pub fn set_diagram(&mut self, diagram: StateDiagram) -> Result<u64> {
        diagram.validate().into_result()?;
        self.diagram = diagram;
        self.diagram_version += 1;
        Ok(self.diagram_version)
    }

    pub fn set_topic(&mut self, topic: Topic) -> Result<u64> {
        for (name, value) in [
            ("teacher_role", &topic.teacher_role),
            ("learner", &topic.learner),
            ("subject", &topic.subject),
            ("topic", &topic.topic),
        ] {
            if value.trim().is_empty() {
                return Err(Error::validation(format!("topic {name} is empty")));
            }
        }
        self.topic = topic;
        self.diagram_version += 1;
        Ok(self.diagram_version)
    }

    /// Replaces the component list. Profiles must already match its length.
    pub fn set_components(&mut self, components: Vec<KnowledgeComponent>) -> Result<u64> {
        validate_components(&components)?;
        for p in &self.profiles {
            p.validate(&components)?;
        }
        self.components = components;
        self.diagram_version += 1;
        Ok(self.diagram_version)
    }

    pub fn upsert_profile(&mut self, profile: StudentProfile) -> Result<()> {
        check_id("profile", &profile.id)?;
        profile.validate(&self.components)?;
        match self.profile_mut(&profile.id) {
            Some(slot) => *slot = profile,
            None => self.profiles.push(profile),
        }
        self.revision += 1;
        Ok(())
    }

    /// Removes a profile that no record refers to. Session references are
    /// checked by the store.
    pub fn remove_profile(&mut self, id: &str) -> Result<StudentProfile> {
        if self.eval_records.iter().any(|r| r.profile_id == id) {
            return Err(Error::validation(format!("profile {id} has evaluation records")));
        }
        let pos = self
            .profiles
            .iter()
            .position(|p| p.id == id)
            .ok_or_else(|| Error::NotFound(format!("profile {id}")))?;
        self.revision += 1;
        Ok(self.profiles.remove(pos))
    }

    pub fn upsert_test_case_set(&mut self, set: TestCaseSet) -> Result<()> {
        check_id("test case set", &set.id)?;
        match self.test_case_sets.iter_mut().find(|s| s.id == set.id) {
            Some(slot) => *slot = set,
            None => self.test_case_sets.push(set),
        }
        self.revision += 1;
        Ok(())
    }

    pub fn remove_test_case_set(&mut self, id: &str) -> Result<TestCaseSet> {
        let pos = self
            .test_case_sets
            .iter()
            .position(|s| s.id == id)
            .ok_or_else(|| Error::NotFound(format!("test case set {id}")))?;
        self.revision += 1;
        Ok(self.test_case_sets.remove(pos))
    }

    pub fn add_records(&mut self, records: Vec<EvalRecord>) -> Result<()> {
        for r in &records {
            self.check_record(r)?;
        }
        self.eval_records.extend(records);
        self.revision += 1;
        Ok(())
    }
}

fn read_versioned<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(Error::NotFound(path.display().to_string()));
        }
        Err(e) => return Err(e.into()),
    };
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    match value.get("schema").and_then(|v| v.as_u64()) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => return Err(Error::Schema(format!("{}: unsupported version {v}", path.display()))),
        None => return Err(Error::Schema(format!("{}: missing schema version", path.display()))),
    }
    serde_json::from_value(value).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

/// Reads and validates a `project.json`.
pub fn load_project_file(path: &Path) -> Result<Project> {
    let project: Project = read_versioned(path)?;
    project.validate()?;
    Ok(project)
}

/// Where [`Store::save_with_fault`] stops.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    None,
    BeforeRename,
}

fn write_atomic(path: &Path, bytes: &[u8], fault: Fault) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    if fault == Fault::BeforeRename {
        return Err(io::Error::other("simulated crash before rename").into());
    }
    if path.exists() {
        fs::copy(path, path.with_extension("json.bak"))?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Schema(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Held while writing a project; released on drop.
struct ProjectLock(File);

impl ProjectLock {
    fn acquire(dir: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(dir.join(LOCK_FILE))?;
        file.lock()?;
        Ok(Self(file))
    }
}

impl Drop for ProjectLock {
    fn drop(&mut self) {
        let _ = self.0.unlock();
    }
}

/// Directory of projects.
#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn project_dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    fn conversation_path(&self, project_id: &str, session_id: &str) -> PathBuf {
        self.project_dir(project_id)
            .join(CONVERSATIONS_DIR)
            .join(format!("{session_id}.json"))
    }

    pub fn exists(&self, id: &str) -> bool {
        self.project_dir(id).join(PROJECT_FILE).is_file()
    }

    /// Ids of every directory holding a project file, sorted.
    pub fn list_projects(&self) -> Result<Vec<String>> {
        let mut ids: Vec<String> = fs::read_dir(&self.root)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join(PROJECT_FILE).is_file())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        ids.sort();
        Ok(ids)
    }

    pub fn create(&self, project: &Project) -> Result<()> {
        check_id("project", &project.id)?;
        if self.exists(&project.id) {
            return Err(Error::validation(format!("project {} already exists", project.id)));
        }
        self.save(project)
    }

    pub fn load(&self, id: &str) -> Result<Project> {
        check_id("project", id)?;
        let path = self.project_dir(id).join(PROJECT_FILE);
        if !path.is_file() {
            return Err(Error::NotFound(format!("project {id}")));
        }
        load_project_file(&path)
    }

    /// Atomically replaces the project file, keeping the previous one as
    /// `project.json.bak`. Writes to one project are serialized through an
    /// advisory lock; a snapshot whose diagram version is older than the one
    /// on disk is refused.
    pub fn save(&self, project: &Project) -> Result<()> {
        self.save_with_fault(project, Fault::None)
    }

    #[doc(hidden)]
    pub fn save_with_fault(&self, project: &Project, fault: Fault) -> Result<()> {
        project.validate()?;
        let dir = self.project_dir(&project.id);
        fs::create_dir_all(dir.join(CONVERSATIONS_DIR))?;
        let _lock = ProjectLock::acquire(&dir)?;
        let path = dir.join(PROJECT_FILE);
        if path.is_file() {
            if let Ok(on_disk) = read_versioned::<Project>(&path) {
                if on_disk.diagram_version > project.diagram_version {
                    return Err(Error::StaleConversation {
                        conversation: project.diagram_version,
                        current: on_disk.diagram_version,
                    });
                }
            }
        }
        write_atomic(&path, &to_json(project)?, fault)
    }

    pub fn delete(&self, id: &str) -> Result<()> {
        check_id("project", id)?;
        if !self.exists(id) {
            return Err(Error::NotFound(format!("project {id}")));
        }
        fs::remove_dir_all(self.project_dir(id))?;
        Ok(())
    }

    /// Editor node positions. Never touches a version counter.
    pub fn load_layout(&self, project_id: &str) -> Result<serde_json::Value> {
        self.load(project_id)?;
        let path = self.project_dir(project_id).join(LAYOUT_FILE);
        match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(serde_json::json!({})),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save_layout(&self, project_id: &str, layout: &serde_json::Value) -> Result<()> {
        self.load(project_id)?;
        if !layout.is_object() {
            return Err(Error::validation("layout must be a JSON object"));
        }
        let dir = self.project_dir(project_id);
        let _lock = ProjectLock::acquire(&dir)?;
        write_atomic(&dir.join(LAYOUT_FILE), &to_json(layout)?, Fault::None)
    }

    pub fn save_session(&self, project_id: &str, session: &ReviewSession) -> Result<()> {
        check_id("session", &session.id)?;
        session.validate()?;
        let project = self.load(project_id)?;
        if let Some(pid) = &session.profile_id {
            if project.profile(pid).is_none() {
                return Err(Error::NotFound(format!("profile {pid}")));
            }
        }
        let dir = self.project_dir(project_id);
        let _lock = ProjectLock::acquire(&dir)?;
        write_atomic(&self.conversation_path(project_id, &session.id), &to_json(session)?, Fault::None)
    }

    pub fn load_session(&self, project_id: &str, session_id: &str) -> Result<ReviewSession> {
        check_id("session", session_id)?;
        let path = self.conversation_path(project_id, session_id);
        if !path.is_file() {
            return Err(Error::NotFound(format!("session {session_id}")));
        }
        read_versioned(&path)
    }

    pub fn list_sessions(&self, project_id: &str) -> Result<Vec<ReviewSession>> {
        let dir = self.project_dir(project_id).join(CONVERSATIONS_DIR);
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths.iter().map(|p| read_versioned(p)).collect()
    }

    pub fn delete_session(&self, project_id: &str, session_id: &str) -> Result<()> {
        check_id("session", session_id)?;
        let path = self.conversation_path(project_id, session_id);
        if !path.is_file() {
            return Err(Error::NotFound(format!("session {session_id}")));
        }
        fs::remove_file(path)?;
        Ok(())
    }

    /// Removes a profile unless an automated session still uses it.
    pub fn remove_profile(&self, project: &mut Project, profile_id: &str) -> Result<StudentProfile> {
        let used = self
            .list_sessions(&project.id)?
            .iter()
            .any(|s| s.mode == ReviewMode::Automated && s.profile_id.as_deref() == Some(profile_id));
        if used {
            return Err(Error::validation(format!("profile {profile_id} is used by a session")));
        }
        project.remove_profile(profile_id)
    }

    /// Zips the project directory: `project.json` and `conversations/`.
    pub fn export_zip(&self, project_id: &str, out: &Path) -> Result<()> {
        self.load(project_id)?;
        let dir = self.project_dir(project_id);
        let mut zip = zip::ZipWriter::new(File::create(out)?);
        let options = zip::write::SimpleFileOptions::default();
        let mut files = vec![PROJECT_FILE.to_string()];
        if dir.join(LAYOUT_FILE).is_file() {
            files.push(LAYOUT_FILE.to_string());
        }
        let conversations = dir.join(CONVERSATIONS_DIR);
        if conversations.is_dir() {
            let mut names: Vec<String> = fs::read_dir(&conversations)?
                .filter_map(|e| e.ok())
                .filter_map(|e| e.file_name().into_string().ok())
                .filter(|n| n.ends_with(".json"))
                .map(|n| format!("{CONVERSATIONS_DIR}/{n}"))
                .collect();
            names.sort();
            files.extend(names);
        }
        for name in files {
            zip.start_file(name.as_str(), options).map_err(zip_error)?;
            zip.write_all(&fs::read(dir.join(&name))?)?;
        }
        zip.finish().map_err(zip_error)?;
        Ok(())
    }

    /// Unpacks an exported project. The archive is validated before it
    /// becomes visible; an existing project with the same id is refused.
    pub fn import_zip(&self, archive: &Path) -> Result<String> {
        let mut zip = zip::ZipArchive::new(File::open(archive)?).map_err(zip_error)?;
        let staging = tempdir_in(&self.root)?;
        for i in 0..zip.len() {
            let mut entry = zip.by_index(i).map_err(zip_error)?;
            let Some(rel) = entry.enclosed_name() else {
                return Err(Error::Schema(format!("unsafe path {:?} in archive", entry.name())));
            };
            let target = staging.path.join(rel);
            if entry.is_dir() {
                fs::create_dir_all(&target)?;
                continue;
            }
            if let Some(parent) = target.parent() {
                fs::create_dir_all(parent)?;
            }
            let mut bytes = Vec::new();
            entry.read_to_end(&mut bytes)?;
            fs::write(target, bytes)?;
        }
        let project = load_project_file(&staging.path.join(PROJECT_FILE))?;
        let conversations = staging.path.join(CONVERSATIONS_DIR);
        if conversations.is_dir() {
            for e in fs::read_dir(&conversations)? {
                read_versioned::<ReviewSession>(&e?.path())?;
            }
        } else {
            fs::create_dir_all(&conversations)?;
        }
        if self.exists(&project.id) {
            return Err(Error::validation(format!("project {} already exists", project.id)));
        }
        let dest = self.project_dir(&project.id);
        fs::rename(&staging.path, &dest)?;
        staging.keep();
        Ok(project.id)
    }
}

fn zip_error(e: zip::result::ZipError) -> Error {
    match e {
        zip::result::ZipError::Io(io) => Error::Io(io),
        other => Error::Schema(format!("archive: {other}")),
    }
}

/// Staging directory removed on drop unless kept.
struct Staging {
    path: PathBuf,
    keep: bool,
}

impl Staging {
    fn keep(mut self) {
        self.keep = true;
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.keep {
            let _ = fs::remove_dir_all(&self.path);
        }
    }
}

fn tempdir_in(root: &Path) -> Result<Staging> {
    let path = root.join(format!(".import-{}", uuid::Uuid::new_v4().simple()));
    fs::create_dir_all(&path)?;
    Ok(Staging { path, keep: false })
}
