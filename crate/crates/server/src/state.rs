use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::Serialize;
use teachbench_core::autochat::{BatchEvent, ReviewSession, SharedSession};
use teachbench_core::gateway::Gateways;
use teachbench_core::store::{Project, Store};
use teachbench_core::student::SimSettings;
use teachbench_core::{Error, Result};

/// Progress of the latest batch on a session, for clients that poll.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Progress {
    pub running: bool,
    pub batch: u64,
    pub events: Vec<BatchEvent>,
}

#[derive(Clone)]
pub struct SessionEntry {
    pub project_id: String,
    pub shared: SharedSession,
    pub progress: Arc<Mutex<Progress>>,
}

pub struct Inner {
    pub store: Store,
    pub gateways: Gateways,
    pub settings: SimSettings,
    pub token: Option<String>,
    pub static_dir: Option<PathBuf>,
    sessions: Mutex<HashMap<String, SessionEntry>>,
    project_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

/// Shared handler state.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl std::ops::Deref for AppState {
    type Target = Inner;

    fn deref(&self) -> &Inner {
        &self.0
    }
}

impl AppState {
    pub fn new(store: Store, gateways: Gateways, settings: SimSettings) -> Self {
        Self(Arc::new(Inner {
            store,
            gateways,
            settings,
            token: None,
            static_dir: None,
            sessions: Mutex::default(),
            project_locks: Mutex::default(),
        }))
    }

    /// Requires `Authorization: Bearer <token>` on every API route.
    pub fn with_token(self, token: Option<String>) -> Self {
        self.rebuild(|inner| inner.token = token)
    }

    /// Serves a built UI bundle for paths no API route claims.
    pub fn with_static_dir(self, dir: Option<PathBuf>) -> Self {
        self.rebuild(|inner| inner.static_dir = dir)
    }

    fn rebuild(self, f: impl FnOnce(&mut Inner)) -> Self {
        let mut inner = Arc::try_unwrap(self.0).unwrap_or_else(|_| panic!("state is configured before it is shared"));
        f(&mut inner);
        Self(Arc::new(inner))
    }

    fn project_lock(&self, project_id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.project_locks
            .lock()
            .expect("project lock table")
            .entry(project_id.to_string())
            .or_default()
            .clone()
    }

    /// Load, change and save a project while holding its write lock.
    pub async fn mutate<R>(&self, project_id: &str, f: impl FnOnce(&mut Project) -> Result<R>) -> Result<(Project, R)> {
        let lock = self.project_lock(project_id);
        let _guard = lock.lock().await;
        let mut project = self.store.load(project_id)?;
        let out = f(&mut project)?;
        self.store.save(&project)?;
        Ok((project, out))
    }

    pub fn register(&self, project_id: &str, session: ReviewSession) -> SessionEntry {
        let entry = SessionEntry {
            project_id: project_id.to_string(),
            shared: SharedSession::new(session.clone()),
            progress: Arc::default(),
        };
        self.sessions
            .lock()
            .expect("session table")
            .insert(session.id, entry.clone());
        entry
    }

    pub fn forget(&self, session_id: &str) {
        self.sessions.lock().expect("session table").remove(session_id);
    }

    /// Finds a session in memory, falling back to the projects on disk.
    pub fn session(&self, session_id: &str) -> Result<SessionEntry> {
        if let Some(entry) = self.sessions.lock().expect("session table").get(session_id) {
            return Ok(entry.clone());
        }
        for project_id in self.store.list_projects()? {
            match self.store.load_session(&project_id, session_id) {
                Ok(session) => {
                    let mut table = self.sessions.lock().expect("session table");
                    if let Some(entry) = table.get(session_id) {
                        return Ok(entry.clone());
                    }
                    let entry = SessionEntry {
                        project_id,
                        shared: SharedSession::new(session),
                        progress: Arc::default(),
                    };
                    table.insert(session_id.to_string(), entry.clone());
                    return Ok(entry);
                }
                Err(Error::NotFound(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(Error::NotFound(format!("session {session_id}")))
    }

    pub fn cached_session(&self, session_id: &str) -> Option<SessionEntry> {
        self.sessions.lock().expect("session table").get(session_id).cloned()
    }

    pub fn forget_project(&self, project_id: &str) {
        self.sessions
            .lock()
            .expect("session table")
            .retain(|_, e| e.project_id != project_id);
    }
}
