use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex as StdMutex, OnceLock, RwLock};

use annoloop::active::SessionState;
use annoloop::corpus::{load_session, save_session};
use annoloop::featurize::FeatureCooc;
use annoloop::npex::NounPhrase;
use tokio::sync::{Mutex, MutexGuard};

use crate::config::ServiceConfig;
use crate::error::{ApiError, ApiResult};

pub struct AppState {
    pub config: ServiceConfig,
    sessions: RwLock<BTreeMap<String, Arc<SessionHandle>>>,
    next_id: AtomicU64,
}

pub struct SessionHandle {
    pub id: String,
    pub state: Mutex<SessionState>,
    /// Set while a retrain job owns the session.
    pub training: AtomicBool,
    pub last_error: StdMutex<Option<String>>,
    /// Candidate phrases and features, computed on first use.
    pub candidates: OnceLock<Arc<(Vec<NounPhrase>, Vec<FeatureCooc>)>>,
}

/// Clears the training flag when dropped.
pub struct TrainingGuard(pub Arc<SessionHandle>);

impl Drop for TrainingGuard {
    fn drop(&mut self) {
        self.0.training.store(false, Ordering::Release);
    }
}

impl SessionHandle {
    fn new(id: String, state: SessionState) -> Self {
        SessionHandle {
            id,
            state: Mutex::new(state),
            training: AtomicBool::new(false),
            last_error: StdMutex::new(None),
            candidates: OnceLock::new(),
        }
    }

    pub fn is_training(&self) -> bool {
        self.training.load(Ordering::Acquire)
    }

    /// Locks the session for a mutation, refusing while a retrain runs or
    /// when `revision` is stale.
    pub async fn lock_for_mutation(&self, revision: Option<u64>) -> ApiResult<MutexGuard<'_, SessionState>> {
        let guard = self.state.lock().await;
        if self.is_training() {
            return Err(ApiError::conflict("session is retraining; retry when training is false"));
        }
        if let Some(r) = revision {
            if r != guard.revision {
                return Err(ApiError::conflict(format!(
                    "stale revision {r}; current revision is {}",
                    guard.revision
                )));
            }
        }
        Ok(guard)
    }

    /// Marks the session as training. Must be called with the state locked.
    pub fn begin_training(self: &Arc<Self>) -> ApiResult<TrainingGuard> {
        if self.training.swap(true, Ordering::AcqRel) {
            return Err(ApiError::conflict("a retrain job is already running"));
        }
        Ok(TrainingGuard(self.clone()))
    }

    pub fn set_last_error(&self, error: Option<String>) {
        *self.last_error.lock().expect("last_error lock") = error;
    }

    pub fn last_error(&self) -> Option<String> {
        self.last_error.lock().expect("last_error lock").clone()
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl AppState {
    /// Creates the session directory if needed and loads every session
    /// file in it. Unreadable files are skipped with a warning.
    pub fn load(config: ServiceConfig) -> annoloop::Result<Self> {
        std::fs::create_dir_all(&config.session_dir).map_err(|e| annoloop::Error::Io {
            path: config.session_dir.clone(),
            source: e,
        })?;
        let mut sessions = BTreeMap::new();
        let mut max_id = 0;
        let entries = std::fs::read_dir(&config.session_dir).map_err(|e| annoloop::Error::Io {
            path: config.session_dir.clone(),
            source: e,
        })?;
        for entry in entries.flatten() {
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).filter(|s| valid_id(s)) else {
                continue;
            };
            match load_session(&path) {
                Ok(state) => {
                    if let Some(n) = id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
                        max_id = max_id.max(n);
                    }
                    sessions.insert(id.to_string(), Arc::new(SessionHandle::new(id.to_string(), state)));
                }
                Err(e) => log::warn!("skipping session file {}: {e}", path.display()),
            }
        }
        log::info!("loaded {} session(s) from {}", sessions.len(), config.session_dir.display());
        Ok(AppState {
            config,
            sessions: RwLock::new(sessions),
            next_id: AtomicU64::new(max_id + 1),
        })
    }

    pub fn get(&self, id: &str) -> ApiResult<Arc<SessionHandle>> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session `{id}`")))
    }

    pub fn ids(&self) -> Vec<String> {
        self.sessions.read().expect("sessions lock").keys().cloned().collect()
    }

    pub fn insert(&self, state: SessionState) -> ApiResult<Arc<SessionHandle>> {
        let id = format!("s{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        self.persist(&id, &state)?;
        let handle = Arc::new(SessionHandle::new(id.clone(), state));
        self.sessions.write().expect("sessions lock").insert(id, handle.clone());
        Ok(handle)
    }

    pub fn session_path(&self, id: &str) -> PathBuf {
        self.config.session_dir.join(format!("{id}.json"))
    }

    pub fn persist(&self, id: &str, state: &SessionState) -> ApiResult<()> {
        save_session(state, self.session_path(id)).map_err(|e| ApiError::internal(e.to_string()))
    }

    /// Resolves a corpus reference inside the corpus directory.
    pub fn corpus_path(&self, reference: &str) -> ApiResult<PathBuf> {
        let rel = Path::new(reference);
        let safe = !reference.is_empty() && rel.components().all(|c| matches!(c, Component::Normal(_)));
        if !safe {
            return Err(ApiError::invalid(format!(
                "corpus `{reference}` must be a relative path inside the corpus directory"
            )));
        }
        let path = self.config.corpus_dir.join(rel);
        if !path.is_file() {
            return Err(ApiError::not_found(format!("corpus `{reference}` not found")));
        }
        Ok(path)
    }
}
