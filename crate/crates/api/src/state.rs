//! Live sessions keyed by token, with optional on-disk logs.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::BufReader;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use tokio::sync::watch;

use genie_core::engine::Engine;
use genie_core::session::{read_log, Clock, Session, SystemClock};

use crate::error::ApiError;

pub struct Slot {
    pub token: String,
    pub created_at: DateTime<Utc>,
    pub session: Mutex<Session>,
    /// Query version after the latest change, for `/updates` waiters.
    pub version: watch::Sender<u64>,
}

impl Slot {
    fn new(token: String, session: Session) -> Self {
        let (version, _) = watch::channel(session.query_version());
        Slot {
            token,
            created_at: Utc::now(),
            session: Mutex::new(session),
            version,
        }
    }

    /// Runs `f` under the session lock and publishes the resulting version.
    pub fn with<T>(&self, f: impl FnOnce(&mut Session) -> T) -> T {
        let mut s = self.session.lock();
        let out = f(&mut s);
        self.version.send_replace(s.query_version());
        out
    }
}

pub struct AppState {
    pub engine: Arc<Engine>,
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
    log_dir: Option<PathBuf>,
    clock: Arc<dyn Clock>,
    pub long_poll: Duration,
}

impl AppState {
    pub fn new(engine: Arc<Engine>) -> Self {
        let log_dir = engine.config().session_log_dir.clone();
        let long_poll = Duration::from_millis(engine.config().session.long_poll_ms);
        AppState {
            engine,
            sessions: RwLock::new(HashMap::new()),
            log_dir,
            clock: Arc::new(SystemClock),
            long_poll,
        }
    }

    /// Timestamps come from `clock`; tests pass a stepping clock.
    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_log_dir(mut self, dir: Option<PathBuf>) -> Self {
        self.log_dir = dir;
        self
    }

    fn log_path(&self, token: &str) -> Option<PathBuf> {
        self.log_dir.as_ref().map(|d| d.join(format!("{token}.ndjson")))
    }

    fn attach_sink(&self, token: &str, session: Session) -> Result<Session, ApiError> {
        let Some(path) = self.log_path(token) else {
            return Ok(session);
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| ApiError::new(axum::http::StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
        Ok(session.with_sink(Box::new(file)))
    }

    pub fn create(&self) -> Result<Arc<Slot>, ApiError> {
        let token = uuid::Uuid::new_v4().simple().to_string();
        let session = Session::new(self.engine.context(), token.clone(), self.clock.clone());
        let session = self.attach_sink(&token, session)?;
        let slot = Arc::new(Slot::new(token.clone(), session));
        self.sessions.write().insert(token, slot.clone());
        Ok(slot)
    }

    /// The live session, or one rebuilt from its log after a restart.
    pub fn get(&self, token: &str) -> Result<Arc<Slot>, ApiError> {
        if let Some(slot) = self.sessions.read().get(token) {
            return Ok(slot.clone());
        }
        let valid = token.len() == 32 && token.bytes().all(|b| b.is_ascii_hexdigit());
        let path = self.log_path(token).filter(|p| valid && p.exists());
        let Some(path) = path else {
            return Err(ApiError::unknown_session(token));
        };
        let file = std::fs::File::open(&path).map_err(|_| ApiError::unknown_session(token))?;
        let entries = read_log(BufReader::new(file))?;
        let session = Session::replay(self.engine.context(), token, &entries, self.clock.clone())?;
        let session = self.attach_sink(token, session)?;
        let mut map = self.sessions.write();
        let slot = map
            .entry(token.to_string())
            .or_insert_with(|| Arc::new(Slot::new(token.to_string(), session)));
        Ok(slot.clone())
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().len()
    }
}
