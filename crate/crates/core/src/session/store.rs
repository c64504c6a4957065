use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, RwLock};

use chrono::Utc;
use uuid::Uuid;

use super::{
    CrossingWarning, Entropy, EventLog, LogRecord, Session, SessionError, SessionResult, SessionView,
};
use crate::beliefs::PiecewiseLinearBelief;

type Slot = Arc<RwLock<Session>>;

/// Concurrent session registry backed by an optional event log.
///
/// Writes to one session are serialized by its lock; reads run concurrently.
/// A command runs against a copy of the session and is committed only after
/// its events reach the log.
#[derive(Debug, Default)]
pub struct SessionStore {
    sessions: RwLock<HashMap<Uuid, Slot>>,
    log: Option<EventLog>,
}

impl SessionStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) the log at `path` and replays every session in it.
    pub fn open(path: impl AsRef<Path>) -> SessionResult<Self> {
        let records = EventLog::read_all(&path)?;
        let mut grouped: HashMap<Uuid, Vec<LogRecord>> = HashMap::new();
        for record in records {
            grouped.entry(record.session_id).or_default().push(record);
        }
        let mut sessions = HashMap::with_capacity(grouped.len());
        for (id, records) in grouped {
            sessions.insert(id, Arc::new(RwLock::new(Session::replay(&records)?)));
        }
        Ok(Self { sessions: RwLock::new(sessions), log: Some(EventLog::open(path)?) })
    }

    pub fn len(&self) -> usize {
        self.sessions.read().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> Vec<Uuid> {
        self.sessions.read().unwrap_or_else(|p| p.into_inner()).keys().copied().collect()
    }

    pub fn flush(&self) -> SessionResult<()> {
        match &self.log {
            Some(log) => log.sync(),
            None => Ok(()),
        }
    }

    fn persist(&self, records: &[LogRecord]) -> SessionResult<()> {
        match &self.log {
            Some(log) => log.append(records),
            None => Ok(()),
        }
    }

    fn slot(&self, id: Uuid) -> SessionResult<Slot> {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(&id)
            .cloned()
            .ok_or(SessionError::NotFound(id))
    }

    pub fn create(&self, levels: &[f64], reward: f64, entropy: Entropy) -> SessionResult<SessionView> {
        let id = Uuid::new_v4();
        let mut session = Session::create(id, levels, reward, entropy, Utc::now())?;
        self.persist(&session.take_pending())?;
        let view = session.view();
        self.sessions
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id, Arc::new(RwLock::new(session)));
        Ok(view)
    }

    pub fn get(&self, id: Uuid) -> SessionResult<SessionView> {
        let slot = self.slot(id)?;
        let session = slot.read().unwrap_or_else(|p| p.into_inner());
        Ok(session.view())
    }

    /// Runs `command` on a copy of the session, logs its events, then commits.
    /// Events are committed even when the command fails after recording them
    /// (a voiding reveal).
    fn mutate<T>(&self, id: Uuid, command: impl FnOnce(&mut Session) -> SessionResult<T>) -> SessionResult<(T, SessionView)> {
        let slot = self.slot(id)?;
        let mut guard = slot.write().unwrap_or_else(|p| p.into_inner());
        let mut working = guard.clone();
        let result = command(&mut working);
        let records = working.take_pending();
        if !records.is_empty() {
            self.persist(&records)?;
            *guard = working;
        }
        let value = result?;
        Ok((value, guard.view()))
    }

    pub fn submit_report(&self, id: Uuid, level: f64, value: f64) -> SessionResult<(SessionView, Vec<CrossingWarning>)> {
        let (warnings, view) = self.mutate(id, |s| s.submit_report(level, value, Utc::now()))?;
        Ok((view, warnings))
    }

    pub fn reveal(&self, id: Uuid) -> SessionResult<SessionView> {
        Ok(self.mutate(id, |s| s.reveal(Utc::now()))?.1)
    }

    pub fn settle(&self, id: Uuid, theta: f64, entered_by: &str) -> SessionResult<SessionView> {
        Ok(self.mutate(id, |s| s.settle(theta, entered_by, Utc::now()).map(|_| ()))?.1)
    }

    pub fn fitted_cdf(&self, id: Uuid) -> SessionResult<PiecewiseLinearBelief> {
        let slot = self.slot(id)?;
        let session = slot.read().unwrap_or_else(|p| p.into_inner());
        session.fitted_cdf()
    }

    /// Serialized full state of one session, for replay comparisons.
    pub fn snapshot(&self, id: Uuid) -> SessionResult<Vec<u8>> {
        let slot = self.slot(id)?;
        let session = slot.read().unwrap_or_else(|p| p.into_inner());
        serde_json::to_vec(&*session).map_err(|e| SessionError::Io(e.to_string()))
    }
}
