//! Live session registry backed by an append-only JSONL event log.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use chrono::{TimeDelta, Utc};
use tokio::fs::{File, OpenOptions};
use tokio::io::AsyncWriteExt;
use tokio::sync::{Mutex, RwLock};

use signalgame_core::gridworld::Cents;

use crate::error::ServiceError;
use crate::session::{parse_log, replay, Event, EventRecord, SessionError, SessionState};

#[derive(Debug)]
pub struct Session {
    pub state: SessionState,
    pub records: Vec<EventRecord>,
}

#[derive(Debug)]
pub struct Store {
    cap: Cents,
    file: Option<Mutex<File>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    /// Participant code → session id; also serializes session creation.
    codes: Mutex<HashMap<String, String>>,
}

impl Store {
    pub fn in_memory(cap: Cents) -> Self {
        Self { cap, file: None, sessions: RwLock::default(), codes: Mutex::default() }
    }

    /// Replays an existing log, then appends to it.
    pub async fn open(path: &Path, cap: Cents) -> Result<Self, ServiceError> {
        let text = match tokio::fs::read_to_string(path).await {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(e.into()),
        };
        let records = parse_log(&text)?;
        let states = replay(&records, cap)?;
        let mut by_session: HashMap<String, Vec<EventRecord>> = HashMap::new();
        for r in records {
            by_session.entry(r.session_id.clone()).or_default().push(r);
        }
        let mut sessions = HashMap::new();
        let mut codes = HashMap::new();
        for (id, state) in states {
            codes.insert(state.participant_code.clone(), id.clone());
            let records = by_session.remove(&id).unwrap_or_default();
            sessions.insert(id, Arc::new(Mutex::new(Session { state, records })));
        }
        let file = OpenOptions::new().create(true).append(true).open(path).await?;
        tracing::info!(sessions = sessions.len(), log = %path.display(), "event log replayed");
        Ok(Self { cap, file: Some(Mutex::new(file)), sessions: RwLock::new(sessions), codes: Mutex::new(codes) })
    }

    pub fn cap(&self) -> Cents {
        self.cap
    }

    pub async fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        self.sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()).into())
    }

    pub async fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().await.keys().cloned().collect();
        ids.sort();
        ids
    }

    pub async fn create(&self, id: String, code: &str, created: Event) -> Result<SessionState, ServiceError> {
        let mut codes = self.codes.lock().await;
        if codes.contains_key(code) {
            return Err(SessionError::DuplicateCode(code.to_string()).into());
        }
        let record = EventRecord { session_id: id.clone(), seq: 0, timestamp: Utc::now(), event: created };
        let state = SessionState::apply(None, &record, self.cap)?;
        self.append(std::slice::from_ref(&record)).await?;
        codes.insert(code.to_string(), id.clone());
        let session = Session { state: state.clone(), records: vec![record] };
        self.sessions.write().await.insert(id, Arc::new(Mutex::new(session)));
        Ok(state)
    }

    /// Applies `events` to the locked session, persisting them before the
    /// in-memory state changes. Either all events land or none do.
    pub async fn commit(&self, session: &mut Session, events: Vec<Event>) -> Result<(), ServiceError> {
        let mut state = session.state.clone();
        let mut records = Vec::with_capacity(events.len());
        for event in events {
            let now = Utc::now();
            let timestamp = match state.last_timestamp {
                Some(last) if now <= last => last + TimeDelta::microseconds(1),
                _ => now,
            };
            let record = EventRecord { session_id: state.session_id.clone(), seq: state.events, timestamp, event };
            state = SessionState::apply(Some(state), &record, self.cap)?;
            records.push(record);
        }
        self.append(&records).await?;
        session.state = state;
        session.records.extend(records);
        Ok(())
    }

    async fn append(&self, records: &[EventRecord]) -> Result<(), ServiceError> {
        let Some(file) = &self.file else { return Ok(()) };
        let mut buf = String::new();
        for r in records {
            buf.push_str(&serde_json::to_string(r).map_err(|e| ServiceError::Internal(e.to_string()))?);
            buf.push('\n');
        }
        let mut f = file.lock().await;
        f.write_all(buf.as_bytes()).await?;
        f.flush().await?;
        Ok(())
    }
}
