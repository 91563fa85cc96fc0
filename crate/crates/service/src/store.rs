//! Session registry backed by one append-only event log per session.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use agentcoach_core::simcore::{SessionEvent, SessionState};
use tokio::sync::Mutex;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("session {0} already exists")]
    Duplicate(String),
}

/// Reads an event log. A final line that does not parse and lacks a
/// trailing newline is a torn write and is dropped.
pub fn read_log(path: &Path) -> Result<Vec<SessionEvent>, StoreError> {
    let io = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = BufReader::new(File::open(path).map_err(io)?);
    let mut events = Vec::new();
    let mut line = String::new();
    let mut n = 0;
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(io)? == 0 {
            break;
        }
        n += 1;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(e) => events.push(e),
            Err(_) if !line.ends_with('\n') => break,
            Err(e) => {
                return Err(StoreError::Corrupt {
                    path: path.to_path_buf(),
                    line: n,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(events)
}

pub fn replay_log(path: &Path) -> Result<SessionState, StoreError> {
    let events = read_log(path)?;
    SessionState::replay(&events).map_err(|e| StoreError::Corrupt {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })
}

/// Log files in `dir`, sorted by name.
pub fn log_files(dir: &Path) -> Result<Vec<PathBuf>, StoreError> {
    let rd = std::fs::read_dir(dir).map_err(|source| StoreError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut out: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    out.sort();
    Ok(out)
}

pub type SessionHandle = Arc<Mutex<SessionState>>;

pub struct SessionStore {
    log_dir: PathBuf,
    sessions: RwLock<HashMap<String, SessionHandle>>,
}

impl SessionStore {
    /// Opens `log_dir`, replaying every log found there.
    pub fn open(log_dir: &Path) -> Result<Self, StoreError> {
        std::fs::create_dir_all(log_dir).map_err(|source| StoreError::Io {
            path: log_dir.to_path_buf(),
            source,
        })?;
        let mut sessions = HashMap::new();
        for path in log_files(log_dir)? {
            let state = replay_log(&path)?;
            sessions.insert(state.session_id().to_string(), Arc::new(Mutex::new(state)));
        }
        Ok(SessionStore {
            log_dir: log_dir.to_path_buf(),
            sessions: RwLock::new(sessions),
        })
    }

    pub fn log_dir(&self) -> &Path {
        &self.log_dir
    }

    pub fn log_path(&self, session_id: &str) -> PathBuf {
        self.log_dir.join(format!("{session_id}.jsonl"))
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("registry lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, session_id: &str) -> Option<SessionHandle> {
        self.sessions
            .read()
            .expect("registry lock")
            .get(session_id)
            .cloned()
    }

    pub fn handles(&self) -> Vec<(String, SessionHandle)> {
        let mut v: Vec<(String, SessionHandle)> = self
            .sessions
            .read()
            .expect("registry lock")
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }

    /// Persists a new session's start events, then registers it.
    pub fn insert(&self, mut state: SessionState) -> Result<SessionHandle, StoreError> {
        let id = state.session_id().to_string();
        if self.get(&id).is_some() || self.log_path(&id).exists() {
            return Err(StoreError::Duplicate(id));
        }
        self.append(&id, &state.take_events())?;
        let handle = Arc::new(Mutex::new(state));
        self.sessions
            .write()
            .expect("registry lock")
            .insert(id, handle.clone());
        Ok(handle)
    }

    /// Writes pending events. On failure the state is rebuilt from the log
    /// so memory never runs ahead of disk.
    pub fn commit(&self, state: &mut SessionState) -> Result<(), StoreError> {
        let events = state.take_events();
        if events.is_empty() {
            return Ok(());
        }
        let id = state.session_id().to_string();
        if let Err(e) = self.append(&id, &events) {
            if let Ok(restored) = replay_log(&self.log_path(&id)) {
                *state = restored;
            }
            return Err(e);
        }
        Ok(())
    }

    fn append(&self, session_id: &str, events: &[SessionEvent]) -> Result<(), StoreError> {
        let path = self.log_path(session_id);
        let io = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        let mut buf = Vec::new();
        for e in events {
            serde_json::to_writer(&mut buf, e).expect("events serialize");
            buf.push(b'\n');
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io)?;
        f.write_all(&buf).map_err(io)?;
        f.sync_data().map_err(io)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torn_tail_is_dropped_but_corruption_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        let close = "{\"type\":\"session_close\",\"reason\":\"trainee_quit\",\"at_ms\":1}\n";
        std::fs::write(&p, format!("{close}{{\"type\":\"sess")).unwrap();
        assert_eq!(read_log(&p).unwrap().len(), 1);
        let mut f = OpenOptions::new().append(true).open(&p).unwrap();
        f.write_all(b"\n").unwrap();
        assert!(matches!(read_log(&p), Err(StoreError::Corrupt { line: 2, .. })));
    }
}
