use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::{SessionError, SessionEvent};

/// Durable, append-only storage for session events.
pub trait EventStore: Send + Sync {
    /// Appends and flushes to stable storage before returning.
    fn append(&self, session: &str, events: &[SessionEvent]) -> Result<(), SessionError>;
    /// Every stored event of `session`, in order. Unknown sessions have none.
    fn load(&self, session: &str) -> Result<Vec<SessionEvent>, SessionError>;
    fn sessions(&self) -> Result<Vec<String>, SessionError>;
}

/// Session ids double as file names, so they are restricted to a safe alphabet.
pub fn valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// One `<id>.events.jsonl` file per session.
#[derive(Debug, Clone)]
pub struct FileEventStore {
    dir: PathBuf,
}

const SUFFIX: &str = ".events.jsonl";

impl FileEventStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, SessionError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(storage)?;
        Ok(Self { dir })
    }

    pub fn path_of(&self, session: &str) -> PathBuf {
        self.dir.join(format!("{session}{SUFFIX}"))
    }
}

fn storage(e: std::io::Error) -> SessionError {
    SessionError::Storage(e.to_string())
}

impl EventStore for FileEventStore {
    fn append(&self, session: &str, events: &[SessionEvent]) -> Result<(), SessionError> {
        if !valid_session_id(session) {
            return Err(SessionError::Storage(format!("invalid session id `{session}`")));
        }
        let mut buf = Vec::new();
        for ev in events {
            serde_json::to_writer(&mut buf, ev).map_err(|e| SessionError::Storage(e.to_string()))?;
            buf.push(b'\n');
        }
        let mut f = OpenOptions::new().create(true).append(true).open(self.path_of(session)).map_err(storage)?;
        f.write_all(&buf).map_err(storage)?;
        f.sync_data().map_err(storage)
    }

    fn load(&self, session: &str) -> Result<Vec<SessionEvent>, SessionError> {
        if !valid_session_id(session) {
            return Ok(Vec::new());
        }
        let text = match fs::read_to_string(self.path_of(session)) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(storage(e)),
        };
        parse_log(&text)
    }

    fn sessions(&self) -> Result<Vec<String>, SessionError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.dir).map_err(storage)? {
            let name = entry.map_err(storage)?.file_name();
            if let Some(id) = name.to_str().and_then(|n| n.strip_suffix(SUFFIX)) {
                out.push(id.to_string());
            }
        }
        out.sort();
        Ok(out)
    }
}

/// Parses JSON Lines. A final line without its newline is a torn write and is
/// dropped; any other malformed line is corruption.
pub fn parse_log(text: &str) -> Result<Vec<SessionEvent>, SessionError> {
    let mut out: Vec<SessionEvent> = Vec::new();
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.split_terminator('\n').collect();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(ev) => out.push(ev),
            Err(_) if i + 1 == lines.len() && !complete => break,
            Err(e) => {
                let seq = out.last().map_or(1, |l| l.seq + 1);
                return Err(SessionError::CorruptLog { seq, reason: format!("line {}: {e}", i + 1) });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Default)]
pub struct MemoryEventStore {
    logs: Mutex<BTreeMap<String, Vec<SessionEvent>>>,
}

impl MemoryEventStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl EventStore for MemoryEventStore {
    fn append(&self, session: &str, events: &[SessionEvent]) -> Result<(), SessionError> {
        let mut logs = self.logs.lock().map_err(|_| SessionError::Storage("poisoned".into()))?;
        logs.entry(session.to_string()).or_default().extend_from_slice(events);
        Ok(())
    }

    fn load(&self, session: &str) -> Result<Vec<SessionEvent>, SessionError> {
        let logs = self.logs.lock().map_err(|_| SessionError::Storage("poisoned".into()))?;
        Ok(logs.get(session).cloned().unwrap_or_default())
    }

    fn sessions(&self) -> Result<Vec<String>, SessionError> {
        let logs = self.logs.lock().map_err(|_| SessionError::Storage("poisoned".into()))?;
        Ok(logs.keys().cloned().collect())
    }
}
