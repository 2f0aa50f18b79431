//! Translation session state and its on-disk form: a checksummed JSON
//! envelope written by atomic rename, guarded by a PID lock file.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::TranslationOrder;
use crate::harness::{HarnessConfig, TestReport};
use crate::llm::ProviderConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("session schema version {found} is not supported (expected {expected})")]
    SchemaMismatch { found: u64, expected: u32 },
    #[error("{path}: corrupt session: {detail}")]
    CorruptSession { path: PathBuf, detail: String },
    #[error("{path} is locked by process {pid}")]
    Locked { path: PathBuf, pid: u32 },
    #[error("session writes interrupted")]
    Interrupted,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> SessionError + '_ {
    move |source| SessionError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitStatus {
    Pending,
    Blocked,
    Translating,
    Passed,
    Failed,
    Waived,
}

impl UnitStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            UnitStatus::Pending => "pending",
            UnitStatus::Blocked => "blocked",
            UnitStatus::Translating => "translating",
            UnitStatus::Passed => "passed",
            UnitStatus::Failed => "failed",
            UnitStatus::Waived => "waived",
        }
    }

    /// Dependents may start.
    pub fn satisfies_dependents(self) -> bool {
        matches!(self, UnitStatus::Passed | UnitStatus::Waived)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockReason {
    TokenBudget,
    DependencyFailed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    /// 1-based.
    pub index: u32,
    /// Digests of the chat exchanges made during this attempt.
    pub exchanges: Vec<String>,
    pub candidate_source: Option<String>,
    pub candidate_tests: Option<String>,
    pub report: TestReport,
    /// False when the candidate could not be run (see `error`).
    pub tests_ran: bool,
    pub error: Option<String>,
    pub duration_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitState {
    /// Name of the first member; also the target module name.
    pub name: String,
    /// Unit ids translated together (one unless mutually recursive).
    pub members: Vec<String>,
    /// Keys of the chunks this one depends on.
    pub depends_on: Vec<String>,
    /// Concatenated Fortran text of all members.
    pub code: String,
    pub approx_tokens: usize,
    pub status: UnitStatus,
    pub blocked_reason: Option<BlockReason>,
    pub fortran_tests: Option<String>,
    /// `fortran_tests` came from the provider rather than the codebase.
    pub fortran_tests_generated: bool,
    pub attempts: Vec<Attempt>,
    pub final_source: Option<String>,
    pub final_tests: Option<String>,
    pub provider_calls: usize,
    pub last_error: Option<String>,
}

impl UnitState {
    pub fn last_attempt(&self) -> Option<&Attempt> {
        self.attempts.last()
    }

    pub fn duration_secs(&self) -> f64 {
        self.attempts.iter().map(|a| a.duration_secs).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrchestratorConfig {
    /// Chunks estimated above this many tokens are not attempted.
    pub token_budget: usize,
    pub max_iters: u32,
    pub workers: usize,
    /// Unit names whose failure is accepted; dependents use the last candidate.
    pub waive: Vec<String>,
    pub harness: HarnessConfig,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        Self {
            token_budget: 8000,
            max_iters: 5,
            workers: 1,
            waive: Vec::new(),
            harness: HarnessConfig::default(),
        }
    }
}

/// Configuration captured when the session was planned.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub orchestrator: OrchestratorConfig,
    pub provider: ProviderConfig,
}

/// One status transition, in the order it happened.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub unit: String,
    pub status: UnitStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranslationSession {
    pub session_id: String,
    pub codebase_root: PathBuf,
    /// Groups of chunk member ids; the first member id keys `unit_states`.
    pub order: TranslationOrder,
    pub unit_states: BTreeMap<String, UnitState>,
    pub config: ConfigSnapshot,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub events: Vec<Event>,
}

impl TranslationSession {
    /// Chunk keys in translation order.
    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.order.groups.iter().filter_map(|g| g.first()).map(String::as_str)
    }

    pub fn key_for_name(&self, name: &str) -> Option<&str> {
        self.unit_states
            .iter()
            .find(|(_, s)| s.name == name)
            .map(|(k, _)| k.as_str())
    }

    /// Change a chunk's status and log the transition.
    pub fn set_status(&mut self, key: &str, status: UnitStatus, note: Option<String>) {
        let Some(state) = self.unit_states.get_mut(key) else {
            return;
        };
        state.status = status;
        if status != UnitStatus::Blocked {
            state.blocked_reason = None;
        }
        let seq = self.events.last().map_or(0, |e| e.seq + 1);
        self.events.push(Event {
            seq,
            unit: key.to_string(),
            status,
            note,
        });
        self.updated_at = Utc::now();
    }

    pub fn count(&self, status: UnitStatus) -> usize {
        self.unit_states.values().filter(|s| s.status == status).count()
    }
}

fn checksum(session: &Value) -> String {
    hex::encode(Sha256::digest(session.to_string().as_bytes()))
}

/// Envelope text: `{"checksum", "schema_version", "session"}`.
pub fn encode(session: &TranslationSession) -> String {
    let value = serde_json::to_value(session).expect("session serializes");
    let envelope = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "checksum": checksum(&value),
        "session": value,
    });
    let mut text = serde_json::to_string_pretty(&envelope).expect("envelope serializes");
    text.push('\n');
    text
}

pub fn decode(path: &Path, text: &str) -> Result<TranslationSession, SessionError> {
    let corrupt = |detail: String| SessionError::CorruptSession {
        path: path.to_path_buf(),
        detail,
    };
    let mut envelope: Value = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
    let found = envelope
        .get("schema_version")
        .and_then(Value::as_u64)
        .ok_or_else(|| corrupt("missing schema_version".into()))?;
    if found != u64::from(SCHEMA_VERSION) {
        return Err(SessionError::SchemaMismatch {
            found,
            expected: SCHEMA_VERSION,
        });
    }
    let stored = envelope
        .get("checksum")
        .and_then(Value::as_str)
        .ok_or_else(|| corrupt("missing checksum".into()))?
        .to_string();
    let session = envelope
        .get_mut("session")
        .map(Value::take)
        .ok_or_else(|| corrupt("missing session".into()))?;
    let actual = checksum(&session);
    if actual != stored {
        return Err(corrupt(format!("checksum {actual} does not match {stored}")));
    }
    serde_json::from_value(session).map_err(|e| corrupt(e.to_string()))
}

/// Write next to `path`, fsync, then rename over it.
pub fn save_session(path: &Path, session: &TranslationSession) -> Result<(), SessionError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io(dir))?;
    tmp.write_all(encode(session).as_bytes()).map_err(io(tmp.path()))?;
    tmp.as_file().sync_all().map_err(io(path))?;
    tmp.persist(path).map_err(|e| SessionError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

pub fn load_session(path: &Path) -> Result<TranslationSession, SessionError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    decode(path, &text)
}

/// Load a session for continuation: chunks caught mid-translation go back
/// to pending, keeping their completed attempts.
pub fn resume(path: &Path) -> Result<TranslationSession, SessionError> {
    let mut session = load_session(path)?;
    let interrupted: Vec<String> = session
        .unit_states
        .iter()
        .filter(|(_, s)| s.status == UnitStatus::Translating)
        .map(|(k, _)| k.clone())
        .collect();
    for key in interrupted {
        session.set_status(&key, UnitStatus::Pending, Some("resumed".into()));
    }
    Ok(session)
}

pub fn lock_path(session_path: &Path) -> PathBuf {
    let mut name = session_path.file_name().unwrap_or_default().to_os_string();
    name.push(".lock");
    session_path.with_file_name(name)
}

fn process_alive(pid: u32) -> bool {
    let Ok(pid) = libc::pid_t::try_from(pid) else {
        return false;
    };
    // SAFETY: signal 0 only checks that the process exists.
    let rc = unsafe { libc::kill(pid, 0) };
    rc == 0 || std::io::Error::last_os_error().raw_os_error() == Some(libc::EPERM)
}

/// `<session>.lock` holding the owner's PID; removed on drop. A lock left
/// by a dead process is taken over.
#[derive(Debug)]
pub struct SessionLock {
    path: PathBuf,
}

impl SessionLock {
    pub fn acquire(session_path: &Path) -> Result<Self, SessionError> {
        let path = lock_path(session_path);
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io(dir))?;
        }
        for _ in 0..2 {
            match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    write!(f, "{}", std::process::id()).map_err(io(&path))?;
                    return Ok(Self { path });
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    let owner = fs::read_to_string(&path)
                        .ok()
                        .and_then(|t| t.trim().parse::<u32>().ok());
                    match owner {
                        Some(pid) if pid == std::process::id() || process_alive(pid) => {
                            return Err(SessionError::Locked { path, pid })
                        }
                        _ => {
                            fs::remove_file(&path).map_err(io(&path))?;
                        }
                    }
                }
                Err(e) => return Err(SessionError::Io { path, source: e }),
            }
        }
        Err(SessionError::Locked { path, pid: 0 })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Drop for SessionLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Where session state goes after every transition.
pub trait Store {
    fn save(&mut self, session: &TranslationSession) -> Result<(), SessionError>;
}

/// Keeps the session in memory only.
#[derive(Debug, Default)]
pub struct NullStore;

impl Store for NullStore {
    fn save(&mut self, _session: &TranslationSession) -> Result<(), SessionError> {
        Ok(())
    }
}

/// The session file, held under its lock.
#[derive(Debug)]
pub struct FileStore {
    path: PathBuf,
    _lock: SessionLock,
}

impl FileStore {
    pub fn open(path: &Path) -> Result<Self, SessionError> {
        Ok(Self {
            _lock: SessionLock::acquire(path)?,
            path: path.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Store for FileStore {
    fn save(&mut self, session: &TranslationSession) -> Result<(), SessionError> {
        save_session(&self.path, session)
    }
}

/// Passes `allowed` saves through, then fails every later one as if the
/// process had been killed.
#[derive(Debug)]
pub struct InterruptingStore<S> {
    pub inner: S,
    allowed: usize,
    saves: usize,
}

impl<S: Store> InterruptingStore<S> {
    pub fn new(inner: S, allowed: usize) -> Self {
        Self {
            inner,
            allowed,
            saves: 0,
        }
    }

    pub fn saves(&self) -> usize {
        self.saves
    }
}

impl<S: Store> Store for InterruptingStore<S> {
    fn save(&mut self, session: &TranslationSession) -> Result<(), SessionError> {
        if self.saves >= self.allowed {
            return Err(SessionError::Interrupted);
        }
        self.saves += 1;
        self.inner.save(session)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_path_appends_suffix() {
        assert_eq!(lock_path(Path::new("a/s.json")), Path::new("a/s.json.lock"));
    }

    #[test]
    fn second_lock_in_same_process_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let lock = SessionLock::acquire(&path).unwrap();
        assert!(matches!(SessionLock::acquire(&path), Err(SessionError::Locked { .. })));
        drop(lock);
        assert!(SessionLock::acquire(&path).is_ok());
    }

    #[test]
    fn stale_lock_is_taken_over() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        // pid_max on Linux is at most 2^22
        fs::write(lock_path(&path), "99999999").unwrap();
        let lock = SessionLock::acquire(&path).unwrap();
        assert_eq!(
            fs::read_to_string(lock.path()).unwrap(),
            std::process::id().to_string()
        );
    }
}
