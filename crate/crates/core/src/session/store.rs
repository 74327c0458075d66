//! Directory-per-session storage.
//!
//! ```text
//! <root>/<session_id>/
//!     session.json      id and config
//!     journal.ndjson    one JSON record per line: {"record": .., "data": ..}
//!     blobs/<sha256>.txt  version texts, deduplicated by content
//!     LOCK              held exclusively by the single writer
//! ```
//!
//! A batch commit is written as one `batch` line, so a torn final line is the
//! only possible partial write; it is ignored on load.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CommitItem, Event, Session, SessionConfig, SessionError, SessionId};
use crate::clock::{Clock, SystemClock};
use crate::doc::{DocumentVersion, VersionId};
use crate::thread::CommentThread;

pub const FORMAT_VERSION: u32 = 1;
const SESSION_FILE: &str = "session.json";
const JOURNAL_FILE: &str = "journal.ndjson";
const BLOB_DIR: &str = "blobs";
const LOCK_FILE: &str = "LOCK";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SessionHeader {
    format: u32,
    session_id: SessionId,
    config: SessionConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionRef {
    pub version_id: VersionId,
    pub parent_id: Option<VersionId>,
    pub created_at: DateTime<Utc>,
    /// SHA-256 of the version text; the text lives in `blobs/<blob>.txt`.
    pub blob: String,
}

/// One journal line.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "record", content = "data", rename_all = "snake_case")]
pub enum JournalRecord {
    Version(VersionRef),
    Thread(Box<CommentThread>),
    Event(Event),
    Batch(Vec<JournalRecord>),
}

fn blob_key(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Appends to an open session directory while holding its lock.
#[derive(Debug)]
pub(crate) struct Journal {
    dir: PathBuf,
    file: File,
    _lock: File,
}

impl Journal {
    fn acquire(dir: &Path) -> Result<File, SessionError> {
        let lock = OpenOptions::new().create(true).truncate(false).write(true).open(dir.join(LOCK_FILE))?;
        match lock.try_lock() {
            Ok(()) => Ok(lock),
            Err(fs::TryLockError::WouldBlock) => Err(SessionError::Locked(dir.display().to_string())),
            Err(fs::TryLockError::Error(e)) => Err(e.into()),
        }
    }

    fn attach(dir: &Path, lock: File) -> Result<Journal, SessionError> {
        let file = OpenOptions::new().create(true).append(true).open(dir.join(JOURNAL_FILE))?;
        Ok(Journal { dir: dir.to_owned(), file, _lock: lock })
    }

    fn write_blob(&self, text: &str) -> Result<String, SessionError> {
        let key = blob_key(text);
        let path = self.dir.join(BLOB_DIR).join(format!("{key}.txt"));
        if !path.exists() {
            let tmp = path.with_extension("tmp");
            fs::write(&tmp, text.as_bytes())?;
            fs::rename(&tmp, &path)?;
        }
        Ok(key)
    }

    fn record(&self, item: &CommitItem) -> Result<JournalRecord, SessionError> {
        Ok(match item {
            CommitItem::Version(v) => JournalRecord::Version(VersionRef {
                version_id: v.version_id(),
                parent_id: v.parent_id(),
                created_at: v.created_at(),
                blob: self.write_blob(v.text())?,
            }),
            CommitItem::Thread(t) => JournalRecord::Thread(Box::new(t.clone())),
            CommitItem::Event(e) => JournalRecord::Event(e.clone()),
        })
    }

    pub(crate) fn append(&mut self, items: &[CommitItem]) -> Result<(), SessionError> {
        let mut records = items.iter().map(|i| self.record(i)).collect::<Result<Vec<_>, _>>()?;
        let record = if records.len() == 1 { records.remove(0) } else { JournalRecord::Batch(records) };
        let mut line = serde_json::to_string(&record).map_err(|e| SessionError::StorageFailure(e.to_string()))?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.sync_data()?;
        Ok(())
    }
}

/// Reads every record from a journal file. A final line that fails to parse
/// is treated as a torn write and skipped.
pub fn read_journal(path: &Path) -> Result<Vec<JournalRecord>, SessionError> {
    let reader = BufReader::new(File::open(path)?);
    let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(_) if i + 1 == lines.len() => log::warn!("ignoring torn final journal line in {}", path.display()),
            Err(e) => return Err(SessionError::Corrupt(format!("{} line {}: {e}", path.display(), i + 1))),
        }
    }
    Ok(out)
}

fn read_header(dir: &Path) -> Result<SessionHeader, SessionError> {
    let path = dir.join(SESSION_FILE);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(SessionError::NotFound(dir.display().to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    let header: SessionHeader =
        serde_json::from_str(&text).map_err(|e| SessionError::Corrupt(format!("{}: {e}", path.display())))?;
    if header.format != FORMAT_VERSION {
        return Err(SessionError::Corrupt(format!("unsupported format {}", header.format)));
    }
    Ok(header)
}

fn flatten(records: Vec<JournalRecord>) -> Vec<Vec<JournalRecord>> {
    records
        .into_iter()
        .map(|r| match r {
            JournalRecord::Batch(inner) => inner,
            single => vec![single],
        })
        .collect()
}

fn rebuild(dir: &Path, clock: Arc<dyn Clock>) -> Result<Session, SessionError> {
    let header = read_header(dir)?;
    let segmentation = header.config.segmentation.clone();
    let batches = flatten(read_journal(&dir.join(JOURNAL_FILE))?);
    let load_version = |r: &VersionRef| -> Result<DocumentVersion, SessionError> {
        let path = dir.join(BLOB_DIR).join(format!("{}.txt", r.blob));
        let text = fs::read_to_string(&path)
            .map_err(|e| SessionError::Corrupt(format!("missing blob {}: {e}", path.display())))?;
        if blob_key(&text) != r.blob {
            return Err(SessionError::Corrupt(format!("blob {} does not match its hash", r.blob)));
        }
        Ok(DocumentVersion::build(r.version_id, text, r.parent_id, r.created_at, segmentation.clone()))
    };

    let mut batches = batches.into_iter();
    let first = batches.next().unwrap_or_default();
    let root = match first.as_slice() {
        [JournalRecord::Version(r)] if r.version_id == 0 && r.parent_id.is_none() => load_version(r)?,
        _ => return Err(SessionError::Corrupt("journal must start with version 0".into())),
    };
    let mut session = Session {
        session_id: header.session_id,
        config: header.config,
        versions: vec![Arc::new(root)],
        threads: Vec::new(),
        events: Vec::new(),
        cached_version_id: 0,
        clock,
        journal: None,
    };
    for batch in batches {
        let items = batch
            .into_iter()
            .map(|r| match r {
                JournalRecord::Version(v) => load_version(&v).map(CommitItem::Version),
                JournalRecord::Thread(t) => Ok(CommitItem::Thread(*t)),
                JournalRecord::Event(e) => Ok(CommitItem::Event(e)),
                JournalRecord::Batch(_) => Err(SessionError::Corrupt("nested batch".into())),
            })
            .collect::<Result<Vec<_>, _>>()?;
        session.commit_batch(items).map_err(|e| SessionError::Corrupt(format!("journal replay: {e}")))?;
    }
    Ok(session)
}

/// Writes `session` (full history) into a new directory `dir` and returns
/// it attached to that directory.
pub fn persist_to(dir: &Path, mut session: Session) -> Result<Session, SessionError> {
    if dir.join(SESSION_FILE).exists() {
        return Err(SessionError::StorageFailure(format!("{} already holds a session", dir.display())));
    }
    fs::create_dir_all(dir.join(BLOB_DIR))?;
    let lock = Journal::acquire(dir)?;
    let header = SessionHeader { format: FORMAT_VERSION, session_id: session.session_id.clone(), config: session.config.clone() };
    let header_json = serde_json::to_string_pretty(&header).map_err(|e| SessionError::StorageFailure(e.to_string()))?;
    let _ = fs::remove_file(dir.join(JOURNAL_FILE));
    let mut journal = Journal::attach(dir, lock)?;
    journal.append(&[CommitItem::Version(session.versions[0].as_ref().clone())])?;
    for item in session.to_items() {
        journal.append(std::slice::from_ref(&item))?;
    }
    fs::write(dir.join(SESSION_FILE), header_json)?;
    session.journal = Some(journal);
    Ok(session)
}

/// Makes the journal end on a line boundary before appending to it: an
/// unterminated tail is completed when it parses and cut off otherwise.
fn repair_tail(path: &Path) -> Result<(), SessionError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(e.into()),
    };
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    if keep == bytes.len() {
        return Ok(());
    }
    if serde_json::from_slice::<JournalRecord>(&bytes[keep..]).is_ok() {
        let mut f = OpenOptions::new().append(true).open(path)?;
        f.write_all(b"\n")?;
        f.sync_data()?;
    } else {
        log::warn!("truncating torn journal tail in {}", path.display());
        let f = OpenOptions::new().write(true).open(path)?;
        f.set_len(keep as u64)?;
        f.sync_data()?;
    }
    Ok(())
}

/// Opens a session directory for writing, taking its lock.
pub fn open_dir(dir: &Path, clock: Arc<dyn Clock>) -> Result<Session, SessionError> {
    read_header(dir)?;
    let lock = Journal::acquire(dir)?;
    repair_tail(&dir.join(JOURNAL_FILE))?;
    let mut session = rebuild(dir, clock)?;
    session.journal = Some(Journal::attach(dir, lock)?);
    Ok(session)
}

/// Loads a session directory without taking the lock. The result is an
/// in-memory copy; commits to it are not persisted.
pub fn load_dir(dir: &Path) -> Result<Session, SessionError> {
    rebuild(dir, Arc::new(SystemClock))
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

impl SessionStore {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self, SessionError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(SessionStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dir(&self, id: &str) -> Result<PathBuf, SessionError> {
        if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(SessionError::NotFound(id.to_owned()));
        }
        Ok(self.root.join(id))
    }

    pub fn create(&self, text: &str, config: SessionConfig) -> Result<Session, SessionError> {
        self.insert(Session::open(text, config))
    }

    /// Persists an in-memory session under its own id.
    pub fn insert(&self, session: Session) -> Result<Session, SessionError> {
        let dir = self.dir(session.session_id())?;
        persist_to(&dir, session)
    }

    pub fn open(&self, id: &str) -> Result<Session, SessionError> {
        open_dir(&self.dir(id)?, Arc::new(SystemClock))
    }

    pub fn open_with_clock(&self, id: &str, clock: Arc<dyn Clock>) -> Result<Session, SessionError> {
        open_dir(&self.dir(id)?, clock)
    }

    pub fn load_readonly(&self, id: &str) -> Result<Session, SessionError> {
        load_dir(&self.dir(id)?)
    }

    pub fn list(&self) -> Result<Vec<SessionId>, SessionError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let entry = entry?;
            if entry.path().join(SESSION_FILE).is_file() {
                ids.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        ids.sort();
        Ok(ids)
    }
}
