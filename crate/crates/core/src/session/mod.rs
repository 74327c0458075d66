//! Session state: the version lineage, comment threads, and the
//! instrumentation event log. All mutation goes through [`Session::commit_batch`],
//! which validates a batch completely before anything is applied.

pub mod store;

use std::fmt;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clock::{Clock, SystemClock};
use crate::doc::{DocError, DocumentVersion, SegmentationConfig, VersionId};
use crate::llm::ReplyAction;
use crate::thread::{CommentThread, QueryId, ThreadId, ThreadState};

pub use store::SessionStore;

pub type SessionId = String;

pub const DEFAULT_SNAPSHOT_INTERVAL_SECS: u64 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Disables user-initiated threads and replies inside threads.
    pub study_mode: bool,
    pub snapshot_interval_secs: u64,
    /// Whether proposals bound through an expanded window get one refine prompt.
    pub refine_ambiguous: bool,
    pub segmentation: SegmentationConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            study_mode: false,
            snapshot_interval_secs: DEFAULT_SNAPSHOT_INTERVAL_SECS,
            refine_ambiguous: true,
            segmentation: SegmentationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClipboardSource {
    Document,
    FeedbackPane,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipboardPayload {
    pub text: String,
    pub source: ClipboardSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    Copy(ClipboardPayload),
    Paste(ClipboardPayload),
    Snapshot {
        version_id: VersionId,
    },
    Query {
        query_id: QueryId,
        query: String,
        version_id: VersionId,
        created_threads: Vec<ThreadId>,
        rejected: usize,
    },
    Reply {
        thread_id: ThreadId,
        version_id: VersionId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        action: Option<ReplyAction>,
    },
    Edit {
        base_version_id: VersionId,
        version_id: VersionId,
        edit_count: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Copy,
    Paste,
    Snapshot,
    Query,
    Reply,
    Edit,
}

impl EventBody {
    pub fn kind(&self) -> EventKind {
        match self {
            EventBody::Copy(_) => EventKind::Copy,
            EventBody::Paste(_) => EventKind::Paste,
            EventBody::Snapshot { .. } => EventKind::Snapshot,
            EventBody::Query { .. } => EventKind::Query,
            EventBody::Reply { .. } => EventKind::Reply,
            EventBody::Edit { .. } => EventKind::Edit,
        }
    }
}

/// One instrumentation record: `{"timestamp": .., "kind": .., "payload": ..}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub body: EventBody,
}

impl Event {
    pub fn new(timestamp: DateTime<Utc>, body: EventBody) -> Self {
        Event { timestamp, body }
    }

    pub fn kind(&self) -> EventKind {
        self.body.kind()
    }
}

/// A unit of durable state. Threads are upserted by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", content = "data", rename_all = "snake_case")]
pub enum CommitItem {
    Version(DocumentVersion),
    Thread(CommentThread),
    Event(Event),
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("version mismatch: expected {expected}, got {found}")]
    VersionMismatch { expected: VersionId, found: VersionId },
    #[error("version {0} is not in this session's lineage")]
    UnknownVersion(VersionId),
    #[error("event at {found} is earlier than the last event at {last}")]
    OutOfOrder { last: DateTime<Utc>, found: DateTime<Utc> },
    #[error("storage failure: {0}")]
    StorageFailure(String),
    #[error("session {0} is locked by another writer")]
    Locked(String),
    #[error("session {0} not found")]
    NotFound(String),
    #[error("corrupt session data: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Doc(#[from] DocError),
}

impl From<std::io::Error> for SessionError {
    fn from(e: std::io::Error) -> Self {
        SessionError::StorageFailure(e.to_string())
    }
}

/// Read-only selector for [`Session::query`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Query {
    History,
    Threads(Option<ThreadState>),
    Events(Option<EventKind>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryResult {
    History(Vec<Arc<DocumentVersion>>),
    Threads(Vec<CommentThread>),
    Events(Vec<Event>),
}

pub struct Session {
    session_id: SessionId,
    config: SessionConfig,
    versions: Vec<Arc<DocumentVersion>>,
    threads: Vec<CommentThread>,
    events: Vec<Event>,
    cached_version_id: VersionId,
    clock: Arc<dyn Clock>,
    journal: Option<store::Journal>,
}

impl fmt::Debug for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session")
            .field("session_id", &self.session_id)
            .field("head_version_id", &self.head().version_id())
            .field("threads", &self.threads.len())
            .field("events", &self.events.len())
            .field("persistent", &self.journal.is_some())
            .finish()
    }
}

impl Session {
    /// New in-memory session with a random id.
    pub fn open(text: &str, config: SessionConfig) -> Session {
        Self::with_clock(uuid::Uuid::new_v4().simple().to_string(), text, config, Arc::new(SystemClock))
    }

    pub fn open_bytes(bytes: &[u8], config: SessionConfig) -> Result<Session, SessionError> {
        let text = std::str::from_utf8(bytes).map_err(|e| DocError::InvalidEncoding(e.to_string()))?;
        Ok(Self::open(text, config))
    }

    pub fn with_clock(session_id: SessionId, text: &str, config: SessionConfig, clock: Arc<dyn Clock>) -> Session {
        let v0 = DocumentVersion::ingest(text, config.segmentation.clone()).with_timestamp(clock.now());
        Session {
            session_id,
            config,
            versions: vec![Arc::new(v0)],
            threads: Vec::new(),
            events: Vec::new(),
            cached_version_id: 0,
            clock,
            journal: None,
        }
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn is_persistent(&self) -> bool {
        self.journal.is_some()
    }

    pub fn head(&self) -> &Arc<DocumentVersion> {
        self.versions.last().expect("lineage always holds version 0")
    }

    pub fn version(&self, id: VersionId) -> Option<&Arc<DocumentVersion>> {
        usize::try_from(id).ok().and_then(|i| self.versions.get(i))
    }

    pub fn history(&self) -> &[Arc<DocumentVersion>] {
        &self.versions
    }

    /// Version the next meta-query diffs against.
    pub fn cached_version_id(&self) -> VersionId {
        self.cached_version_id
    }

    pub fn threads(&self) -> &[CommentThread] {
        &self.threads
    }

    pub fn thread(&self, id: &str) -> Option<&CommentThread> {
        self.threads.iter().find(|t| t.thread_id == id)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn query(&self, q: Query) -> QueryResult {
        match q {
            Query::History => QueryResult::History(self.versions.clone()),
            Query::Threads(state) => QueryResult::Threads(
                self.threads.iter().filter(|t| state.is_none_or(|s| t.state == s)).cloned().collect(),
            ),
            Query::Events(kind) => QueryResult::Events(
                self.events.iter().filter(|e| kind.is_none_or(|k| e.kind() == k)).cloned().collect(),
            ),
        }
    }

    /// A timestamp no earlier than the last recorded event.
    pub fn stamp(&self) -> DateTime<Utc> {
        let now = self.clock.now();
        self.events.last().map_or(now, |e| now.max(e.timestamp))
    }

    pub(crate) fn next_thread_id(&self) -> ThreadId {
        format!("{}-t{}", self.session_id, self.threads.len() + 1)
    }

    pub(crate) fn next_anchor_id(&self) -> u64 {
        self.threads.iter().map(|t| t.anchor.anchor_id).max().map_or(1, |m| m + 1)
    }

    pub(crate) fn next_query_id(&self) -> QueryId {
        self.events.iter().filter(|e| e.kind() == EventKind::Query).count() as QueryId + 1
    }

    /// Hash over everything durable, for round-trip checks.
    pub fn state_hash(&self) -> String {
        #[derive(Serialize)]
        struct State<'a> {
            session_id: &'a str,
            config: &'a SessionConfig,
            versions: Vec<&'a DocumentVersion>,
            threads: &'a [CommentThread],
            events: &'a [Event],
            cached_version_id: VersionId,
        }
        let state = State {
            session_id: &self.session_id,
            config: &self.config,
            versions: self.versions.iter().map(|v| v.as_ref()).collect(),
            threads: &self.threads,
            events: &self.events,
            cached_version_id: self.cached_version_id,
        };
        let json = serde_json::to_vec(&state).expect("session state serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn commit(&mut self, item: CommitItem) -> Result<(), SessionError> {
        self.commit_batch(vec![item])
    }

    /// Validates the whole batch, writes it durably (when persistent), then
    /// applies it. On error nothing changes.
    pub fn commit_batch(&mut self, items: Vec<CommitItem>) -> Result<(), SessionError> {
        if items.is_empty() {
            return Ok(());
        }
        self.validate(&items)?;
        if let Some(journal) = self.journal.as_mut() {
            journal.append(&items)?;
        }
        self.apply(items);
        Ok(())
    }

    fn validate(&self, items: &[CommitItem]) -> Result<(), SessionError> {
        let mut head = self.head().version_id();
        let mut last_event = self.events.last().map(|e| e.timestamp);
        let known = |id: VersionId, head: VersionId| if id <= head { Ok(()) } else { Err(SessionError::UnknownVersion(id)) };
        for item in items {
            match item {
                CommitItem::Version(v) => {
                    if v.version_id() != head + 1 {
                        return Err(SessionError::VersionMismatch { expected: head + 1, found: v.version_id() });
                    }
                    if v.parent_id() != Some(head) {
                        return Err(SessionError::VersionMismatch {
                            expected: head,
                            found: v.parent_id().unwrap_or(VersionId::MAX),
                        });
                    }
                    head = v.version_id();
                }
                CommitItem::Thread(t) => {
                    known(t.anchor.version_id, head)?;
                    known(t.baseline.version_id, head)?;
                    for m in &t.messages {
                        known(m.at_version_id, head)?;
                    }
                }
                CommitItem::Event(e) => {
                    if let Some(last) = last_event.filter(|last| e.timestamp < *last) {
                        return Err(SessionError::OutOfOrder { last, found: e.timestamp });
                    }
                    last_event = Some(e.timestamp);
                    match &e.body {
                        EventBody::Snapshot { version_id }
                        | EventBody::Query { version_id, .. }
                        | EventBody::Reply { version_id, .. } => known(*version_id, head)?,
                        EventBody::Edit { base_version_id, version_id, .. } => {
                            known(*base_version_id, head)?;
                            known(*version_id, head)?;
                        }
                        EventBody::Copy(_) | EventBody::Paste(_) => {}
                    }
                }
            }
        }
        Ok(())
    }

    fn apply(&mut self, items: Vec<CommitItem>) {
        for item in items {
            match item {
                CommitItem::Version(v) => self.versions.push(Arc::new(v)),
                CommitItem::Thread(t) => match self.threads.iter_mut().find(|x| x.thread_id == t.thread_id) {
                    Some(slot) => *slot = t,
                    None => self.threads.push(t),
                },
                CommitItem::Event(e) => {
                    if let EventBody::Query { version_id, .. } = e.body {
                        self.cached_version_id = version_id;
                    }
                    self.events.push(e);
                }
            }
        }
    }

    /// Everything needed to rebuild this session, in commit order.
    pub(crate) fn to_items(&self) -> Vec<CommitItem> {
        let versions = self.versions.iter().skip(1).map(|v| CommitItem::Version(v.as_ref().clone()));
        let threads = self.threads.iter().cloned().map(CommitItem::Thread);
        let events = self.events.iter().cloned().map(CommitItem::Event);
        versions.chain(threads).chain(events).collect()
    }
}
