//! Comment threads attached to anchors.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::anchor::{Anchor, Rejection};
use crate::doc::VersionId;
use crate::llm::ReplyAction;

pub type ThreadId = String;
pub type QueryId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Origin {
    MetaQuery { query_id: QueryId },
    UserInitiated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Author {
    User,
    Ai,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub author: Author,
    pub text: String,
    pub at_version_id: VersionId,
    pub timestamp: DateTime<Utc>,
    /// What an AI reply decided to do with the earlier feedback.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ReplyAction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreadState {
    Open,
    Resolved,
    Orphaned,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentThread {
    pub thread_id: ThreadId,
    pub anchor: Anchor,
    pub origin: Origin,
    pub messages: Vec<Message>,
    pub state: ThreadState,
    /// The anchor as it stood at the most recent turn. Replies diff the
    /// document against this, not against the continuously refreshed anchor.
    pub baseline: Anchor,
}

impl CommentThread {
    pub fn new(thread_id: ThreadId, anchor: Anchor, origin: Origin) -> Self {
        let state = if anchor.is_orphaned() { ThreadState::Orphaned } else { ThreadState::Open };
        CommentThread { thread_id, baseline: anchor.clone(), anchor, origin, messages: Vec::new(), state }
    }

    /// The comment that opened the thread.
    pub fn opening(&self) -> Option<&Message> {
        self.messages.first()
    }

    pub(crate) fn push(&mut self, mut message: Message) {
        if let Some(last) = self.messages.last() {
            message.timestamp = message.timestamp.max(last.timestamp);
        }
        self.messages.push(message);
    }

    /// Orphaned anchors orphan the thread; the thread itself is kept.
    pub(crate) fn set_anchor(&mut self, anchor: Anchor) {
        if anchor.is_orphaned() {
            self.state = ThreadState::Orphaned;
        }
        self.anchor = anchor;
    }

    /// Marks the thread resolved. Orphaned threads stay orphaned.
    pub fn resolve(&mut self) {
        if self.state == ThreadState::Open {
            self.state = ThreadState::Resolved;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaQueryResult {
    pub query_id: QueryId,
    pub created_threads: Vec<ThreadId>,
    pub rejected: Vec<Rejection>,
    pub raw_proposal_count: usize,
}
