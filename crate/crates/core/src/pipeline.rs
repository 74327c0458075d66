//! End-to-end flows over a [`Session`]: document-wide queries that produce
//! anchored threads, user threads with change-aware replies, edits and
//! snapshots that keep anchors current.
//!
//! Every flow computes its results first and commits them as one batch, so a
//! failure at any step leaves the session untouched.

use std::collections::HashSet;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anchor::normalize::normalize;
use crate::anchor::{expand_acw, reanchor, resolve_proposal, Acw, AcwLevel, AnchorError, AnchorStatus};
use crate::diff::{compute_changes, diff_texts, localize, ChangeSet, LocalizedChange, Overlap};
use crate::doc::{DocError, DocumentVersion, Edit, Level, Span, VersionId};
use crate::llm::{
    build_meta_prompt, build_refine_prompt, build_thread_prompt, labels, parse_proposal, parse_proposals,
    parse_thread_reply, Prompt, Provider, ProviderError, SchemaError,
};
use crate::session::{CommitItem, Event, EventBody, EventKind, Session, SessionError};
use crate::thread::{Author, CommentThread, Message, MetaQueryResult, Origin, ThreadId};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0} is disabled in study mode")]
    FeatureDisabled(&'static str),
    #[error("thread {0} not found")]
    ThreadNotFound(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("model output rejected: {0}")]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Doc(#[from] DocError),
    #[error(transparent)]
    Anchor(#[from] AnchorError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreadStatus {
    pub thread_id: ThreadId,
    pub status: AnchorStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditOutcome {
    pub version_id: VersionId,
    pub anchor_statuses: Vec<ThreadStatus>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotOutcome {
    pub version_id: VersionId,
    /// Whether the snapshot text differed from the head and became a version.
    pub new_version: bool,
    /// False when deduplicated against the previous snapshot.
    pub recorded: bool,
}

/// Sends `prompt`, validating with `parse`. An invalid reply gets one re-ask
/// carrying the validation error; a second invalid reply is an error.
fn ask<T>(
    provider: &dyn Provider,
    prompt: &Prompt,
    parse: fn(&str) -> Result<T, SchemaError>,
) -> Result<T, PipelineError> {
    let raw = provider.complete(prompt)?;
    match parse(&raw) {
        Ok(v) => Ok(v),
        Err(first) => {
            log::info!("re-asking after invalid model output: {first}");
            let mut retry = prompt.clone();
            retry.push(
                labels::SCHEMA_ERROR,
                format!("Your previous reply was rejected ({first}). Reply again following the required format exactly."),
            );
            let raw = provider.complete(&retry)?;
            Ok(parse(&raw)?)
        }
    }
}

fn opening_comment(t: &CommentThread) -> String {
    t.opening().map(|m| normalize(&m.text)).unwrap_or_default()
}

/// Runs a document-wide query: diff against the cached version, prompt,
/// validate, resolve each proposal, refine window-bound ones, and open one
/// thread per accepted anchor.
pub fn run_meta_query(
    session: &mut Session,
    provider: &dyn Provider,
    query: &str,
) -> Result<MetaQueryResult, PipelineError> {
    let head = session.head().clone();
    let cached = session.version(session.cached_version_id()).cloned().unwrap_or_else(|| head.clone());
    let changes = compute_changes(&cached, &head);
    let open: Vec<CommentThread> =
        session.threads().iter().filter(|t| t.state == crate::thread::ThreadState::Open).cloned().collect();

    let prompt = build_meta_prompt(query, &head, &changes, &open);
    let proposals = ask(provider, &prompt, parse_proposals)?;

    let query_id = session.next_query_id();
    let mut next_anchor = session.next_anchor_id();
    let mut seq = session.threads().len();
    let mut seen: HashSet<(Span, String)> = session
        .threads()
        .iter()
        .filter(|t| t.anchor.version_id == head.version_id())
        .filter_map(|t| t.anchor.span.map(|s| (s, opening_comment(t))))
        .collect();

    let mut rejected = Vec::new();
    let mut threads = Vec::new();
    for proposal in &proposals {
        let anchor = match resolve_proposal(&head, proposal, next_anchor) {
            Ok(a) => a,
            Err(r) => {
                rejected.push(r);
                continue;
            }
        };
        let span = anchor.span.expect("resolved anchors have a span");
        if !seen.insert((span, normalize(&proposal.comment))) {
            continue;
        }
        next_anchor += 1;

        let acw = anchor.acw.as_ref().expect("resolved anchors have a window");
        let mut comment = proposal.comment.clone();
        if session.config().refine_ambiguous && acw.level != AcwLevel::Exact {
            let refine = build_refine_prompt(proposal, acw, &head);
            match provider.complete(&refine).map_err(PipelineError::from).and_then(|raw| Ok(parse_proposal(&raw)?)) {
                Ok(refined) => comment = refined.comment,
                Err(e) => log::info!("refine failed, keeping the original comment: {e}"),
            }
        }

        seq += 1;
        let mut thread = CommentThread::new(
            format!("{}-t{seq}", session.session_id()),
            anchor,
            Origin::MetaQuery { query_id },
        );
        thread.push(Message {
            author: Author::Ai,
            text: comment,
            at_version_id: head.version_id(),
            timestamp: session.stamp(),
            action: None,
        });
        threads.push(thread);
    }

    let result = MetaQueryResult {
        query_id,
        created_threads: threads.iter().map(|t| t.thread_id.clone()).collect(),
        rejected,
        raw_proposal_count: proposals.len(),
    };
    let event = Event::new(
        session.stamp(),
        EventBody::Query {
            query_id,
            query: query.to_owned(),
            version_id: head.version_id(),
            created_threads: result.created_threads.clone(),
            rejected: result.rejected.len(),
        },
    );
    let mut items: Vec<CommitItem> = threads.into_iter().map(CommitItem::Thread).collect();
    items.push(CommitItem::Event(event));
    session.commit_batch(items)?;
    Ok(result)
}

fn document_acw(v: &DocumentVersion) -> Acw {
    Acw { level: AcwLevel::Document, span: v.full_span(), text: v.text().to_owned(), ambiguity_flag: false }
}

/// Window handed to a thread reply. When the edits since the last turn touch
/// the anchor's window, the window grows to cover both the anchor and the
/// edited region.
fn reply_context(
    session: &Session,
    thread: &CommentThread,
    head: &Arc<DocumentVersion>,
) -> Result<(crate::anchor::Anchor, Acw, LocalizedChange), PipelineError> {
    let baseline = &thread.baseline;
    let old = session.version(baseline.version_id).ok_or(SessionError::UnknownVersion(baseline.version_id))?;
    let changes = compute_changes(old, head);
    let current = reanchor(baseline, &changes, head)?;

    let Some(old_acw) = baseline.acw.as_ref() else {
        let lc = LocalizedChange { anchor_overlap: Overlap::Distant, affected_span: head.full_span(), summary: vec![] };
        return Ok((current, document_acw(head), lc));
    };
    let lc = localize(&changes, old_acw.span, old.len())?;
    let acw = match current.span {
        None => expand_acw(head, head.window_at(lc.affected_span, Level::Paragraph)?)?,
        Some(span) if lc.anchor_overlap != Overlap::Distant => expand_acw(head, lc.affected_span.hull(&span))?,
        Some(_) => current.acw.clone().expect("live anchors have a window"),
    };
    Ok((current, acw, lc))
}

/// Appends `text` from the user, asks the model, and returns the updated
/// thread and the AI message without committing.
fn converse(
    session: &Session,
    provider: &dyn Provider,
    mut thread: CommentThread,
    text: &str,
) -> Result<(CommentThread, Message), PipelineError> {
    let head = session.head().clone();
    let (anchor, acw, lc) = reply_context(session, &thread, &head)?;
    thread.push(Message {
        author: Author::User,
        text: text.to_owned(),
        at_version_id: head.version_id(),
        timestamp: session.stamp(),
        action: None,
    });
    thread.set_anchor(anchor.clone());
    let prompt = build_thread_prompt(&thread, &acw, &head, &lc);
    let decision = ask(provider, &prompt, parse_thread_reply)?;
    let reply = Message {
        author: Author::Ai,
        text: decision.reply_text,
        at_version_id: head.version_id(),
        timestamp: session.stamp(),
        action: Some(decision.action),
    };
    thread.push(reply.clone());
    thread.baseline = anchor;
    Ok((thread, reply))
}

fn commit_reply(session: &mut Session, thread: CommentThread, reply: &Message) -> Result<(), PipelineError> {
    let event = Event::new(
        session.stamp(),
        EventBody::Reply { thread_id: thread.thread_id.clone(), version_id: reply.at_version_id, action: reply.action },
    );
    session.commit_batch(vec![CommitItem::Thread(thread), CommitItem::Event(event)])?;
    Ok(())
}

/// Opens a thread on `span` (the whole document when `None`) and gets the
/// first AI reply.
pub fn create_user_thread(
    session: &mut Session,
    provider: &dyn Provider,
    span: Option<Span>,
    message: &str,
) -> Result<CommentThread, PipelineError> {
    if session.config().study_mode {
        return Err(PipelineError::FeatureDisabled("user-initiated threads"));
    }
    let head = session.head().clone();
    let span = span.unwrap_or_else(|| head.full_span());
    let anchor = crate::anchor::Anchor::at_span(session.next_anchor_id(), &head, span)?;
    let thread = CommentThread::new(session.next_thread_id(), anchor, Origin::UserInitiated);
    let (thread, reply) = converse(session, provider, thread, message)?;
    commit_reply(session, thread.clone(), &reply)?;
    Ok(thread)
}

pub fn reply_in_thread(
    session: &mut Session,
    provider: &dyn Provider,
    thread_id: &str,
    message: &str,
) -> Result<Message, PipelineError> {
    if session.config().study_mode {
        return Err(PipelineError::FeatureDisabled("thread replies"));
    }
    let thread = session.thread(thread_id).cloned().ok_or_else(|| PipelineError::ThreadNotFound(thread_id.into()))?;
    let (thread, reply) = converse(session, provider, thread, message)?;
    commit_reply(session, thread, &reply)?;
    Ok(reply)
}

/// Threads carried onto `target`. Threads already at `target` keep their
/// current status.
fn carried(session: &Session, target: &DocumentVersion) -> Result<Vec<CommentThread>, PipelineError> {
    let mut out = Vec::with_capacity(session.threads().len());
    let mut cache: Option<(VersionId, ChangeSet)> = None;
    for t in session.threads() {
        let mut t = t.clone();
        if t.anchor.version_id != target.version_id() {
            let from = t.anchor.version_id;
            if cache.as_ref().is_none_or(|(id, _)| *id != from) {
                let old = session.version(from).ok_or(SessionError::UnknownVersion(from))?;
                cache = Some((from, compute_changes(old, target)));
            }
            let (_, changes) = cache.as_ref().expect("cache filled above");
            let anchor = reanchor(&t.anchor, changes, target)?;
            t.set_anchor(anchor);
        }
        out.push(t);
    }
    Ok(out)
}

fn statuses(threads: &[CommentThread]) -> Vec<ThreadStatus> {
    threads.iter().map(|t| ThreadStatus { thread_id: t.thread_id.clone(), status: t.anchor.status }).collect()
}

fn changed_threads(session: &Session, threads: Vec<CommentThread>) -> Vec<CommitItem> {
    threads
        .into_iter()
        .filter(|t| session.thread(&t.thread_id) != Some(t))
        .map(CommitItem::Thread)
        .collect()
}

/// Re-anchors every thread onto the head version and persists the result.
pub fn refresh_anchors(session: &mut Session) -> Result<Vec<ThreadStatus>, PipelineError> {
    let head = session.head().clone();
    let threads = carried(session, &head)?;
    let report = statuses(&threads);
    let items = changed_threads(session, threads);
    session.commit_batch(items)?;
    Ok(report)
}

/// Applies an edit batch against `base_version`, which must be the head.
pub fn apply_edits(
    session: &mut Session,
    base_version: VersionId,
    edits: &[Edit],
) -> Result<EditOutcome, PipelineError> {
    let head = session.head().clone();
    if base_version != head.version_id() {
        return Err(SessionError::VersionMismatch { expected: head.version_id(), found: base_version }.into());
    }
    let next = head.apply_edits(edits)?.with_timestamp(session.clock().now());
    commit_version(
        session,
        next,
        EventBody::Edit { base_version_id: base_version, version_id: base_version + 1, edit_count: edits.len() },
    )
}

fn commit_version(session: &mut Session, next: DocumentVersion, body: EventBody) -> Result<EditOutcome, PipelineError> {
    let threads = carried(session, &next)?;
    let outcome = EditOutcome { version_id: next.version_id(), anchor_statuses: statuses(&threads) };
    let mut items = vec![CommitItem::Version(next), CommitItem::Event(Event::new(session.stamp(), body))];
    items.extend(changed_threads(session, threads));
    session.commit_batch(items)?;
    Ok(outcome)
}

/// Records a periodic snapshot of the editor text. Text equal to the head
/// creates no version; a repeat of the previous snapshot records nothing.
pub fn record_snapshot(session: &mut Session, text: &str) -> Result<SnapshotOutcome, PipelineError> {
    let head = session.head().clone();
    if text == head.text() {
        let last_snapshot = session.events().iter().rev().find_map(|e| match e.body {
            EventBody::Snapshot { version_id } => Some(version_id),
            _ => None,
        });
        if last_snapshot == Some(head.version_id()) {
            return Ok(SnapshotOutcome { version_id: head.version_id(), new_version: false, recorded: false });
        }
        let event = Event::new(session.stamp(), EventBody::Snapshot { version_id: head.version_id() });
        session.commit(CommitItem::Event(event))?;
        return Ok(SnapshotOutcome { version_id: head.version_id(), new_version: false, recorded: true });
    }
    let changes = ChangeSet {
        old_version_id: head.version_id(),
        new_version_id: head.version_id() + 1,
        changes: diff_texts(head.text(), text),
    };
    let next = head.apply_edits(&changes.as_edits())?.with_timestamp(session.clock().now());
    let version_id = next.version_id();
    commit_version(session, next, EventBody::Snapshot { version_id })?;
    Ok(SnapshotOutcome { version_id, new_version: true, recorded: true })
}

/// Appends a client-reported clipboard event. Other kinds are produced by
/// the flows above and are rejected here.
pub fn record_clipboard(
    session: &mut Session,
    body: EventBody,
    timestamp: Option<DateTime<Utc>>,
) -> Result<Event, PipelineError> {
    if !matches!(body.kind(), EventKind::Copy | EventKind::Paste) {
        return Err(SessionError::Corrupt(format!("{:?} events cannot be recorded directly", body.kind())).into());
    }
    let event = Event::new(timestamp.unwrap_or_else(|| session.stamp()), body);
    session.commit(CommitItem::Event(event.clone()))?;
    Ok(event)
}
