//! Command-line front end: batch annotation, edit-script replay, metrics and
//! the HTTP server.
//!
//! Exit codes: 0 success, 2 provider/schema failure or replay violation,
//! 3 unreadable or malformed input, 1 anything else.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::anchor::{Acw, AnchorStatus, Rejection};
use crate::api::{self, AppState, ServiceConfig};
use crate::clock::SystemClock;
use crate::doc::{Edit, Span};
use crate::llm::{MockProvider, Provider};
use crate::metrics;
use crate::pipeline::{self, PipelineError};
use crate::session::{store, Session, SessionConfig, SessionError, SessionStore};
use crate::thread::{CommentThread, ThreadState};

#[derive(Debug, Parser)]
#[command(name = "textanchor", version, about = "Anchored feedback on plain-text and markdown documents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one document-wide query and print the anchored comments as JSON.
    Annotate {
        #[arg(long)]
        doc: PathBuf,
        #[arg(long)]
        query: String,
        /// Scripted responses instead of a live model.
        #[arg(long)]
        mock: Option<PathBuf>,
        /// Write JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write an annotated markdown rendering.
        #[arg(long)]
        markdown: Option<PathBuf>,
        /// Persist the resulting session into this (new) directory.
        #[arg(long)]
        session: Option<PathBuf>,
        /// Service config file, for the provider settings.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Apply edit batches to a stored session and report anchor status changes.
    Replay {
        #[arg(long)]
        session: PathBuf,
        /// JSON array of edit batches (arrays of edits).
        #[arg(long)]
        script: PathBuf,
    },
    /// Compute revision metrics from an event log and two document texts.
    Metrics {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        initial: PathBuf,
        #[arg(long = "final")]
        final_text: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        listen: Option<String>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {reason}")]
    Input { path: PathBuf, reason: String },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{0} invariant violation(s)")]
    Violations(usize),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input { .. } => 3,
            CliError::Pipeline(PipelineError::Provider(_) | PipelineError::Schema(_)) => 2,
            CliError::Violations(_) => 2,
            CliError::Session(SessionError::NotFound(_) | SessionError::Corrupt(_)) => 3,
            _ => 1,
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Input { path: path.to_owned(), reason: e.to_string() })?;
    String::from_utf8(bytes).map_err(|e| CliError::Input { path: path.to_owned(), reason: format!("not UTF-8: {e}") })
}

/// Deterministic annotate output: no timestamps, no random ids.
#[derive(Debug, Serialize)]
pub struct Annotation {
    pub query: String,
    pub threads: Vec<AnnotatedThread>,
    pub rejected: Vec<Rejection>,
    pub raw_proposal_count: usize,
}

#[derive(Debug, Serialize)]
pub struct AnnotatedThread {
    pub thread_id: String,
    pub span: Option<Span>,
    pub anchor_text: String,
    pub acw: Option<Acw>,
    pub comment: String,
}

pub const ANNOTATE_SESSION_ID: &str = "annotate";

/// Runs the meta-query pipeline over `text` and returns the session with the
/// deterministic summary.
pub fn annotate(text: &str, query: &str, provider: &dyn Provider) -> Result<(Session, Annotation), PipelineError> {
    let mut session =
        Session::with_clock(ANNOTATE_SESSION_ID.into(), text, SessionConfig::default(), Arc::new(SystemClock));
    let result = pipeline::run_meta_query(&mut session, provider, query)?;
    let threads = result
        .created_threads
        .iter()
        .filter_map(|id| session.thread(id))
        .map(|t| AnnotatedThread {
            thread_id: t.thread_id.clone(),
            span: t.anchor.span,
            anchor_text: t.anchor.anchor_text.clone(),
            acw: t.anchor.acw.clone(),
            comment: t.opening().map(|m| m.text.clone()).unwrap_or_default(),
        })
        .collect();
    let annotation = Annotation {
        query: query.to_owned(),
        threads,
        rejected: result.rejected,
        raw_proposal_count: result.raw_proposal_count,
    };
    Ok((session, annotation))
}

pub fn annotation_json(a: &Annotation) -> String {
    let mut s = serde_json::to_string_pretty(a).expect("annotation serializes");
    s.push('\n');
    s
}

/// Marks each anchor as `{==text==}[^n]` and lists comments as footnotes.
/// An anchor overlapping an earlier one gets only its footnote reference,
/// placed after the earlier highlight.
pub fn render_markdown(text: &str, threads: &[AnnotatedThread]) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut marks: Vec<(usize, &AnnotatedThread)> = threads.iter().enumerate().map(|(i, t)| (i + 1, t)).collect();
    marks.sort_by_key(|(n, t)| (t.span.map_or(usize::MAX, |s| s.start), *n));

    let mut out = String::with_capacity(text.len() + threads.len() * 16);
    let mut cursor = 0;
    let mut pending: Vec<usize> = Vec::new();
    let mut open_end = 0;
    for (n, t) in &marks {
        let Some(span) = t.span else { continue };
        if span.start < open_end || span.is_empty() {
            pending.push(*n);
            continue;
        }
        out.extend(&chars[cursor..span.start]);
        for p in pending.drain(..) {
            out.push_str(&format!("[^{p}]"));
        }
        out.push_str("{==");
        out.extend(&chars[span.start..span.end]);
        out.push_str(&format!("==}}[^{n}]"));
        cursor = span.end;
        open_end = span.end;
    }
    out.extend(&chars[cursor..]);
    for p in pending {
        out.push_str(&format!("[^{p}]"));
    }
    let trimmed = out.trim_end_matches('\n').len();
    out.truncate(trimmed);
    out.push_str("\n\n");
    for (i, t) in threads.iter().enumerate() {
        out.push_str(&format!("[^{}]: {}\n", i + 1, t.comment.replace('\n', " ")));
    }
    out
}

fn provider_for(mock: Option<&Path>, config: Option<&Path>) -> Result<Box<dyn Provider>, CliError> {
    if let Some(path) = mock {
        let script = read_text(path)?;
        return Ok(Box::new(MockProvider::from_json(&script).map_err(|e| CliError::Input {
            path: path.to_owned(),
            reason: e.to_string(),
        })?));
    }
    let cfg = ServiceConfig::load(config).map_err(|e| CliError::Other(e.to_string()))?;
    cfg.provider.build().map_err(|e| CliError::Pipeline(PipelineError::Provider(e)))
}

fn write_out(path: Option<&Path>, content: &str, out: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, content).map_err(|e| CliError::Other(format!("cannot write {}: {e}", p.display()))),
        None => out.write_all(content.as_bytes()).map_err(|e| CliError::Other(e.to_string())),
    }
}

#[derive(Debug, Serialize)]
pub struct Transition {
    pub batch: usize,
    pub thread_id: String,
    pub from: AnchorStatus,
    pub to: AnchorStatus,
}

/// Invariant violations of `session`'s threads against its head.
pub fn check_threads(session: &Session) -> Vec<String> {
    let head = session.head();
    let mut problems = Vec::new();
    for t in session.threads() {
        let orphaned = t.anchor.is_orphaned();
        if orphaned != (t.state == ThreadState::Orphaned) {
            problems.push(format!("{}: thread state {:?} disagrees with anchor status", t.thread_id, t.state));
        }
        if orphaned {
            if t.anchor.span.is_some() {
                problems.push(format!("{}: orphaned anchor still has a span", t.thread_id));
            }
            continue;
        }
        let Some(span) = t.anchor.span else {
            problems.push(format!("{}: live anchor without a span", t.thread_id));
            continue;
        };
        match head.slice(span) {
            Ok(s) if s == t.anchor.anchor_text => {}
            Ok(s) => problems.push(format!("{}: span text {s:?} != anchor text {:?}", t.thread_id, t.anchor.anchor_text)),
            Err(e) => problems.push(format!("{}: {e}", t.thread_id)),
        }
        match &t.anchor.acw {
            Some(acw) if acw.span.contains(&span) && head.slice(acw.span).is_ok_and(|s| s == acw.text) => {}
            _ => problems.push(format!("{}: context window does not cover the anchor", t.thread_id)),
        }
    }
    problems
}

#[derive(Debug, Serialize)]
pub struct ReplayReport {
    pub transitions: Vec<Transition>,
    pub final_statuses: Vec<pipeline::ThreadStatus>,
    pub violations: Vec<String>,
}

/// Applies each batch to the head in turn, recording status transitions and
/// checking anchor invariants after every batch.
pub fn replay(session: &mut Session, script: &[Vec<Edit>]) -> Result<ReplayReport, CliError> {
    let status_of = |threads: &[CommentThread]| -> Vec<(String, AnchorStatus)> {
        threads.iter().map(|t| (t.thread_id.clone(), t.anchor.status)).collect()
    };
    let mut before = status_of(session.threads());
    let mut transitions = Vec::new();
    let mut violations = check_threads(session);
    for (i, batch) in script.iter().enumerate() {
        let head = session.head().version_id();
        pipeline::apply_edits(session, head, batch).map_err(|e| CliError::Input {
            path: PathBuf::from(format!("batch {}", i + 1)),
            reason: e.to_string(),
        })?;
        let after = status_of(session.threads());
        for ((id, from), (_, to)) in before.iter().zip(&after) {
            if from != to {
                transitions.push(Transition { batch: i + 1, thread_id: id.clone(), from: *from, to: *to });
            }
        }
        violations.extend(check_threads(session).into_iter().map(|v| format!("batch {}: {v}", i + 1)));
        before = after;
    }
    let final_statuses = session
        .threads()
        .iter()
        .map(|t| pipeline::ThreadStatus { thread_id: t.thread_id.clone(), status: t.anchor.status })
        .collect();
    Ok(ReplayReport { transitions, final_statuses, violations })
}

fn status_name(s: AnchorStatus) -> &'static str {
    match s {
        AnchorStatus::Intact => "intact",
        AnchorStatus::Shifted => "shifted",
        AnchorStatus::Modified => "modified",
        AnchorStatus::Orphaned => "orphaned",
    }
}

/// Runs one parsed command, writing normal output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Other(e.to_string());
    match cli.command {
        Command::Annotate { doc, query, mock, out: out_path, markdown, session, config } => {
            let text = read_text(&doc)?;
            let provider = provider_for(mock.as_deref(), config.as_deref())?;
            let (sess, annotation) = annotate(&text, &query, provider.as_ref())?;
            write_out(out_path.as_deref(), &annotation_json(&annotation), out)?;
            if let Some(md) = markdown {
                write_out(Some(&md), &render_markdown(&text, &annotation.threads), out)?;
            }
            if let Some(dir) = session {
                store::persist_to(&dir, sess)?;
            }
            Ok(())
        }
        Command::Replay { session, script } => {
            let raw = read_text(&script)?;
            let batches: Vec<Vec<Edit>> = serde_json::from_str(&raw)
                .map_err(|e| CliError::Input { path: script.clone(), reason: e.to_string() })?;
            let mut sess = store::load_dir(&session)?;
            for t in sess.threads() {
                writeln!(out, "{} {}", t.thread_id, status_name(t.anchor.status)).map_err(io)?;
            }
            let report = replay(&mut sess, &batches)?;
            for t in &report.transitions {
                writeln!(out, "batch {}: {} {} -> {}", t.batch, t.thread_id, status_name(t.from), status_name(t.to))
                    .map_err(io)?;
            }
            for v in &report.violations {
                writeln!(out, "violation: {v}").map_err(io)?;
            }
            writeln!(
                out,
                "{} batch(es), {} thread(s), {} violation(s)",
                batches.len(),
                report.final_statuses.len(),
                report.violations.len()
            )
            .map_err(io)?;
            if report.violations.is_empty() {
                Ok(())
            } else {
                Err(CliError::Violations(report.violations.len()))
            }
        }
        Command::Metrics { events, initial, final_text } => {
            let log = read_text(&events)?;
            let initial_text = read_text(&initial)?;
            let final_doc = read_text(&final_text)?;
            let events_list =
                metrics::load_events(&log).map_err(|e| CliError::Input { path: events.clone(), reason: e.to_string() })?;
            let m = metrics::compute(&events_list, &initial_text, &final_doc);
            write!(out, "{}\n{}\n", m.table(), serde_json::to_string_pretty(&m).expect("metrics serialize")).map_err(io)?;
            Ok(())
        }
        Command::Serve { config, listen } => {
            let mut cfg = ServiceConfig::load(config.as_deref()).map_err(|e| CliError::Other(e.to_string()))?;
            if let Some(l) = listen {
                cfg.listen = l;
            }
            let provider: Arc<dyn Provider> =
                Arc::from(cfg.provider.build().map_err(|e| CliError::Pipeline(PipelineError::Provider(e)))?);
            let mut state = AppState::new(provider).with_token(cfg.bearer_token.clone());
            if let Some(dir) = &cfg.store_dir {
                state = state.with_store(SessionStore::new(dir)?);
            }
            let runtime = tokio::runtime::Runtime::new().map_err(io)?;
            runtime.block_on(api::serve(&cfg.listen, Arc::new(state))).map_err(io)
        }
    }
}
