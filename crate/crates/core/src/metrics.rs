//! Revision metrics computed from an instrumentation log.
//!
//! - `copy_paste_actions`: number of paste events.
//! - `words_pasted_per_action`: whitespace-token count of each pasted payload,
//!   and their mean (0 when there are no pastes).
//! - `percent_document_changed`: word-level Levenshtein distance between the
//!   initial and final texts divided by the larger word count, in `[0, 1]`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::session::store::JournalRecord;
use crate::session::{ClipboardSource, Event, EventBody};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordsPerAction {
    pub mean: f64,
    pub per_event: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisionMetrics {
    pub copy_paste_actions: usize,
    pub words_pasted_per_action: WordsPerAction,
    pub percent_document_changed: f64,
    pub source_breakdown: BTreeMap<ClipboardSource, usize>,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("event {index} is earlier than the event before it")]
    OutOfOrder { index: usize },
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Levenshtein distance over whitespace tokens (unit costs).
pub fn word_edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<&str> = a.split_whitespace().collect();
    let b: Vec<&str> = b.split_whitespace().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut row = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            row[j + 1] = sub.min(prev[j + 1] + 1).min(row[j] + 1);
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[b.len()]
}

pub fn percent_changed(initial: &str, final_text: &str) -> f64 {
    let denom = word_count(initial).max(word_count(final_text));
    if denom == 0 {
        return 0.0;
    }
    word_edit_distance(initial, final_text) as f64 / denom as f64
}

pub fn compute(events: &[Event], initial: &str, final_text: &str) -> RevisionMetrics {
    let mut per_event = Vec::new();
    let mut source_breakdown = BTreeMap::new();
    for e in events {
        if let EventBody::Paste(p) = &e.body {
            per_event.push(word_count(&p.text));
            *source_breakdown.entry(p.source).or_insert(0) += 1;
        }
    }
    let mean = if per_event.is_empty() {
        0.0
    } else {
        per_event.iter().sum::<usize>() as f64 / per_event.len() as f64
    };
    RevisionMetrics {
        copy_paste_actions: per_event.len(),
        words_pasted_per_action: WordsPerAction { mean, per_event },
        percent_document_changed: percent_changed(initial, final_text),
        source_breakdown,
    }
}

fn events_of(record: JournalRecord, out: &mut Vec<Event>) {
    match record {
        JournalRecord::Event(e) => out.push(e),
        JournalRecord::Batch(inner) => inner.into_iter().for_each(|r| events_of(r, out)),
        JournalRecord::Version(_) | JournalRecord::Thread(_) => {}
    }
}

fn parse_line(value: Value, line: usize, out: &mut Vec<Event>) -> Result<(), LogError> {
    let malformed = |e: serde_json::Error| LogError::Malformed { line, reason: e.to_string() };
    if value.get("record").is_some() {
        events_of(serde_json::from_value(value).map_err(malformed)?, out);
    } else {
        out.push(serde_json::from_value(value).map_err(malformed)?);
    }
    Ok(())
}

/// Reads an event log: a JSON array of events, newline-delimited events, or
/// a session journal (non-event records are skipped). Events must be in
/// time order.
pub fn load_events(text: &str) -> Result<Vec<Event>, LogError> {
    let mut out = Vec::new();
    if text.trim_start().starts_with('[') {
        let items: Vec<Value> =
            serde_json::from_str(text).map_err(|e| LogError::Malformed { line: e.line(), reason: e.to_string() })?;
        for item in items {
            parse_line(item, 1, &mut out)?;
        }
    } else {
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let value: Value =
                serde_json::from_str(line).map_err(|e| LogError::Malformed { line: i + 1, reason: e.to_string() })?;
            parse_line(value, i + 1, &mut out)?;
        }
    }
    if let Some(index) = out.windows(2).position(|w| w[1].timestamp < w[0].timestamp) {
        return Err(LogError::OutOfOrder { index: index + 1 });
    }
    Ok(out)
}

impl RevisionMetrics {
    /// Plain-text table for terminals.
    pub fn table(&self) -> String {
        let mut rows = vec![
            ("copy-paste actions".to_owned(), self.copy_paste_actions.to_string()),
            ("words pasted per action (mean)".to_owned(), format!("{:.2}", self.words_pasted_per_action.mean)),
            ("document changed".to_owned(), format!("{:.2}%", self.percent_document_changed * 100.0)),
        ];
        for (source, n) in &self.source_breakdown {
            let name = serde_json::to_value(source).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
            rows.push((format!("pastes from {name}"), n.to_string()));
        }
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter().map(|(k, v)| format!("{k:<width$}  {v}\n")).collect()
    }
}
