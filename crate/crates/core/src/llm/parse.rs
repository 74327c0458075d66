//! Strict validation of model output. Either the whole reply is valid or a
//! [`SchemaError`] is returned; partial results are never produced.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::anchor::AnchorProposal;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{position}: {reason}")]
pub struct SchemaError {
    /// JSON path of the offending value (`$`, `$[2].comment`, ...) or, for
    /// syntax errors, `line L column C`.
    pub position: String,
    pub reason: String,
}

impl SchemaError {
    fn at(position: impl Into<String>, reason: impl Into<String>) -> Self {
        SchemaError { position: position.into(), reason: reason.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplyAction {
    Affirm,
    Retract,
    Update,
    Acknowledge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreadReplyDecision {
    pub action: ReplyAction,
    pub reply_text: String,
}

/// Removes one surrounding fenced code block (```` ``` ```` or ```` ```json ````), if present.
fn strip_fence(raw: &str) -> &str {
    let t = raw.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let Some(body) = rest.strip_suffix("```") else {
        return t;
    };
    match body.find('\n') {
        Some(nl) if body[..nl].chars().all(|c| c.is_ascii_alphanumeric()) => body[nl + 1..].trim(),
        _ => t,
    }
}

fn parse_json(raw: &str) -> Result<Value, SchemaError> {
    serde_json::from_str(strip_fence(raw)).map_err(|e| {
        SchemaError::at(format!("line {} column {}", e.line(), e.column()), format!("invalid JSON: {e}"))
    })
}

fn check_fields(obj: &Map<String, Value>, path: &str, allowed: &[&str]) -> Result<(), SchemaError> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(SchemaError::at(format!("{path}.{k}"), "unknown field")),
        None => Ok(()),
    }
}

fn required_text(obj: &Map<String, Value>, path: &str, field: &str) -> Result<String, SchemaError> {
    match obj.get(field) {
        None => Err(SchemaError::at(format!("{path}.{field}"), "missing required field")),
        Some(Value::String(s)) if s.trim().is_empty() => {
            Err(SchemaError::at(format!("{path}.{field}"), "must be a non-empty string"))
        }
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(SchemaError::at(format!("{path}.{field}"), "must be a string")),
    }
}

fn proposal_from(value: &Value, path: &str) -> Result<AnchorProposal, SchemaError> {
    let obj = value.as_object().ok_or_else(|| SchemaError::at(path, "expected an object"))?;
    check_fields(obj, path, &["anchor_text", "acw_text", "comment"])?;
    let anchor_text = required_text(obj, path, "anchor_text")?;
    let comment = required_text(obj, path, "comment")?;
    let acw_text = match obj.get("acw_text") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) if s.trim().is_empty() => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(SchemaError::at(format!("{path}.acw_text"), "must be a string")),
    };
    Ok(AnchorProposal { anchor_text, acw_text, comment })
}

/// Parses `[{"anchor_text": str, "acw_text": str?, "comment": str}]`.
pub fn parse_proposals(raw: &str) -> Result<Vec<AnchorProposal>, SchemaError> {
    let value = parse_json(raw)?;
    let items = value.as_array().ok_or_else(|| SchemaError::at("$", "expected a top-level array"))?;
    items.iter().enumerate().map(|(i, v)| proposal_from(v, &format!("$[{i}]"))).collect()
}

/// Parses a single proposal object (the reply to a refine prompt).
pub fn parse_proposal(raw: &str) -> Result<AnchorProposal, SchemaError> {
    proposal_from(&parse_json(raw)?, "$")
}

pub fn parse_thread_reply(raw: &str) -> Result<ThreadReplyDecision, SchemaError> {
    let value = parse_json(raw)?;
    let obj = value.as_object().ok_or_else(|| SchemaError::at("$", "expected an object"))?;
    check_fields(obj, "$", &["action", "reply_text"])?;
    let action = match obj.get("action") {
        None => return Err(SchemaError::at("$.action", "missing required field")),
        Some(v) => serde_json::from_value::<ReplyAction>(v.clone()).map_err(|_| {
            SchemaError::at("$.action", "must be one of affirm, retract, update, acknowledge")
        })?,
    };
    let reply_text = required_text(obj, "$", "reply_text")?;
    Ok(ThreadReplyDecision { action, reply_text })
}
