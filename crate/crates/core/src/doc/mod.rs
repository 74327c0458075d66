//! Immutable document versions and the edits that derive one version from another.
//!
//! All offsets are Unicode scalar-value indices into the document text, half-open
//! and 0-based. Byte offsets never leave this module.

mod segment;

use std::fmt;
use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anchor::normalize::NormalizedText;

pub use segment::{segment, Level, SegmentationConfig, SegmentationIndex};

pub type VersionId = u64;

/// Half-open range of character offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub const fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub const fn point(at: usize) -> Self {
        Span { start: at, end: at }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn hull(&self, other: &Span) -> Span {
        Span::new(self.start.min(other.start), self.end.max(other.end))
    }

    pub(crate) fn check(&self, len: usize) -> Result<(), DocError> {
        if self.start > self.end || self.end > len {
            Err(DocError::SpanOutOfBounds { span: *self, len })
        } else {
            Ok(())
        }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DocError {
    #[error("document is not valid UTF-8: {0}")]
    InvalidEncoding(String),
    #[error("span {span} is outside a document of length {len}")]
    SpanOutOfBounds { span: Span, len: usize },
    #[error("edit {index} overlaps or precedes the edit before it")]
    OverlappingEdits { index: usize },
    #[error("edit {index} is malformed: {reason}")]
    InvalidEdit { index: usize, reason: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    Insert,
    Delete,
    Replace,
}

/// One splice against a source version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub kind: EditKind,
    pub at: Span,
    #[serde(default)]
    pub new_text: String,
}

impl Edit {
    pub fn insert(at: usize, text: impl Into<String>) -> Self {
        Edit { kind: EditKind::Insert, at: Span::point(at), new_text: text.into() }
    }

    pub fn delete(at: Span) -> Self {
        Edit { kind: EditKind::Delete, at, new_text: String::new() }
    }

    pub fn replace(at: Span, text: impl Into<String>) -> Self {
        Edit { kind: EditKind::Replace, at, new_text: text.into() }
    }

    fn validate(&self, index: usize, len: usize) -> Result<(), DocError> {
        self.at.check(len)?;
        match self.kind {
            EditKind::Insert if !self.at.is_empty() => {
                Err(DocError::InvalidEdit { index, reason: "insert must target an empty span" })
            }
            EditKind::Delete if !self.new_text.is_empty() => {
                Err(DocError::InvalidEdit { index, reason: "delete must not carry new text" })
            }
            _ => Ok(()),
        }
    }
}

/// An immutable snapshot of the document text.
pub struct DocumentVersion {
    version_id: VersionId,
    text: String,
    parent_id: Option<VersionId>,
    created_at: DateTime<Utc>,
    config: SegmentationConfig,
    // byte offset of every char, plus a trailing entry for text.len()
    char_bytes: Vec<usize>,
    segmentation: SegmentationIndex,
    normalized: OnceLock<NormalizedText>,
}

impl DocumentVersion {
    /// Version 0 of a new document.
    pub fn ingest(text: &str, config: SegmentationConfig) -> Self {
        Self::build(0, text.to_owned(), None, Utc::now(), config)
    }

    pub fn ingest_bytes(bytes: &[u8], config: SegmentationConfig) -> Result<Self, DocError> {
        let text =
            std::str::from_utf8(bytes).map_err(|e| DocError::InvalidEncoding(e.to_string()))?;
        Ok(Self::ingest(text, config))
    }

    pub(crate) fn build(
        version_id: VersionId,
        text: String,
        parent_id: Option<VersionId>,
        created_at: DateTime<Utc>,
        config: SegmentationConfig,
    ) -> Self {
        let mut char_bytes: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        char_bytes.push(text.len());
        let segmentation = segment(&text, &config);
        DocumentVersion {
            version_id,
            text,
            parent_id,
            created_at,
            config,
            char_bytes,
            segmentation,
            normalized: OnceLock::new(),
        }
    }

    pub fn with_timestamp(mut self, at: DateTime<Utc>) -> Self {
        self.created_at = at;
        self
    }

    pub fn version_id(&self) -> VersionId {
        self.version_id
    }

    pub fn parent_id(&self) -> Option<VersionId> {
        self.parent_id
    }

    pub fn created_at(&self) -> DateTime<Utc> {
        self.created_at
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn config(&self) -> &SegmentationConfig {
        &self.config
    }

    pub fn segmentation(&self) -> &SegmentationIndex {
        &self.segmentation
    }

    /// Length in characters.
    pub fn len(&self) -> usize {
        self.char_bytes.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn full_span(&self) -> Span {
        Span::new(0, self.len())
    }

    pub fn slice(&self, span: Span) -> Result<&str, DocError> {
        span.check(self.len())?;
        Ok(&self.text[self.char_bytes[span.start]..self.char_bytes[span.end]])
    }

    pub fn window_at(&self, span: Span, level: Level) -> Result<Span, DocError> {
        self.segmentation.window_at(span, level)
    }

    pub(crate) fn normalized(&self) -> &NormalizedText {
        self.normalized.get_or_init(|| NormalizedText::new(&self.text))
    }

    /// Applies edits sorted by position and non-overlapping in this version's
    /// coordinates, producing the child version.
    pub fn apply_edits(&self, edits: &[Edit]) -> Result<DocumentVersion, DocError> {
        let len = self.len();
        let mut prev_end = 0;
        for (index, edit) in edits.iter().enumerate() {
            edit.validate(index, len)?;
            if edit.at.start < prev_end {
                return Err(DocError::OverlappingEdits { index });
            }
            prev_end = edit.at.end;
        }

        let mut out = String::with_capacity(self.text.len());
        let mut cursor = 0;
        for edit in edits {
            out.push_str(&self.text[self.char_bytes[cursor]..self.char_bytes[edit.at.start]]);
            out.push_str(&edit.new_text);
            cursor = edit.at.end;
        }
        out.push_str(&self.text[self.char_bytes[cursor]..]);

        Ok(Self::build(
            self.version_id + 1,
            out,
            Some(self.version_id),
            Utc::now(),
            self.config.clone(),
        ))
    }
}

impl Clone for DocumentVersion {
    fn clone(&self) -> Self {
        DocumentVersion {
            version_id: self.version_id,
            text: self.text.clone(),
            parent_id: self.parent_id,
            created_at: self.created_at,
            config: self.config.clone(),
            char_bytes: self.char_bytes.clone(),
            segmentation: self.segmentation.clone(),
            normalized: OnceLock::new(),
        }
    }
}

impl fmt::Debug for DocumentVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DocumentVersion")
            .field("version_id", &self.version_id)
            .field("parent_id", &self.parent_id)
            .field("len", &self.len())
            .finish()
    }
}

impl PartialEq for DocumentVersion {
    fn eq(&self, other: &Self) -> bool {
        self.version_id == other.version_id
            && self.parent_id == other.parent_id
            && self.text == other.text
    }
}

#[derive(Serialize, Deserialize)]
struct VersionRecord {
    version_id: VersionId,
    text: String,
    parent_id: Option<VersionId>,
    created_at: DateTime<Utc>,
    #[serde(default)]
    config: SegmentationConfig,
}

impl Serialize for DocumentVersion {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        VersionRecord {
            version_id: self.version_id,
            text: self.text.clone(),
            parent_id: self.parent_id,
            created_at: self.created_at,
            config: self.config.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DocumentVersion {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let r = VersionRecord::deserialize(deserializer)?;
        Ok(DocumentVersion::build(r.version_id, r.text, r.parent_id, r.created_at, r.config))
    }
}
