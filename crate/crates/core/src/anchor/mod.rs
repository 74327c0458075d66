//! Anchors: verbatim spans of a document version that comments attach to.
//!
//! An anchor carries an anchoring context window (ACW), the smallest
//! hierarchical window (exact text, sentence, paragraph, section, document)
//! that pins the anchor to one location in the document.

pub mod normalize;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::{map_span, ChangeSet, MappingStatus};
use crate::doc::{DocError, DocumentVersion, Level, Span, VersionId};
use normalize::{count_occurrences, normalize};

pub type AnchorId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcwLevel {
    Exact,
    Sentence,
    Paragraph,
    Section,
    Document,
}

impl AcwLevel {
    pub const ALL: [AcwLevel; 5] =
        [AcwLevel::Exact, AcwLevel::Sentence, AcwLevel::Paragraph, AcwLevel::Section, AcwLevel::Document];

    fn segment_level(self) -> Option<Level> {
        match self {
            AcwLevel::Exact => None,
            AcwLevel::Sentence => Some(Level::Sentence),
            AcwLevel::Paragraph => Some(Level::Paragraph),
            AcwLevel::Section => Some(Level::Section),
            AcwLevel::Document => Some(Level::Document),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Acw {
    pub level: AcwLevel,
    pub span: Span,
    pub text: String,
    /// Set when even the whole document cannot single out the anchor; the
    /// anchor is then bound to the occurrence it was created from.
    #[serde(default)]
    pub ambiguity_flag: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorStatus {
    Intact,
    Shifted,
    Modified,
    Orphaned,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anchor {
    pub anchor_id: AnchorId,
    /// Version the anchor was last validated against.
    pub version_id: VersionId,
    /// `None` once orphaned.
    pub span: Option<Span>,
    pub anchor_text: String,
    pub acw: Option<Acw>,
    pub status: AnchorStatus,
}

impl Anchor {
    pub fn is_orphaned(&self) -> bool {
        self.status == AnchorStatus::Orphaned
    }

    /// Anchor at `span` with a freshly computed ACW.
    pub fn at_span(
        anchor_id: AnchorId,
        version: &DocumentVersion,
        span: Span,
    ) -> Result<Anchor, DocError> {
        let acw = expand_acw(version, span)?;
        Ok(Anchor {
            anchor_id,
            version_id: version.version_id(),
            span: Some(span),
            anchor_text: version.slice(span)?.to_owned(),
            acw: Some(acw),
            status: AnchorStatus::Intact,
        })
    }
}

/// One item of model output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorProposal {
    pub anchor_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acw_text: Option<String>,
    pub comment: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectionReason {
    Hallucinated,
    AmbiguousUnresolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub reason: RejectionReason,
    pub proposal: AnchorProposal,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnchorError {
    #[error("anchor validated at version {anchor} but change set starts at {changes}")]
    VersionMismatch { anchor: VersionId, changes: VersionId },
    #[error(transparent)]
    Doc(#[from] DocError),
}

/// Non-overlapping spans whose normalized text equals the normalized needle,
/// in document order. Punctuation the needle carries at either end (a final
/// period, opening quote, ...) is included when the document has it too.
pub fn find_occurrences(version: &DocumentVersion, needle: &str) -> Vec<Span> {
    let (prefix, suffix) = dropped_ends(needle);
    let fold = |s: &str| s.chars().flat_map(char::to_lowercase).map(normalize::fold).collect::<String>();
    let (prefix, suffix) = (fold(prefix), fold(suffix));
    let matches = version.normalized().find_all(&normalize(needle));
    let mut out = Vec::with_capacity(matches.len());
    for (i, &(mut start, mut end)) in matches.iter().enumerate() {
        let floor = out.last().map_or(0, |s: &Span| s.end);
        let ceil = matches.get(i + 1).map_or(version.len(), |m| m.0);
        let before = prefix.chars().count();
        if before > 0 && start >= floor + before
            && version.slice(Span::new(start - before, start)).is_ok_and(|t| fold(t) == prefix) {
                start -= before;
            }
        let after = suffix.chars().count();
        if after > 0 && end + after <= ceil
            && version.slice(Span::new(end, end + after)).is_ok_and(|t| fold(t) == suffix) {
                end += after;
            }
        out.push(Span::new(start, end));
    }
    out
}

/// Leading and trailing runs of `needle` (inside surrounding whitespace)
/// that normalization removes.
fn dropped_ends(needle: &str) -> (&str, &str) {
    let t = needle.trim();
    let gone = |c: char| normalize(&c.to_string()).is_empty() && !c.is_whitespace();
    let head = t.char_indices().find(|&(_, c)| !gone(c)).map_or(t.len(), |(b, _)| b);
    if head == t.len() {
        return ("", "");
    }
    let tail = t.char_indices().rev().find(|&(_, c)| !gone(c)).map_or(0, |(b, c)| b + c.len_utf8());
    (&t[..head], &t[tail..])
}

/// Whether a window whose normalized text is `window` pins the anchor whose
/// normalized text is `anchor` inside a document normalized as `doc`.
pub(crate) fn pins(doc: &str, window: &str, anchor: &str) -> bool {
    !window.is_empty()
        && count_occurrences(doc, window) == 1
        && count_occurrences(window, anchor) == 1
}

/// Smallest window around `span` that identifies it uniquely.
///
/// A window is accepted when its normalized text occurs exactly once in the
/// normalized document and the anchor text occurs exactly once inside it.
/// Falls back to the whole document with `ambiguity_flag` set.
pub fn expand_acw(version: &DocumentVersion, span: Span) -> Result<Acw, DocError> {
    span.check(version.len())?;
    let doc = version.normalized().as_str();
    let anchor = normalize(version.slice(span)?);

    for level in &AcwLevel::ALL[..4] {
        let window = match level.segment_level() {
            None => span,
            Some(l) => version.window_at(span, l)?,
        };
        if window.is_empty() {
            continue;
        }
        let text = version.slice(window)?;
        if pins(doc, &normalize(text), &anchor) {
            return Ok(Acw { level: *level, span: window, text: text.to_owned(), ambiguity_flag: false });
        }
    }

    let full = version.full_span();
    Ok(Acw {
        level: AcwLevel::Document,
        span: full,
        text: version.text().to_owned(),
        ambiguity_flag: count_occurrences(doc, &anchor) != 1,
    })
}

/// Maps a model proposal onto the document, or explains why it cannot be.
pub fn resolve_proposal(
    version: &DocumentVersion,
    proposal: &AnchorProposal,
    anchor_id: AnchorId,
) -> Result<Anchor, Rejection> {
    let reject = |reason| Rejection { reason, proposal: proposal.clone() };
    let occurrences = find_occurrences(version, &proposal.anchor_text);
    let span = match occurrences.as_slice() {
        [] => return Err(reject(RejectionReason::Hallucinated)),
        [only] => *only,
        many => {
            let windows = proposal
                .acw_text
                .as_deref()
                .filter(|t| !normalize(t).is_empty())
                .map(|t| find_occurrences(version, t))
                .unwrap_or_default();
            let mut candidates = many.iter().filter(|o| windows.iter().any(|w| w.contains(o)));
            match (candidates.next(), candidates.next()) {
                (Some(only), None) => *only,
                _ => return Err(reject(RejectionReason::AmbiguousUnresolved)),
            }
        }
    };
    Anchor::at_span(anchor_id, version, span).map_err(|_| reject(RejectionReason::Hallucinated))
}

/// Carries an anchor across a change set onto `new`.
pub fn reanchor(
    anchor: &Anchor,
    cs: &ChangeSet,
    new: &DocumentVersion,
) -> Result<Anchor, AnchorError> {
    if anchor.version_id != cs.old_version_id {
        return Err(AnchorError::VersionMismatch { anchor: anchor.version_id, changes: cs.old_version_id });
    }
    if new.version_id() != cs.new_version_id {
        return Err(AnchorError::VersionMismatch { anchor: new.version_id(), changes: cs.new_version_id });
    }
    let mut next = anchor.clone();
    next.version_id = new.version_id();
    let Some(span) = anchor.span.filter(|_| !anchor.is_orphaned()) else {
        return Ok(next);
    };

    let old_len = cs.old_len(new.len());
    let mapping = map_span(span, cs, old_len)?;
    match (mapping.status, mapping.new_span) {
        (MappingStatus::Deleted, _) | (_, None) => {
            next.status = AnchorStatus::Orphaned;
            next.span = None;
            next.acw = None;
        }
        (status, Some(new_span)) => {
            next.status = match status {
                MappingStatus::Intact => AnchorStatus::Intact,
                MappingStatus::Shifted => AnchorStatus::Shifted,
                _ => AnchorStatus::Modified,
            };
            next.span = Some(new_span);
            next.anchor_text = new.slice(new_span)?.to_owned();
            next.acw = Some(expand_acw(new, new_span)?);
        }
    }
    Ok(next)
}
