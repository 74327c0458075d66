//! Word-level differencing between document versions and span remapping.
//!
//! Text is tokenized into alternating runs of whitespace and non-whitespace,
//! diffed with Myers' shortest edit script, and adjacent token edits are
//! coalesced into insert/delete/replace runs.

use serde::{Deserialize, Serialize};
use similar::algorithms::{myers, Capture};
use similar::DiffOp;

use crate::doc::{DocError, DocumentVersion, Edit, EditKind, Span, VersionId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    Insert,
    Delete,
    Replace,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Change {
    pub kind: ChangeKind,
    pub old_span: Span,
    pub new_span: Span,
    pub old_text: String,
    pub new_text: String,
}

impl Change {
    /// Whether this change touches the old-coordinate span.
    ///
    /// An insertion touches only when it lands strictly inside; one at
    /// `span.start` goes before the span and one at `span.end` after it.
    fn touches(&self, span: Span) -> bool {
        if self.old_span.is_empty() {
            span.start < self.old_span.start && self.old_span.start < span.end
        } else if span.is_empty() {
            self.old_span.start < span.start && span.start < self.old_span.end
        } else {
            self.old_span.overlaps(&span)
        }
    }

    fn adjacent(&self, span: Span) -> bool {
        self.old_span.end == span.start || self.old_span.start == span.end
    }

    fn delta(&self) -> isize {
        self.new_span.len() as isize - self.old_span.len() as isize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeSet {
    pub old_version_id: VersionId,
    pub new_version_id: VersionId,
    pub changes: Vec<Change>,
}

impl ChangeSet {
    pub fn is_empty(&self) -> bool {
        self.changes.is_empty()
    }

    pub fn as_edits(&self) -> Vec<Edit> {
        self.changes
            .iter()
            .map(|c| Edit {
                kind: match c.kind {
                    ChangeKind::Insert => EditKind::Insert,
                    ChangeKind::Delete => EditKind::Delete,
                    ChangeKind::Replace => EditKind::Replace,
                },
                at: c.old_span,
                new_text: c.new_text.clone(),
            })
            .collect()
    }

    /// Rebuilds the new text from the old one.
    pub fn replay(&self, old_text: &str) -> String {
        let chars: Vec<char> = old_text.chars().collect();
        let mut out = String::with_capacity(old_text.len());
        let mut cursor = 0;
        for c in &self.changes {
            out.extend(&chars[cursor..c.old_span.start]);
            out.push_str(&c.new_text);
            cursor = c.old_span.end;
        }
        out.extend(&chars[cursor.min(chars.len())..]);
        out
    }

    /// Length of the old document given the new one's.
    pub fn old_len(&self, new_len: usize) -> usize {
        let delta: isize = self.changes.iter().map(Change::delta).sum();
        (new_len as isize - delta) as usize
    }

    /// Number of tokens deleted plus tokens inserted. Whitespace a run
    /// bridges is unchanged and not counted.
    pub fn token_edit_count(&self) -> usize {
        self.changes
            .iter()
            .map(|c| {
                let a = token_strs(&c.old_text, &tokenize(&c.old_text));
                let b = token_strs(&c.new_text, &tokenize(&c.new_text));
                token_ops(&a, &b)
                    .iter()
                    .map(|op| match *op {
                        DiffOp::Equal { .. } => 0,
                        DiffOp::Delete { old_len, .. } => old_len,
                        DiffOp::Insert { new_len, .. } => new_len,
                        DiffOp::Replace { old_len, new_len, .. } => old_len + new_len,
                    })
                    .sum::<usize>()
            })
            .sum()
    }
}

/// Alternating whitespace / non-whitespace runs as char spans.
pub fn tokenize(text: &str) -> Vec<Span> {
    let mut tokens = Vec::new();
    let mut start = 0;
    let mut prev: Option<bool> = None;
    let mut n = 0;
    for (i, c) in text.chars().enumerate() {
        let ws = c.is_whitespace();
        if prev.is_some_and(|p| p != ws) {
            tokens.push(Span::new(start, i));
            start = i;
        }
        prev = Some(ws);
        n = i + 1;
    }
    if n > start {
        tokens.push(Span::new(start, n));
    }
    tokens
}

fn token_strs<'a>(text: &'a str, tokens: &[Span]) -> Vec<&'a str> {
    let bytes: Vec<usize> =
        text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len())).collect();
    tokens.iter().map(|t| &text[bytes[t.start]..bytes[t.end]]).collect()
}

/// Raw Myers script (equal / insert / delete only) over token slices.
fn token_ops(a: &[&str], b: &[&str]) -> Vec<DiffOp> {
    let mut capture = Capture::new();
    let Ok(()) = myers::diff(&mut capture, a, 0..a.len(), b, 0..b.len());
    capture.into_ops()
}

pub fn compute_changes(old: &DocumentVersion, new: &DocumentVersion) -> ChangeSet {
    let changes = diff_texts(old.text(), new.text());
    ChangeSet { old_version_id: old.version_id(), new_version_id: new.version_id(), changes }
}

pub fn diff_texts(old: &str, new: &str) -> Vec<Change> {
    let old_tokens = tokenize(old);
    let new_tokens = tokenize(new);
    let a = token_strs(old, &old_tokens);
    let b = token_strs(new, &new_tokens);
    let ops = token_ops(&a, &b);

    // coalesce every maximal run of non-equal ops, in token coordinates
    let mut runs: Vec<(std::ops::Range<usize>, std::ops::Range<usize>)> = Vec::new();
    let mut open: Option<(std::ops::Range<usize>, std::ops::Range<usize>)> = None;
    for op in ops {
        if let DiffOp::Equal { .. } = op {
            runs.extend(open.take());
            continue;
        }
        let (o, n) = (op.old_range(), op.new_range());
        open = Some(match open {
            Some((po, pn)) => (po.start..o.end, pn.start..n.end),
            None => (o, n),
        });
    }
    runs.extend(open);

    // runs separated by a single whitespace token touch at word level: the
    // edit rewrote a phrase, so report it as one run
    let mut merged: Vec<(std::ops::Range<usize>, std::ops::Range<usize>)> = Vec::with_capacity(runs.len());
    for (o, n) in runs {
        if let Some((po, pn)) = merged.last_mut() {
            if o.start == po.end + 1 && a[po.end].trim().is_empty() {
                po.end = o.end;
                pn.end = n.end;
                continue;
            }
        }
        merged.push((o, n));
    }
    let runs = merged;

    let old_chars: Vec<char> = old.chars().collect();
    let new_chars: Vec<char> = new.chars().collect();
    let char_span = |tokens: &[Span], r: &std::ops::Range<usize>, len: usize| -> Span {
        if r.is_empty() {
            let at = tokens.get(r.start).map_or(len, |t| t.start);
            Span::point(at)
        } else {
            Span::new(tokens[r.start].start, tokens[r.end - 1].end)
        }
    };

    runs.into_iter()
        .map(|(o, n)| {
            let old_span = char_span(&old_tokens, &o, old_chars.len());
            let new_span = char_span(&new_tokens, &n, new_chars.len());
            let kind = match (old_span.is_empty(), new_span.is_empty()) {
                (true, _) => ChangeKind::Insert,
                (false, true) => ChangeKind::Delete,
                (false, false) => ChangeKind::Replace,
            };
            Change {
                kind,
                old_span,
                new_span,
                old_text: old_chars[old_span.start..old_span.end].iter().collect(),
                new_text: new_chars[new_span.start..new_span.end].iter().collect(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingStatus {
    Intact,
    Shifted,
    Modified,
    Deleted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanMapping {
    pub status: MappingStatus,
    pub new_span: Option<Span>,
}

struct Image<'a> {
    span: Span,
    touching: Vec<&'a Change>,
}

/// Where `span` lands in the new version, and the changes that touch it.
fn image<'a>(span: Span, cs: &'a ChangeSet) -> Image<'a> {
    let touching: Vec<&Change> = cs.changes.iter().filter(|c| c.touches(span)).collect();

    let start = match touching.iter().find(|c| !c.old_span.is_empty() && c.old_span.start <= span.start) {
        Some(c) => c.new_span.start,
        None => {
            let shift: isize =
                cs.changes.iter().filter(|c| c.old_span.end <= span.start).map(Change::delta).sum();
            (span.start as isize + shift) as usize
        }
    };
    if span.is_empty() {
        return Image { span: Span::point(start), touching };
    }
    let end = match touching.iter().rev().find(|c| !c.old_span.is_empty() && c.old_span.end >= span.end) {
        Some(c) => c.new_span.end,
        None => {
            let shift: isize =
                cs.changes.iter().filter(|c| c.old_span.end < span.end).map(Change::delta).sum();
            (span.end as isize + shift) as usize
        }
    };
    Image { span: Span::new(start, end.max(start)), touching }
}

fn fully_covered(span: Span, touching: &[&Change]) -> bool {
    let mut cursor = span.start;
    for c in touching.iter().filter(|c| !c.old_span.is_empty()) {
        if c.old_span.start > cursor {
            return false;
        }
        cursor = cursor.max(c.old_span.end);
    }
    cursor >= span.end
}

/// Maps an old-version span through a change set.
///
/// `old_len` is the old document's length, used for bounds checking.
pub fn map_span(span: Span, cs: &ChangeSet, old_len: usize) -> Result<SpanMapping, DocError> {
    span.check(old_len)?;
    let img = image(span, cs);
    if img.touching.is_empty() {
        let status = if img.span == span { MappingStatus::Intact } else { MappingStatus::Shifted };
        return Ok(SpanMapping { status, new_span: Some(img.span) });
    }
    if fully_covered(span, &img.touching) {
        // a replacement that rewrites a wider region with new words carries
        // the anchor along; deletions, exact replacements and replacements
        // leaving only whitespace do not
        let rewritten = img.touching.iter().any(|c| {
            c.kind == ChangeKind::Replace
                && (c.old_span.start < span.start || c.old_span.end > span.end)
                && c.new_text.chars().any(|ch| !ch.is_whitespace())
        });
        if !rewritten {
            return Ok(SpanMapping { status: MappingStatus::Deleted, new_span: None });
        }
    }
    Ok(SpanMapping { status: MappingStatus::Modified, new_span: Some(img.span) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overlap {
    Inside,
    Overlapping,
    Adjacent,
    Distant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalizedChange {
    pub anchor_overlap: Overlap,
    pub affected_span: Span,
    pub summary: Vec<Change>,
}

/// Locates the changes relative to an anchor's context window (old coordinates).
pub fn localize(cs: &ChangeSet, acw_span: Span, old_len: usize) -> Result<LocalizedChange, DocError> {
    acw_span.check(old_len)?;
    let img = image(acw_span, cs);
    let (overlap, listed): (Overlap, Vec<&Change>) = if !img.touching.is_empty() {
        let inside = img.touching.iter().all(|c| acw_span.contains(&c.old_span));
        (if inside { Overlap::Inside } else { Overlap::Overlapping }, img.touching)
    } else {
        let adjacent: Vec<&Change> = cs.changes.iter().filter(|c| c.adjacent(acw_span)).collect();
        if adjacent.is_empty() {
            (Overlap::Distant, Vec::new())
        } else {
            (Overlap::Adjacent, adjacent)
        }
    };
    let affected_span = listed.iter().fold(img.span, |h, c| h.hull(&c.new_span));
    Ok(LocalizedChange {
        anchor_overlap: overlap,
        affected_span,
        summary: listed.into_iter().cloned().collect(),
    })
}
