//! Prompt builders. Wording lives in versioned template files under
//! `templates/`; the builders only fill slots and attach context blocks.

use std::fmt::Write as _;

use super::Prompt;
use crate::anchor::{Acw, AcwLevel, AnchorProposal};
use crate::diff::{ChangeKind, ChangeSet, LocalizedChange, Overlap};
use crate::doc::DocumentVersion;
use crate::thread::{Author, CommentThread};

pub const TEMPLATE_VERSION: &str = "v1";

pub const META_SYSTEM: &str = include_str!("../../templates/meta_system.txt");
pub const META_USER: &str = include_str!("../../templates/meta_user.txt");
pub const REFINE_USER: &str = include_str!("../../templates/refine_user.txt");
pub const THREAD_SYSTEM: &str = include_str!("../../templates/thread_system.txt");
pub const THREAD_USER: &str = include_str!("../../templates/thread_user.txt");

pub mod labels {
    pub const DOCUMENT: &str = "document";
    pub const CHANGES: &str = "changes";
    pub const PRIOR_COMMENTS: &str = "prior_comments";
    pub const PROPOSAL: &str = "proposal";
    pub const ACW: &str = "acw";
    pub const THREAD_HISTORY: &str = "thread_history";
    pub const LOCALIZED_CHANGE: &str = "localized_change";
    pub const SCHEMA_ERROR: &str = "schema_error";
}

pub const NO_CHANGES: &str = "no changes since last query";
pub const ANCHOR_UNCHANGED: &str = "anchor unchanged";

fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = template.to_owned();
    for (name, value) in slots {
        out = out.replace(&format!("{{{{{name}}}}}"), value);
    }
    out
}

fn describe_changes(cs: &ChangeSet) -> String {
    let mut out = String::new();
    for c in &cs.changes {
        let _ = match c.kind {
            ChangeKind::Insert => writeln!(out, "- inserted {:?} at {}", c.new_text, c.old_span.start),
            ChangeKind::Delete => writeln!(out, "- deleted {:?} at {}", c.old_text, c.old_span),
            ChangeKind::Replace => {
                writeln!(out, "- replaced {:?} with {:?} at {}", c.old_text, c.new_text, c.old_span)
            }
        };
    }
    out.trim_end().to_owned()
}

fn describe_acw(acw: &Acw) -> String {
    let level = match acw.level {
        AcwLevel::Exact => "exact",
        AcwLevel::Sentence => "sentence",
        AcwLevel::Paragraph => "paragraph",
        AcwLevel::Section => "section",
        AcwLevel::Document => "document",
    };
    let mut out = format!("level: {level}\n");
    if acw.ambiguity_flag {
        out.push_str(
            "note: the anchor text repeats throughout the whole document; it is bound to its first occurrence\n",
        );
    }
    out.push_str(&acw.text);
    out
}

/// Prompt for a document-wide query returning a JSON array of proposals.
pub fn build_meta_prompt(
    query: &str,
    version: &DocumentVersion,
    cs: &ChangeSet,
    open_comments: &[CommentThread],
) -> Prompt {
    let mut p = Prompt {
        system_text: META_SYSTEM.to_owned(),
        user_text: fill(META_USER, &[("query", query)]),
        context_blocks: Vec::new(),
    };
    p.push(labels::DOCUMENT, version.text());
    p.push(labels::CHANGES, if cs.is_empty() { NO_CHANGES.to_owned() } else { describe_changes(cs) });

    let mut prior = String::new();
    for t in open_comments {
        let opening = t.opening().map_or("", |m| m.text.as_str());
        let _ = writeln!(prior, "- [{}] on {:?}: {}", t.thread_id, t.anchor.anchor_text, opening);
    }
    p.push(labels::PRIOR_COMMENTS, if prior.is_empty() { "none".to_owned() } else { prior.trim_end().to_owned() });
    p
}

/// Re-prompt a proposal whose anchor needed an expanded window. Meant for
/// windows above the exact level.
pub fn build_refine_prompt(proposal: &AnchorProposal, acw: &Acw, version: &DocumentVersion) -> Prompt {
    let note = if acw.ambiguity_flag {
        "No window short of the whole document is unique, so the comment is bound to the first occurrence of the anchor text.\n"
    } else {
        ""
    };
    let mut p = Prompt {
        system_text: META_SYSTEM.to_owned(),
        user_text: fill(REFINE_USER, &[("binding_note", note)]),
        context_blocks: Vec::new(),
    };
    p.push(
        labels::PROPOSAL,
        format!("anchor_text: {}\ncomment: {}", proposal.anchor_text, proposal.comment),
    );
    p.push(labels::ACW, describe_acw(acw));
    p.push(labels::DOCUMENT, version.text());
    p
}

fn describe_localized(lc: &LocalizedChange, orphaned: bool) -> String {
    if orphaned {
        let mut out = "The anchored text has been deleted from the document.".to_owned();
        if !lc.summary.is_empty() {
            out.push('\n');
            out.push_str(&describe_changes(&ChangeSet {
                old_version_id: 0,
                new_version_id: 0,
                changes: lc.summary.clone(),
            }));
        }
        return out;
    }
    if lc.summary.is_empty() {
        return ANCHOR_UNCHANGED.to_owned();
    }
    let relation = match lc.anchor_overlap {
        Overlap::Inside => "inside the anchored context",
        Overlap::Overlapping => "overlapping the anchored context",
        Overlap::Adjacent => "right next to the anchored context",
        Overlap::Distant => "away from the anchored context",
    };
    format!(
        "The document was edited {relation} since the previous turn.\n{}",
        describe_changes(&ChangeSet { old_version_id: 0, new_version_id: 0, changes: lc.summary.clone() })
    )
}

/// Prompt for a reply inside a thread: the recomputed window, the full
/// document and the thread history, in that order, then the localized
/// change summary.
pub fn build_thread_prompt(
    thread: &CommentThread,
    acw: &Acw,
    version: &DocumentVersion,
    lc: &LocalizedChange,
) -> Prompt {
    let orphaned = thread.anchor.is_orphaned();
    let latest = thread.messages.last().map_or("", |m| m.text.as_str());
    let orphan_note = if orphaned {
        "The passage this thread was attached to no longer exists. You may retract the earlier feedback.\n\n"
    } else {
        ""
    };
    let mut p = Prompt {
        system_text: THREAD_SYSTEM.to_owned(),
        user_text: fill(THREAD_USER, &[("message", latest), ("orphan_note", orphan_note)]),
        context_blocks: Vec::new(),
    };
    p.push(labels::ACW, describe_acw(acw));
    p.push(labels::DOCUMENT, version.text());
    let mut history = String::new();
    for m in &thread.messages {
        let who = match m.author {
            Author::User => "user",
            Author::Ai => "ai",
        };
        let _ = writeln!(history, "{who}: {}", m.text);
    }
    p.push(labels::THREAD_HISTORY, history.trim_end());
    p.push(labels::LOCALIZED_CHANGE, describe_localized(lc, orphaned));
    p
}
