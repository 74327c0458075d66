//! Anchor model feedback to exact spans of a document and keep the anchors
//! valid while the document is edited.
//!
//! The pieces, bottom up:
//!
//! - [`doc`]: immutable document versions with word/sentence/paragraph/section
//!   segmentation, and edit application.
//! - [`diff`]: word-level change sets between versions, span mapping, and
//!   change localization around an anchor.
//! - [`anchor`]: normalized matching, context-window expansion, proposal
//!   resolution and re-anchoring.
//! - [`llm`]: prompt templates, strict output parsing, an HTTP provider and a
//!   scripted mock.
//! - [`thread`], [`session`], [`pipeline`]: comment threads, persistent
//!   sessions with an event log, and the end-to-end flows over them.
//! - [`metrics`], [`api`], [`commands`]: revision metrics, the HTTP service
//!   and the command-line front end.
//!
//! Each capability has a runnable example:
//!
//! ```bash
//! cargo run --example segment
//! cargo run --example diff_and_map
//! cargo run --example context_window
//! cargo run --example meta_query
//! cargo run --example thread_reply
//! cargo run --example session_store
//! cargo run --example revision_metrics
//! cargo run --example http_service
//! ```

pub mod anchor;
pub mod api;
pub mod clock;
pub mod commands;
pub mod diff;
pub mod doc;
pub mod llm;
pub mod metrics;
pub mod pipeline;
pub mod session;
pub mod thread;
