//! Everything between the anchoring pipeline and a language model: prompt
//! assembly, strict parsing of structured replies, and providers.

pub mod parse;
pub mod prompt;
pub mod provider;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use parse::{parse_proposal, parse_proposals, parse_thread_reply, ReplyAction, SchemaError, ThreadReplyDecision};
pub use prompt::{build_meta_prompt, build_refine_prompt, build_thread_prompt, labels};
pub use provider::{HttpProvider, MockEntry, MockProvider, Provider, ProviderConfig, ProviderError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBlock {
    pub label: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system_text: String,
    pub user_text: String,
    pub context_blocks: Vec<ContextBlock>,
}

impl Prompt {
    pub fn block(&self, label: &str) -> Option<&str> {
        self.context_blocks.iter().find(|b| b.label == label).map(|b| b.content.as_str())
    }

    pub fn labels(&self) -> Vec<&str> {
        self.context_blocks.iter().map(|b| b.label.as_str()).collect()
    }

    pub(crate) fn push(&mut self, label: &str, content: impl Into<String>) {
        self.context_blocks.push(ContextBlock { label: label.to_owned(), content: content.into() });
    }

    /// Stable key used by mock scripts: SHA-256 over the user text and the
    /// block labels, hex encoded. Block contents are deliberately excluded so
    /// scripts survive document edits.
    pub fn key(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.user_text.as_bytes());
        for label in self.labels() {
            h.update([0x1f]);
            h.update(label.as_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Single user message for chat-style providers.
    pub fn render_user_message(&self) -> String {
        let mut out = String::new();
        for b in &self.context_blocks {
            out.push_str(&format!("<{}>\n{}\n</{}>\n\n", b.label, b.content, b.label));
        }
        out.push_str(&self.user_text);
        out
    }
}
