#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use textanchor::clock::SteppingClock;
use textanchor::llm::{MockEntry, MockProvider};
use textanchor::session::{Session, SessionConfig};

pub const ESSAY_QUERY: &str = "identify locations of verb-tense disagreements";

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

pub fn session(text: &str, config: SessionConfig) -> Session {
    Session::with_clock("s".into(), text, config, Arc::new(SteppingClock::epoch()))
}

/// Provider answering each prompt, in order, with the next response.
pub fn scripted(responses: &[&str]) -> MockProvider {
    MockProvider::new(responses.iter().map(|r| MockEntry::any(*r)).collect())
}
