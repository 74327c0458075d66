//! Run a meta-query against a scripted model: anchored threads come back,
//! invented anchors are rejected, and an ambiguous anchor is refined.

use textanchor::llm::{MockEntry, MockProvider};
use textanchor::pipeline::run_meta_query;
use textanchor::session::{Session, SessionConfig};

const TEXT: &str = "People want more time with family. Meetings add more updates than anyone can read.\n\nManagers ask for more output.";

fn main() {
    let proposals = serde_json::json!([
        {"anchor_text": "more", "acw_text": "Meetings add more updates than anyone can read.", "comment": "Redundant 'more'."},
        {"anchor_text": "Managers ask for more output.", "comment": "Say what kind of output."},
        {"anchor_text": "we goes to the market", "comment": "Tense error."}
    ]);
    let refine = serde_json::json!({"anchor_text": "more", "comment": "Cut this sentence to its point."});
    let provider = MockProvider::new(vec![MockEntry::any(proposals.to_string()), MockEntry::any(refine.to_string())]);

    let mut session = Session::open(TEXT, SessionConfig::default());
    let result = run_meta_query(&mut session, &provider, "suggest more concise phrasing").unwrap();
    println!("{} proposals, {} threads", result.raw_proposal_count, result.created_threads.len());
    for t in session.threads() {
        let acw = t.anchor.acw.as_ref().unwrap();
        println!("{} {} {:?} [{:?}] {}", t.thread_id, t.anchor.span.unwrap(), t.anchor.anchor_text, acw.level, t.messages[0].text);
    }
    for r in &result.rejected {
        println!("rejected ({:?}): {:?}", r.reason, r.proposal.anchor_text);
    }
}
