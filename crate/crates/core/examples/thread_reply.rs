//! Open a thread, edit inside its window, and reply: the model prompt
//! carries both the updated window and the change since the last turn.

use textanchor::doc::{Edit, Span};
use textanchor::llm::{MockEntry, MockProvider};
use textanchor::pipeline::{apply_edits, create_user_thread, reply_in_thread};
use textanchor::session::{Session, SessionConfig};

const TEXT: &str = "People want more time with family. Meetings add more updates than anyone can read.";

fn main() {
    let provider = MockProvider::new(vec![
        MockEntry::any(r#"{"action":"update","reply_text":"Try cutting the second half."}"#),
        MockEntry::any(r#"{"action":"acknowledge","reply_text":"Yes, that reads better."}"#),
    ]);
    let mut session = Session::open(TEXT, SessionConfig::default());
    let at = TEXT.find("more updates").unwrap();
    let thread = create_user_thread(&mut session, &provider, Some(Span::new(at, at + 4)), "Is 'more' needed?").unwrap();

    let tail = TEXT.find("than anyone can read").unwrap();
    let out = apply_edits(&mut session, 0, &[Edit::replace(Span::new(tail, tail + 20), "nobody reads")]).unwrap();
    println!("after edit: {:?}", out.anchor_statuses);

    let reply = reply_in_thread(&mut session, &provider, &thread.thread_id, "Is this version better?").unwrap();
    let prompt = provider.prompts().pop().unwrap();
    for block in &prompt.context_blocks {
        println!("--- {}\n{}", block.label, block.content);
    }
    println!("--- reply ({:?}): {}", reply.action, reply.text);
}
