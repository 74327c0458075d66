//! Persist a session, reopen it, and confirm the state survives intact.

use textanchor::doc::{Edit, Span};
use textanchor::pipeline::{apply_edits, record_snapshot};
use textanchor::session::{SessionConfig, SessionStore};

fn main() {
    let root = tempfile::tempdir().unwrap();
    let store = SessionStore::new(root.path()).unwrap();
    let mut session = store.create("The bread is always burnt.", SessionConfig::default()).unwrap();
    let id = session.session_id().to_owned();
    apply_edits(&mut session, 0, &[Edit::replace(Span::new(14, 20), "never")]).unwrap();
    record_snapshot(&mut session, "The bread is never burnt now.").unwrap();
    let hash = session.state_hash();
    drop(session);

    let reopened = store.open(&id).unwrap();
    println!("session {id}: {} versions, {} events", reopened.history().len(), reopened.events().len());
    println!("head: {:?}", reopened.head().text());
    println!("state hash {} ({})", &hash[..16], if reopened.state_hash() == hash { "matches" } else { "differs" });
    for entry in std::fs::read_dir(store.dir(&id).unwrap()).unwrap() {
        println!("  {}", entry.unwrap().file_name().to_string_lossy());
    }
}
