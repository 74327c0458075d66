//! Compute revision metrics from an event log and two document texts.

use textanchor::metrics::{compute, load_events};

const LOG: &str = r#"{"timestamp":"2024-01-01T00:00:00Z","kind":"copy","payload":{"text":"Cut this sentence.","source":"feedback-pane"}}
{"timestamp":"2024-01-01T00:00:05Z","kind":"paste","payload":{"text":"Meetings pile up unread updates.","source":"feedback-pane"}}
{"timestamp":"2024-01-01T00:01:00Z","kind":"paste","payload":{"text":"family","source":"document"}}
"#;

fn main() {
    let events = load_events(LOG).unwrap();
    let initial = "People want more time with family. Meetings add more updates than anyone can read.";
    let final_text = "People want time with family. Meetings pile up unread updates.";
    let m = compute(&events, initial, final_text);
    println!("{}", m.table());
    println!("{}", serde_json::to_string_pretty(&m).unwrap());
}
