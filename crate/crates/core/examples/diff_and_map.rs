//! Diff two versions, then map an old span and localize the change around it.

use textanchor::diff::{compute_changes, localize, map_span};
use textanchor::doc::{DocumentVersion, Edit, SegmentationConfig, Span};

fn main() {
    let old = DocumentVersion::ingest(
        "People want more time with family. Meetings add more updates than anyone can read.",
        SegmentationConfig::default(),
    );
    let start = old.text().find("than anyone").unwrap();
    let new = old.apply_edits(&[Edit::replace(Span::new(start, start + "than anyone can read".len()), "nobody reads")]).unwrap();
    println!("old: {}\nnew: {}", old.text(), new.text());

    let cs = compute_changes(&old, &new);
    for c in &cs.changes {
        println!("{:?} {} -> {}  {:?} -> {:?}", c.kind, c.old_span, c.new_span, c.old_text, c.new_text);
    }
    println!("token edits: {}", cs.token_edit_count());
    assert_eq!(cs.replay(old.text()), new.text());

    for word in ["People", "updates", "anyone"] {
        let at = old.text().find(word).unwrap();
        let m = map_span(Span::new(at, at + word.len()), &cs, old.len()).unwrap();
        println!("{word:>8}: {:?} {:?}", m.status, m.new_span);
    }

    let sentence = Span::new(35, old.len());
    let local = localize(&cs, sentence, old.len()).unwrap();
    println!("second sentence: {:?}, affected {}", local.anchor_overlap, local.affected_span);
}
