//! Find an anchor's occurrences and expand each to its smallest unique window.

use textanchor::anchor::{expand_acw, find_occurrences, normalize::normalize};
use textanchor::doc::{DocumentVersion, SegmentationConfig};

const TEXT: &str = "People want more time with family. Meetings add more updates than anyone can read.\n\nManagers ask for more output. Managers ask for more output.";

fn main() {
    let v = DocumentVersion::ingest(TEXT, SegmentationConfig::default());
    println!("normalized: {:?}\n", normalize("It's “fine” \u{2014} really!"));
    for needle in ["more", "Meetings add", "MANAGERS  ask"] {
        println!("{needle:?}:");
        for span in find_occurrences(&v, needle) {
            let acw = expand_acw(&v, span).unwrap();
            let flag = if acw.ambiguity_flag { " (ambiguous)" } else { "" };
            println!("  {span} -> {:?} {}{flag}  {:?}", acw.level, acw.span, acw.text);
        }
    }
}
