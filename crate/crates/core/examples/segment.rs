//! Ingest a document and list its sentences, paragraphs and sections.

use textanchor::doc::{DocumentVersion, Level, SegmentationConfig};

const TEXT: &str = "# Morning\n\nMy grandmother bakes bread. It is always burnt.\n\nWe eat it anyway.\n\n# Evening\n\nShe sings to the radio.";

fn main() {
    let v = DocumentVersion::ingest(TEXT, SegmentationConfig::default());
    println!("version {} ({} chars)", v.version_id(), v.len());
    for level in [Level::Section, Level::Paragraph, Level::Sentence] {
        println!("\n{level:?}:");
        for span in v.segmentation().units(level) {
            println!("  {span}  {:?}", v.slice(*span).unwrap());
        }
    }
    println!("\nwords: {}", v.segmentation().units(Level::Word).len());
}
