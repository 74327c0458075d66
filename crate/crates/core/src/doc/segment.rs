//! Hierarchical segmentation: word ⊂ sentence ⊂ paragraph ⊂ section.
//!
//! Rules:
//! - word: maximal run of non-whitespace.
//! - sentence: ends at `.`, `!` or `?` followed by whitespace or by the end of
//!   its paragraph. Abbreviations are not special-cased, so "e.g. this" splits.
//! - paragraph: block of non-blank lines separated by blank lines. A heading
//!   line always forms its own paragraph.
//! - section: from one heading line (leading `#`) to the next; the whole
//!   document when there are no headings.
//!
//! Every span is trimmed of surrounding whitespace.

use serde::{Deserialize, Serialize};

use super::{DocError, Span};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    /// Treat lines starting with `#` as section headings.
    #[serde(default = "yes")]
    pub markdown_headings: bool,
}

fn yes() -> bool {
    true
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig { markdown_headings: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Word,
    Sentence,
    Paragraph,
    Section,
    Document,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationIndex {
    pub words: Vec<Span>,
    pub sentences: Vec<Span>,
    pub paragraphs: Vec<Span>,
    pub sections: Vec<Span>,
    /// Document length in characters.
    pub len: usize,
}

impl SegmentationIndex {
    pub fn units(&self, level: Level) -> &[Span] {
        match level {
            Level::Word => &self.words,
            Level::Sentence => &self.sentences,
            Level::Paragraph => &self.paragraphs,
            Level::Section => &self.sections,
            Level::Document => &[],
        }
    }

    /// Smallest run of `level` units covering `span`.
    ///
    /// Units are those overlapping the span (for an empty span, those touching
    /// its position). A span lying entirely in inter-unit whitespace is
    /// returned unchanged.
    pub fn window_at(&self, span: Span, level: Level) -> Result<Span, DocError> {
        span.check(self.len)?;
        if level == Level::Document {
            return Ok(Span::new(0, self.len));
        }
        let units = self.units(level);
        let mut hull = span;
        if span.is_empty() {
            let p = span.start;
            let first = units.partition_point(|u| u.end < p);
            for u in units[first..].iter().take_while(|u| u.start <= p) {
                hull = hull.hull(u);
            }
        } else {
            let first = units.partition_point(|u| u.end <= span.start);
            for u in units[first..].iter().take_while(|u| u.start < span.end) {
                hull = hull.hull(u);
            }
        }
        Ok(hull)
    }
}

fn is_heading(line: &[char]) -> bool {
    line.first() == Some(&'#')
}

fn trim(chars: &[char], mut start: usize, mut end: usize) -> Option<Span> {
    while start < end && chars[start].is_whitespace() {
        start += 1;
    }
    while end > start && chars[end - 1].is_whitespace() {
        end -= 1;
    }
    (start < end).then_some(Span::new(start, end))
}

pub fn segment(text: &str, config: &SegmentationConfig) -> SegmentationIndex {
    let chars: Vec<char> = text.chars().collect();
    let len = chars.len();

    let mut paragraphs = Vec::new();
    let mut heading_paragraphs = Vec::new();
    let mut block: Option<(usize, usize)> = None;
    let mut line_start = 0;
    for i in 0..=len {
        if i < len && chars[i] != '\n' {
            continue;
        }
        let line = &chars[line_start..i];
        let blank = line.iter().all(|c| c.is_whitespace());
        let heading = !blank && config.markdown_headings && is_heading(line);
        if blank || heading {
            if let Some((bs, be)) = block.take() {
                paragraphs.extend(trim(&chars, bs, be));
            }
        }
        if heading {
            if let Some(p) = trim(&chars, line_start, i) {
                heading_paragraphs.push(paragraphs.len());
                paragraphs.push(p);
            }
        } else if !blank {
            block = Some((block.map_or(line_start, |(bs, _)| bs), i));
        }
        line_start = i + 1;
    }
    if let Some((bs, be)) = block.take() {
        paragraphs.extend(trim(&chars, bs, be));
    }

    let mut sections = Vec::new();
    if !paragraphs.is_empty() {
        let mut section_start = 0;
        for &pi in &heading_paragraphs {
            if pi > section_start {
                let first = paragraphs[section_start];
                let last = paragraphs[pi - 1];
                sections.push(Span::new(first.start, last.end));
            }
            section_start = pi;
        }
        let first = paragraphs[section_start];
        let last = paragraphs[paragraphs.len() - 1];
        sections.push(Span::new(first.start, last.end));
    }

    let mut sentences = Vec::new();
    for p in &paragraphs {
        let mut s = p.start;
        let mut i = p.start;
        while i < p.end {
            let c = chars[i];
            if matches!(c, '.' | '!' | '?') && (i + 1 == p.end || chars[i + 1].is_whitespace()) {
                sentences.push(Span::new(s, i + 1));
                i += 1;
                while i < p.end && chars[i].is_whitespace() {
                    i += 1;
                }
                s = i;
            } else {
                i += 1;
            }
        }
        if s < p.end {
            sentences.push(Span::new(s, p.end));
        }
    }

    let mut words = Vec::new();
    for s in &sentences {
        let mut i = s.start;
        while i < s.end {
            if chars[i].is_whitespace() {
                i += 1;
                continue;
            }
            let ws = i;
            while i < s.end && !chars[i].is_whitespace() {
                i += 1;
            }
            words.push(Span::new(ws, i));
        }
    }

    SegmentationIndex { words, sentences, paragraphs, sections, len }
}
