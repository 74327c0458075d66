//! Tolerant text normalization used for anchor matching.
//!
//! Rule table, applied per character in order:
//!
//! | step | rule |
//! |------|------|
//! | 1 | fold `‘ ’ ‚ ‛ ′` to `'` and `“ ” „ ‟ ″` to `"` |
//! | 2 | fold the dashes U+2010 to U+2015 to `-` |
//! | 3 | lowercase |
//! | 4 | drop `. , ; : ! ? " ' ( ) [ ] { }` |
//! | 5 | drop `-` unless both neighbours (after steps 1-3) are alphanumeric |
//! | 6 | collapse whitespace runs to one space, trim both ends |
//!
//! The table is versioned; `tests/fixtures/normalization_v1.json` pins it.

/// Bumped whenever the rule table changes.
pub const RULES_VERSION: u32 = 1;

pub const REMOVED_PUNCTUATION: &[char] =
    &['.', ',', ';', ':', '!', '?', '"', '\'', '(', ')', '[', ']', '{', '}'];

pub(crate) fn fold(c: char) -> char {
    match c {
        '\u{2018}' | '\u{2019}' | '\u{201A}' | '\u{201B}' | '\u{2032}' => '\'',
        '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{201F}' | '\u{2033}' => '"',
        '\u{2010}'..='\u{2015}' => '-',
        c => c,
    }
}

/// Normalized text plus, for every normalized char, the range of original
/// char offsets it came from.
#[derive(Debug, Clone)]
pub struct NormalizedText {
    text: String,
    origin: Vec<(usize, usize)>,
    byte_starts: Vec<usize>,
}

impl NormalizedText {
    pub fn new(input: &str) -> Self {
        let folded: Vec<(char, usize)> = input
            .chars()
            .enumerate()
            .flat_map(|(i, c)| fold(c).to_lowercase().map(move |lc| (lc, i)))
            .collect();

        let mut text = String::with_capacity(input.len());
        let mut origin = Vec::with_capacity(folded.len());
        let mut byte_starts = Vec::with_capacity(folded.len());
        let mut pending_space: Option<usize> = None;

        for (j, &(c, i)) in folded.iter().enumerate() {
            if c.is_whitespace() {
                if pending_space.is_none() {
                    pending_space = Some(i);
                }
                continue;
            }
            if REMOVED_PUNCTUATION.contains(&c) {
                continue;
            }
            if c == '-' {
                let before = j.checked_sub(1).map(|k| folded[k].0);
                let after = folded.get(j + 1).map(|f| f.0);
                let inside_word = before.is_some_and(char::is_alphanumeric)
                    && after.is_some_and(char::is_alphanumeric);
                if !inside_word {
                    continue;
                }
            }
            if let Some(ws) = pending_space.take() {
                if !text.is_empty() {
                    byte_starts.push(text.len());
                    origin.push((ws, ws + 1));
                    text.push(' ');
                }
            }
            byte_starts.push(text.len());
            origin.push((i, i + 1));
            text.push(c);
        }

        NormalizedText { text, origin, byte_starts }
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    /// Original char span covered by normalized chars `[from, to)`.
    fn original_span(&self, from: usize, to: usize) -> (usize, usize) {
        (self.origin[from].0, self.origin[to - 1].1)
    }

    fn char_index(&self, byte: usize) -> usize {
        self.byte_starts.partition_point(|&b| b < byte)
    }

    /// Non-overlapping matches of an already-normalized needle, as original
    /// char spans.
    pub(crate) fn find_all(&self, needle: &str) -> Vec<(usize, usize)> {
        if needle.is_empty() {
            return Vec::new();
        }
        let width = needle.chars().count();
        self.text
            .match_indices(needle)
            .map(|(b, _)| {
                let from = self.char_index(b);
                self.original_span(from, from + width)
            })
            .collect()
    }
}

/// Number of (possibly overlapping) occurrences of `needle` in `haystack`.
/// An empty needle counts as occurring everywhere.
pub(crate) fn count_occurrences(haystack: &str, needle: &str) -> usize {
    if needle.is_empty() {
        return usize::MAX;
    }
    let mut count = 0;
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(needle) {
        count += 1;
        let at = from + pos;
        from = at + haystack[at..].chars().next().map_or(1, char::len_utf8);
    }
    count
}

pub fn normalize(text: &str) -> String {
    NormalizedText::new(text).text
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn basic_rules() {
        assert_eq!(normalize(""), "");
        assert_eq!(normalize("Hello,   World!"), "hello world");
        assert_eq!(normalize("it's \u{201C}fine\u{201D} \u{2014} OK"), "its fine ok");
        assert_eq!(normalize("  well-known (sort of)  "), "well-known sort of");
        assert_eq!(normalize("a\u{2013}b"), "a-b");
    }

    #[test]
    fn offsets_point_into_original() {
        let original = "Say (Hello),   World!";
        let n = NormalizedText::new(original);
        let spans = n.find_all("hello world");
        assert_eq!(spans.len(), 1);
        let (s, e) = spans[0];
        let slice: String = original.chars().skip(s).take(e - s).collect();
        assert_eq!(slice, "Hello),   World");
    }

    #[test]
    fn expanding_lowercase_keeps_offsets() {
        let original = "x \u{130}stanbul y";
        let n = NormalizedText::new(original);
        let spans = n.find_all(&normalize("\u{130}stanbul"));
        assert_eq!(spans, vec![(2, 10)]);
    }

    #[test]
    fn overlapping_counts() {
        assert_eq!(count_occurrences("aaa", "aa"), 2);
        assert_eq!(count_occurrences("more and more", "more"), 2);
        assert_eq!(count_occurrences("abc", "d"), 0);
        assert_eq!(count_occurrences("abc", ""), usize::MAX);
    }

    proptest! {
        #[test]
        fn idempotent(s in any::<String>()) {
            let once = normalize(&s);
            prop_assert_eq!(normalize(&once), once.clone());
        }

        #[test]
        fn idempotent_on_prose(s in "[a-zA-Z \\-.,'\u{2019}\u{2014}\u{201C}\u{201D}\t\n]{0,80}") {
            let once = normalize(&s);
            prop_assert_eq!(normalize(&once), once.clone());
        }

        #[test]
        fn every_match_maps_back(s in "[a-c ,.\\-]{0,40}", needle in "[a-c]{1,3}") {
            let n = NormalizedText::new(&s);
            let chars: Vec<char> = s.chars().collect();
            for (a, b) in n.find_all(&normalize(&needle)) {
                let slice: String = chars[a..b].iter().collect();
                prop_assert_eq!(normalize(&slice), normalize(&needle));
            }
        }
    }
}
