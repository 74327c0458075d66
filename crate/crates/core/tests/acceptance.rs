//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the test
//! harness so the lines come out in order; exits non-zero on any failure.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command as Process;
use std::time::{Duration, Instant};

use clap::Parser;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use textanchor::anchor::{expand_acw, find_occurrences, Acw, AcwLevel, Anchor, AnchorStatus};
use textanchor::commands::{self, annotate, annotation_json, Cli};
use textanchor::diff::{compute_changes, diff_texts, tokenize, ChangeSet};
use textanchor::doc::{DocumentVersion, Edit, SegmentationConfig, Span};
use textanchor::llm::{labels, parse_proposals, parse_thread_reply, MockProvider};
use textanchor::pipeline::{apply_edits, create_user_thread, reply_in_thread, run_meta_query};
use textanchor::session::{CommitItem, SessionConfig};
use textanchor::thread::{CommentThread, Origin};

use common::{fixture, read_fixture, scripted, session, ESSAY_QUERY};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// generated documents with planted repeats

const VOCAB: &[&str] = &["more", "time", "work", "team", "plan", "idea"];

struct Sentence {
    span: Span,
    words: Vec<Span>,
    paragraph: Span,
    section: Span,
}

struct GenDoc {
    text: String,
    sentences: Vec<Sentence>,
}

fn words(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> String {
    let n = rng.gen_range(lo..=hi);
    (0..n).map(|_| *VOCAB.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// Sections of paragraphs of sentences over a six-word vocabulary; sentences
/// and whole paragraphs are sometimes copied verbatim from earlier ones.
fn gen_doc(rng: &mut ChaCha8Rng) -> GenDoc {
    let mut text = String::new();
    let mut sentences: Vec<Sentence> = Vec::new();
    let mut sentence_pool: Vec<String> = Vec::new();
    let mut paragraph_pool: Vec<Vec<String>> = Vec::new();
    for si in 0..rng.gen_range(1..=3) {
        if si > 0 {
            text.push_str("\n\n");
        }
        let mut section_start = None;
        if si > 0 || rng.gen_bool(0.5) {
            section_start = Some(text.len());
            text.push_str("# ");
            text.push_str(&words(rng, 1, 3));
            text.push_str("\n\n");
        }
        let first_sentence = sentences.len();
        for pi in 0..rng.gen_range(1..=3) {
            if pi > 0 {
                text.push_str("\n\n");
            }
            let body: Vec<String> = if !paragraph_pool.is_empty() && rng.gen_bool(0.2) {
                paragraph_pool.choose(rng).unwrap().clone()
            } else {
                (0..rng.gen_range(1..=4))
                    .map(|_| {
                        if !sentence_pool.is_empty() && rng.gen_bool(0.3) {
                            sentence_pool.choose(rng).unwrap().clone()
                        } else {
                            format!("{}.", words(rng, 1, 6))
                        }
                    })
                    .collect()
            };
            let p_start = text.len();
            let first_in_paragraph = sentences.len();
            for (k, s) in body.iter().enumerate() {
                if k > 0 {
                    text.push(' ');
                }
                let start = text.len();
                let mut ws = Vec::new();
                let mut at = start;
                for w in s.trim_end_matches('.').split(' ') {
                    ws.push(Span::new(at, at + w.len()));
                    at += w.len() + 1;
                }
                text.push_str(s);
                sentences.push(Sentence {
                    span: Span::new(start, text.len()),
                    words: ws,
                    paragraph: Span::new(0, 0),
                    section: Span::new(0, 0),
                });
                sentence_pool.push(s.clone());
            }
            let paragraph = Span::new(p_start, text.len());
            for s in &mut sentences[first_in_paragraph..] {
                s.paragraph = paragraph;
            }
            paragraph_pool.push(body);
        }
        let start = section_start.unwrap_or(sentences[first_sentence].paragraph.start);
        let section = Span::new(start, text.len());
        for s in &mut sentences[first_sentence..] {
            s.section = section;
        }
    }
    GenDoc { text, sentences }
}

/// Normalization restricted to the generator's alphabet (lowercase words,
/// spaces, newlines, periods, `#`): drop periods, collapse whitespace.
fn oracle_norm(s: &str) -> String {
    s.replace('.', "").split_whitespace().collect::<Vec<_>>().join(" ")
}

fn oracle_count(hay: &str, needle: &str) -> usize {
    if needle.is_empty() || needle.len() > hay.len() {
        return 0;
    }
    (0..=hay.len() - needle.len()).filter(|&i| hay[i..].starts_with(needle)).count()
}

/// Brute force over every level: the first window that occurs once in the
/// document and holds the anchor once.
fn oracle_acw(doc: &GenDoc, sentence: &Sentence, span: Span) -> (AcwLevel, Span, bool) {
    let norm_doc = oracle_norm(&doc.text);
    let anchor = oracle_norm(&doc.text[span.start..span.end]);
    let candidates = [
        (AcwLevel::Exact, span),
        (AcwLevel::Sentence, sentence.span),
        (AcwLevel::Paragraph, sentence.paragraph),
        (AcwLevel::Section, sentence.section),
    ];
    for (level, w) in candidates {
        let window = oracle_norm(&doc.text[w.start..w.end]);
        if !window.is_empty() && oracle_count(&norm_doc, &window) == 1 && oracle_count(&window, &anchor) == 1 {
            return (level, w, false);
        }
    }
    (AcwLevel::Document, Span::new(0, doc.text.len()), oracle_count(&norm_doc, &anchor) != 1)
}

fn random_word_span(rng: &mut ChaCha8Rng, doc: &GenDoc) -> (usize, Span) {
    let si = rng.gen_range(0..doc.sentences.len());
    let s = &doc.sentences[si];
    if rng.gen_bool(0.15) {
        return (si, s.span);
    }
    let i = rng.gen_range(0..s.words.len());
    let j = rng.gen_range(i..s.words.len().min(i + 3));
    (si, Span::new(s.words[i].start, s.words[j].end))
}

fn ingest(text: &str) -> DocumentVersion {
    DocumentVersion::ingest(text, SegmentationConfig::default())
}

// ---------------------------------------------------------------------------
// criteria

fn acw_minimality() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut levels: BTreeMap<String, usize> = BTreeMap::new();
    let (docs, mut spans) = (1200, 0);
    for d in 0..docs {
        let doc = gen_doc(&mut rng);
        let v = ingest(&doc.text);
        for _ in 0..6 {
            let (si, span) = random_word_span(&mut rng, &doc);
            let expected = oracle_acw(&doc, &doc.sentences[si], span);
            let acw = expand_acw(&v, span).map_err(|e| format!("doc {d}: {e}"))?;
            let got = (acw.level, acw.span, acw.ambiguity_flag);
            ensure(got == expected, || format!("doc {d} span {span}: got {got:?}, oracle {expected:?}\n{}", doc.text))?;
            ensure(v.slice(acw.span).ok() == Some(acw.text.as_str()), || format!("doc {d}: window text mismatch"))?;
            *levels.entry(format!("{:?}", acw.level).to_lowercase()).or_default() += 1;
            spans += 1;
        }
    }
    let elapsed = started.elapsed();
    ensure(levels.len() == 5, || format!("not every level exercised: {levels:?}"))?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("{docs} documents, {spans} spans, 100% agreement, levels {levels:?}, {:.1}s", elapsed.as_secs_f64()))
}

const MORE_TEXT: &str =
    "People want more time with family. Meetings add more updates than anyone can read.\n\nManagers ask for more output.";

fn redundant_more_scenario() -> Outcome {
    let sentences = [
        "People want more time with family.",
        "Meetings add more updates than anyone can read.",
        "Managers ask for more output.",
    ];
    let meta = serde_json::to_string(
        &sentences
            .iter()
            .map(|s| serde_json::json!({"anchor_text": "more", "acw_text": s, "comment": "Redundant 'more'."}))
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let refine = r#"{"anchor_text":"more","comment":"Pick one precise word instead of another 'more'."}"#;
    let provider = scripted(&[&meta, refine, refine, refine]);
    let mut s = session(MORE_TEXT, SessionConfig::default());
    let v0 = s.head().clone();
    let occurrences = find_occurrences(&v0, "more");
    ensure(occurrences.len() == 3, || format!("{} occurrences of 'more'", occurrences.len()))?;

    let result = run_meta_query(&mut s, &provider, "suggest more concise phrasing for redundant sentences")
        .map_err(|e| e.to_string())?;
    ensure(result.created_threads.len() == 3, || format!("threads: {:?} rejected: {:?}", result.created_threads, result.rejected))?;
    for (t, sentence) in s.threads().iter().zip(sentences) {
        let acw = t.anchor.acw.as_ref().ok_or("missing acw")?;
        ensure(acw.level == AcwLevel::Sentence && acw.text == sentence, || format!("{}: {acw:?}", t.thread_id))?;
    }
    ensure(s.threads().iter().map(|t| t.anchor.span.unwrap()).eq(occurrences.iter().copied()), || {
        "anchors are not the three occurrences in order".into()
    })?;

    // the user accepts the suggested rewrite of the middle sentence
    let start = MORE_TEXT.find(sentences[1]).unwrap();
    let target = Span::new(start, start + sentences[1].len());
    let rewrite = "Meetings pile up unread updates.";
    let out = apply_edits(&mut s, 0, &[Edit::replace(target, rewrite)]).map_err(|e| e.to_string())?;
    let statuses: Vec<AnchorStatus> = out.anchor_statuses.iter().map(|t| t.status).collect();
    let expected = [AnchorStatus::Intact, AnchorStatus::Modified, AnchorStatus::Shifted];
    ensure(statuses == expected, || format!("transitions {statuses:?}, expected {expected:?}"))?;

    let head = s.head().clone();
    let changes = compute_changes(&v0, &head);
    let t2 = &s.threads()[1];
    let span = t2.anchor.span.ok_or("modified anchor lost its span")?;
    let acw = t2.anchor.acw.as_ref().ok_or("modified anchor lost its window")?;
    let touched: Vec<Span> =
        changes.changes.iter().filter(|c| c.old_span.overlaps(&occurrences[1])).map(|c| c.new_span).collect();
    ensure(!touched.is_empty(), || "no change touches the anchor".into())?;
    for region in &touched {
        ensure(acw.span.contains(region), || format!("window {} misses rewritten region {region}", acw.span))?;
    }
    ensure(head.slice(span).ok() == Some(t2.anchor.anchor_text.as_str()), || "anchor text out of sync".into())?;
    ensure(head.slice(acw.span).ok() == Some(acw.text.as_str()), || "window text out of sync".into())?;
    ensure(acw.span.contains(&span), || "window misses the anchor".into())?;
    Ok(format!(
        "sentence-level windows for 3 x 'more'; rewrite gives intact/modified/shifted; window {:?} {:?} covers the rewrite",
        acw.level, acw.text
    ))
}

const DIFF_TOKENS: &[&str] = &["a", "b", "the", "more", "é", "naïve", "x.", "\u{2014}", "日本", "🙂", ",", "more-or-less"];
const DIFF_SPACES: &[&str] = &[" ", " ", " ", "  ", "\n", "\n\n", "\t", " \u{a0}"];

fn random_text(rng: &mut ChaCha8Rng, tokens: usize) -> String {
    let mut out = String::new();
    for i in 0..tokens {
        if i % 2 == 1 || (i == 0 && rng.gen_bool(0.2)) {
            out.push_str(DIFF_SPACES.choose(rng).unwrap());
        } else {
            out.push_str(DIFF_TOKENS.choose(rng).unwrap());
        }
    }
    out
}

fn mutate(rng: &mut ChaCha8Rng, text: &str) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    for _ in 0..rng.gen_range(0..=8) {
        let at = rng.gen_range(0..=chars.len());
        match rng.gen_range(0..3) {
            0 => {
                let n = rng.gen_range(1..=6);
                let ins: Vec<char> = random_text(rng, n).chars().collect();
                chars.splice(at..at, ins);
            }
            1 => {
                let end = (at + rng.gen_range(1..=12)).min(chars.len());
                chars.drain(at..end);
            }
            _ => {
                let end = (at + rng.gen_range(1..=12)).min(chars.len());
                let n = rng.gen_range(1..=4);
                let ins: Vec<char> = random_text(rng, n).chars().collect();
                chars.splice(at..end, ins);
            }
        }
    }
    chars.into_iter().collect()
}

fn token_strings(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    tokenize(text).into_iter().map(|t| chars[t.start..t.end].iter().collect()).collect()
}

/// Shortest-edit-script length (insertions + deletions) via LCS.
fn lcs_edit_count(a: &[String], b: &[String]) -> usize {
    let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in (0..a.len()).rev() {
        for j in (0..b.len()).rev() {
            dp[i][j] = if a[i] == b[j] { dp[i + 1][j + 1] + 1 } else { dp[i + 1][j].max(dp[i][j + 1]) };
        }
    }
    a.len() + b.len() - 2 * dp[0][0]
}

fn diff_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pairs = 10_000;
    let mut max_tokens = 0;
    for i in 0..pairs {
        let n = rng.gen_range(0..=500);
        let old = random_text(&mut rng, n);
        let new = if rng.gen_bool(0.8) {
            mutate(&mut rng, &old)
        } else {
            let n = rng.gen_range(0..=500);
            random_text(&mut rng, n)
        };
        let new = if tokenize(&new).len() > 500 { new.chars().take(400).collect() } else { new };
        max_tokens = max_tokens.max(tokenize(&old).len()).max(tokenize(&new).len());
        let cs = ChangeSet { old_version_id: 0, new_version_id: 1, changes: diff_texts(&old, &new) };
        let replayed = cs.replay(&old);
        ensure(replayed.as_bytes() == new.as_bytes(), || format!("pair {i}: replay differs\nold {old:?}\nnew {new:?}"))?;
        if i % 10 == 0 {
            let applied = ingest(&old).apply_edits(&cs.as_edits()).map_err(|e| format!("pair {i}: {e}"))?;
            ensure(applied.text() == new, || format!("pair {i}: edit round trip differs"))?;
        }
    }
    let edit_pairs = 200;
    for i in 0..edit_pairs {
        let old = random_text(&mut rng, 200);
        let new = if rng.gen_bool(0.5) { mutate(&mut rng, &old) } else { random_text(&mut rng, 200) };
        let cs = ChangeSet { old_version_id: 0, new_version_id: 1, changes: diff_texts(&old, &new) };
        let oracle = lcs_edit_count(&token_strings(&old), &token_strings(&new));
        ensure(cs.token_edit_count() == oracle, || format!("edit pair {i}: {} vs oracle {oracle}", cs.token_edit_count()))?;
    }
    Ok(format!(
        "{pairs} pairs (up to {max_tokens} tokens) replay byte-exactly; {edit_pairs} 200-token pairs match the LCS edit count"
    ))
}

fn random_edits(rng: &mut ChaCha8Rng, len: usize) -> Vec<Edit> {
    let mut cuts: Vec<usize> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(0..=len)).collect();
    cuts.sort_unstable();
    cuts.dedup();
    let mut edits = Vec::new();
    for (k, &at) in cuts.iter().enumerate() {
        let limit = cuts.get(k + 1).copied().unwrap_or(len);
        let span_to = |rng: &mut ChaCha8Rng| Span::new(at, (at + rng.gen_range(1..=20)).min(limit));
        let fresh = |rng: &mut ChaCha8Rng| {
            let mut t = words(rng, 1, 4);
            if rng.gen_bool(0.3) {
                t.push_str(". ");
            } else if rng.gen_bool(0.2) {
                t.push_str("\n\n");
            } else {
                t.push(' ');
            }
            t
        };
        let edit = match rng.gen_range(0..3) {
            0 => Edit::insert(at, fresh(rng)),
            1 => Edit::delete(span_to(rng)),
            _ => Edit::replace(span_to(rng), fresh(rng)),
        };
        if edit.at.is_empty() && edit.kind != textanchor::doc::EditKind::Insert {
            continue;
        }
        edits.push(edit);
    }
    edits
}

fn check_anchor(head: &DocumentVersion, t: &CommentThread) -> Result<(), String> {
    let a = &t.anchor;
    if a.status == AnchorStatus::Orphaned {
        return ensure(a.span.is_none(), || format!("{}: orphaned anchor keeps a span", t.thread_id));
    }
    let span = a.span.ok_or_else(|| format!("{}: live anchor without span", t.thread_id))?;
    let text = head.slice(span).map_err(|e| format!("{}: {e}", t.thread_id))?;
    ensure(text == a.anchor_text, || format!("{}: slice {text:?} != anchor_text {:?}", t.thread_id, a.anchor_text))?;
    let acw: &Acw = a.acw.as_ref().ok_or_else(|| format!("{}: no window", t.thread_id))?;
    ensure(acw.span.contains(&span) && head.slice(acw.span).ok() == Some(acw.text.as_str()), || {
        format!("{}: window does not cover anchor", t.thread_id)
    })
}

fn reanchoring_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let scripts = 500;
    let (mut batches, mut checks) = (0, 0);
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for n in 0..scripts {
        let doc = gen_doc(&mut rng);
        let mut s = session(&doc.text, SessionConfig::default());
        let head = s.head().clone();
        for k in 0..rng.gen_range(3..=8) {
            let (_, span) = random_word_span(&mut rng, &doc);
            let anchor = Anchor::at_span(k + 1, &head, span).map_err(|e| e.to_string())?;
            let t = CommentThread::new(format!("s-t{}", k + 1), anchor, Origin::UserInitiated);
            s.commit(CommitItem::Thread(t)).map_err(|e| e.to_string())?;
        }
        for _ in 0..rng.gen_range(1..=6) {
            let head = s.head().clone();
            let batch = random_edits(&mut rng, head.len());
            apply_edits(&mut s, head.version_id(), &batch).map_err(|e| format!("script {n}: {e}"))?;
            batches += 1;
            let head = s.head().clone();
            for t in s.threads() {
                check_anchor(&head, t).map_err(|e| format!("script {n}: {e}"))?;
                *seen.entry(format!("{:?}", t.anchor.status).to_lowercase()).or_default() += 1;
                checks += 1;
            }
        }
        let violations = commands::check_threads(&s);
        ensure(violations.is_empty(), || format!("script {n}: {violations:?}"))?;
    }
    Ok(format!("{scripts} scripts, {batches} batches, {checks} anchor checks, zero violations; statuses {seen:?}"))
}

const ABSENT_WORDS: &[&str] = &["zebra", "quartz", "violin", "harbor", "maple"];

fn hallucination_filtering() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut injected, mut planted, mut skipped) = (0, 0, 0);
    for d in 0..300 {
        let doc = gen_doc(&mut rng);
        let v = ingest(&doc.text);
        let norm_doc = oracle_norm(&doc.text);
        let mut proposals = Vec::new();
        let mut expected_spans = Vec::new();
        for k in 0..rng.gen_range(1..=4) {
            let (_, span) = random_word_span(&mut rng, &doc);
            let acw = expand_acw(&v, span).map_err(|e| e.to_string())?;
            if acw.ambiguity_flag || expected_spans.contains(&span) {
                skipped += 1;
                continue;
            }
            let mut anchor = doc.text[span.start..span.end].to_owned();
            if rng.gen_bool(0.3) {
                anchor = anchor.to_uppercase().replace(' ', "  ");
            }
            let acw_text = (acw.level != AcwLevel::Exact).then(|| acw.text.clone());
            proposals.push(serde_json::json!({"anchor_text": anchor, "acw_text": acw_text, "comment": format!("planted {k}")}));
            expected_spans.push(span);
        }
        let mut absent = Vec::new();
        for k in 0..rng.gen_range(1..=3) {
            let mut phrase: Vec<&str> = (0..rng.gen_range(1..=3)).map(|_| *VOCAB.choose(&mut rng).unwrap()).collect();
            let at = rng.gen_range(0..=phrase.len());
            phrase.insert(at, ABSENT_WORDS.choose(&mut rng).unwrap());
            let phrase = phrase.join(" ");
            ensure(!norm_doc.contains(&oracle_norm(&phrase)), || "generator produced a present phrase".into())?;
            proposals.push(serde_json::json!({"anchor_text": phrase, "comment": format!("injected {k}")}));
            absent.push(phrase);
        }
        proposals.shuffle(&mut rng);
        let provider = scripted(&[&serde_json::to_string(&proposals).unwrap()]);
        let config = SessionConfig { refine_ambiguous: false, ..SessionConfig::default() };
        let mut s = session(&doc.text, config);
        let result = run_meta_query(&mut s, &provider, "find problems").map_err(|e| format!("doc {d}: {e}"))?;

        let mut rejected: Vec<String> = Vec::new();
        for r in &result.rejected {
            ensure(r.reason == textanchor::anchor::RejectionReason::Hallucinated, || {
                format!("doc {d}: unexpected rejection {r:?}")
            })?;
            rejected.push(r.proposal.anchor_text.clone());
        }
        rejected.sort();
        absent.sort();
        ensure(rejected == absent, || format!("doc {d}: rejected {rejected:?}, injected {absent:?}"))?;
        let mut got: Vec<Span> = s.threads().iter().map(|t| t.anchor.span.unwrap()).collect();
        got.sort();
        expected_spans.sort();
        ensure(got == expected_spans, || format!("doc {d}: accepted {got:?}, planted {expected_spans:?}\n{}", doc.text))?;
        injected += absent.len();
        planted += expected_spans.len();
    }
    Ok(format!(
        "{injected}/{injected} absent anchors rejected as hallucinated; {planted}/{planted} planted anchors accepted at their spans ({skipped} unresolvable plants skipped)"
    ))
}

fn fuzz_input(rng: &mut ChaCha8Rng) -> String {
    let valid = [
        r#"[{"anchor_text":"more","comment":"Tighten."}]"#,
        r#"[{"anchor_text":"more","acw_text":"We want more time.","comment":"Redundant; tighten."},{"anchor_text":"b","comment":"c"}]"#,
        r#"{"action":"affirm","reply_text":"Better."}"#,
        "```json\n[{\"anchor_text\":\"x\",\"comment\":\"y\"}]\n```",
        "[]",
    ];
    let alphabet: Vec<char> = "[]{}\":,\\ \n\tabc_01-.nulltruefalseanchor_textcommentacw_text\u{0}é🙂".chars().collect();
    match rng.gen_range(0..4) {
        0 => {
            let bytes: Vec<u8> = (0..rng.gen_range(0..64)).map(|_| rng.gen()).collect();
            String::from_utf8_lossy(&bytes).into_owned()
        }
        1 => (0..rng.gen_range(0..80)).map(|_| *alphabet.choose(rng).unwrap()).collect(),
        _ => {
            let mut chars: Vec<char> = valid.choose(rng).unwrap().chars().collect();
            for _ in 0..rng.gen_range(1..=4) {
                let at = rng.gen_range(0..=chars.len());
                match rng.gen_range(0..4) {
                    0 if at < chars.len() => {
                        chars.remove(at);
                    }
                    1 => chars.insert(at, *alphabet.choose(rng).unwrap()),
                    2 => chars.truncate(at),
                    _ => {
                        let piece: Vec<char> = [r#""x""#, "null", "1", "{}", "[]", r#""":"#, r#","extra":1"#]
                            .choose(rng)
                            .unwrap()
                            .chars()
                            .collect();
                        chars.splice(at..at, piece);
                    }
                }
            }
            chars.into_iter().collect()
        }
    }
}

fn structured_output_robustness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let inputs = 10_000;
    let (mut lists, mut errors, mut replies) = (0, 0, 0);
    for i in 0..inputs {
        let raw = fuzz_input(&mut rng);
        let parsed = catch_unwind(|| parse_proposals(&raw)).map_err(|_| format!("input {i} panicked: {raw:?}"))?;
        match parsed {
            Ok(list) => {
                for p in &list {
                    ensure(!p.anchor_text.trim().is_empty() && !p.comment.trim().is_empty(), || {
                        format!("input {i}: accepted empty field {raw:?}")
                    })?;
                }
                lists += 1;
            }
            Err(e) => {
                ensure(!e.reason.is_empty() && !e.position.is_empty(), || format!("input {i}: empty SchemaError"))?;
                errors += 1;
            }
        }
        let reply = catch_unwind(|| parse_thread_reply(&raw)).map_err(|_| format!("reply {i} panicked: {raw:?}"))?;
        if let Ok(r) = reply {
            ensure(!r.reply_text.trim().is_empty(), || format!("reply {i}: empty reply accepted"))?;
            replies += 1;
        }
    }

    // batch atomicity: any failure leaves the session untouched
    let mut trials = 0;
    for i in 0..200 {
        let mut s = session(MORE_TEXT, SessionConfig::default());
        let seed = scripted(&[r#"[{"anchor_text":"Managers ask for more output.","comment":"ok"}]"#]);
        run_meta_query(&mut s, &seed, "q").map_err(|e| e.to_string())?;
        let before = s.state_hash();
        let bad = |rng: &mut ChaCha8Rng| loop {
            let raw = fuzz_input(rng);
            if parse_proposals(&raw).is_err() {
                break raw;
            }
        };
        let provider = match i % 3 {
            0 => scripted(&[&bad(&mut rng), &bad(&mut rng)]),
            1 => scripted(&[&bad(&mut rng)]),
            _ => scripted(&[r#"[{"anchor_text":"People want","comment":"fine"},{"anchor_text":"more","comment":""}]"#, &bad(&mut rng)]),
        };
        let result = run_meta_query(&mut s, &provider, "q");
        ensure(result.is_err(), || format!("trial {i}: invalid output accepted"))?;
        ensure(s.state_hash() == before && s.threads().len() == 1, || format!("trial {i}: session changed after failure"))?;
        trials += 1;
    }
    Ok(format!(
        "{inputs} fuzzed inputs: {lists} valid lists, {errors} SchemaErrors, 0 panics ({replies} valid thread replies); {trials} failed batches left the session unchanged"
    ))
}

fn golden_determinism() -> Outcome {
    let text = read_fixture("essay.md");
    let golden = read_fixture("annotate_golden.json");
    let mut outputs = Vec::new();
    for _ in 0..3 {
        let provider = MockProvider::from_file(&fixture("annotate_mock.json")).map_err(|e| e.to_string())?;
        let (_, a) = annotate(&text, ESSAY_QUERY, &provider).map_err(|e| e.to_string())?;
        outputs.push(annotation_json(&a).into_bytes());
    }
    for _ in 0..2 {
        let o = Process::new(env!("CARGO_BIN_EXE_textanchor"))
            .args(["annotate", "--doc"])
            .arg(fixture("essay.md"))
            .args(["--query", ESSAY_QUERY, "--mock"])
            .arg(fixture("annotate_mock.json"))
            .output()
            .map_err(|e| e.to_string())?;
        ensure(o.status.success(), || String::from_utf8_lossy(&o.stderr).into_owned())?;
        outputs.push(o.stdout);
    }
    for (i, out) in outputs.iter().enumerate() {
        ensure(out.as_slice() == golden.as_bytes(), || format!("run {i} differs from golden"))?;
    }
    Ok(format!("{} runs (3 library, 2 binary) byte-identical to the {}-byte golden file", outputs.len(), golden.len()))
}

fn dual_context_prompt() -> Outcome {
    let first = r#"{"action":"update","reply_text":"Try cutting the second half of the sentence."}"#;
    let second = r#"{"action":"acknowledge","reply_text":"Yes, the shorter sentence reads better."}"#;
    let provider = scripted(&[first, second]);
    let mut s = session(MORE_TEXT, SessionConfig::default());
    let sentence = "Meetings add more updates than anyone can read.";
    let at = MORE_TEXT.find(sentence).unwrap() + "Meetings add ".len();
    let anchor_span = Span::new(at, at + "more".len());
    let t = create_user_thread(&mut s, &provider, Some(anchor_span), "Is 'more' needed here?").map_err(|e| e.to_string())?;
    let original_acw = t.anchor.acw.clone().ok_or("no window")?;
    ensure(original_acw.level == AcwLevel::Sentence, || format!("initial window {original_acw:?}"))?;

    // edit inside the window, after the anchor
    let tail = MORE_TEXT.find("than anyone can read").unwrap();
    let old = Span::new(tail, tail + "than anyone can read".len());
    apply_edits(&mut s, 0, &[Edit::replace(old, "nobody reads")]).map_err(|e| e.to_string())?;
    reply_in_thread(&mut s, &provider, &t.thread_id, "Is this version better?").map_err(|e| e.to_string())?;

    let prompt = provider.prompts().pop().ok_or("no prompt recorded")?;
    let order: Vec<&str> = prompt.context_blocks.iter().map(|b| b.label.as_str()).collect();
    let expected = [labels::ACW, labels::DOCUMENT, labels::THREAD_HISTORY, labels::LOCALIZED_CHANGE];
    ensure(order == expected, || format!("block order {order:?}"))?;
    let block = |label: &str| prompt.context_blocks.iter().find(|b| b.label == label).map(|b| b.content.clone()).unwrap();

    let head = s.head().clone();
    ensure(block(labels::DOCUMENT) == head.text(), || "document block is not the full updated text".into())?;

    let acw_block = block(labels::ACW);
    let window = acw_block.split_once('\n').map(|(_, w)| w).ok_or("acw block has no window")?;
    let hits = find_occurrences(&head, window);
    ensure(hits.len() == 1, || format!("window {window:?} is not a unique passage of the document"))?;
    let anchor_now = s.thread(&t.thread_id).unwrap().anchor.span.ok_or("anchor lost")?;
    let change = Span::new(tail, tail + "nobody reads".len());
    ensure(hits[0].contains(&anchor_now) && hits[0].contains(&change), || {
        format!("window {} misses anchor {anchor_now} or change {change}", hits[0])
    })?;

    let history = block(labels::THREAD_HISTORY);
    let lines: Vec<&str> = history.lines().collect();
    let want = [
        "user: Is 'more' needed here?",
        "ai: Try cutting the second half of the sentence.",
        "user: Is this version better?",
    ];
    ensure(lines == want, || format!("history {lines:?}"))?;
    ensure(block(labels::LOCALIZED_CHANGE).contains("nobody reads"), || "localized change not summarized".into())?;
    Ok(format!("blocks {order:?}; window {window:?} covers anchor and edit; history has all {} messages", lines.len()))
}

/// Independent edit distance: memoized recursion over word slices.
fn oracle_distance(a: &[&str], b: &[&str]) -> usize {
    fn go(a: &[&str], b: &[&str], i: usize, j: usize, memo: &mut [Vec<Option<usize>>]) -> usize {
        if i == a.len() {
            return b.len() - j;
        }
        if j == b.len() {
            return a.len() - i;
        }
        if let Some(v) = memo[i][j] {
            return v;
        }
        let v = if a[i] == b[j] {
            go(a, b, i + 1, j + 1, memo)
        } else {
            1 + go(a, b, i + 1, j, memo).min(go(a, b, i, j + 1, memo)).min(go(a, b, i + 1, j + 1, memo))
        };
        memo[i][j] = Some(v);
        v
    }
    go(a, b, 0, 0, &mut vec![vec![None; b.len()]; a.len()])
}

fn run_metrics_cli(dir: &std::path::Path, log: &str, initial: &str, final_text: &str) -> Result<serde_json::Value, String> {
    let (e, i, f) = (dir.join("events.ndjson"), dir.join("initial.txt"), dir.join("final.txt"));
    std::fs::write(&e, log).map_err(|x| x.to_string())?;
    std::fs::write(&i, initial).map_err(|x| x.to_string())?;
    std::fs::write(&f, final_text).map_err(|x| x.to_string())?;
    let cli = Cli::try_parse_from([
        "textanchor", "metrics", "--events", e.to_str().unwrap(), "--initial", i.to_str().unwrap(), "--final", f.to_str().unwrap(),
    ])
    .map_err(|x| x.to_string())?;
    let mut out = Vec::new();
    commands::run(cli, &mut out).map_err(|x| x.to_string())?;
    let out = String::from_utf8(out).map_err(|x| x.to_string())?;
    serde_json::from_str(&out[out.find('{').ok_or("no json")?..]).map_err(|x| x.to_string())
}

fn paste_line(second: usize, text: &str, source: &str) -> String {
    let event = serde_json::json!({
        "timestamp": format!("2024-01-01T00:{:02}:{:02}Z", second / 60, second % 60),
        "kind": "paste",
        "payload": {"text": text, "source": source},
    });
    format!("{event}\n")
}

fn metrics_oracle() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    // by hand: pastes of 3, 5 and 10 words -> mean 6; "a b c d" -> "a x c" is
    // one substitution and one deletion over 4 words -> 0.5
    let log = paste_line(0, "one two three", "feedback-pane")
        + &paste_line(10, "a b c d e", "external")
        + &paste_line(20, "1 2 3 4 5 6 7 8 9 10", "feedback-pane");
    let m = run_metrics_cli(dir.path(), &log, "a b c d", "a x c")?;
    ensure(m["copy_paste_actions"] == 3, || format!("{m}"))?;
    ensure(m["words_pasted_per_action"]["mean"] == 6.0, || format!("{m}"))?;
    ensure(m["words_pasted_per_action"]["per_event"] == serde_json::json!([3, 5, 10]), || format!("{m}"))?;
    ensure(m["percent_document_changed"] == 0.5, || format!("{m}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let logs = 100;
    for n in 0..logs {
        let mut log = String::new();
        let mut counts = Vec::new();
        for k in 0..rng.gen_range(0..12) {
            let c = rng.gen_range(0..40);
            log.push_str(&paste_line(k * 10, &words(&mut rng, c, c), "feedback-pane"));
            counts.push(c);
        }
        let initial = words(&mut rng, 0, 60);
        let final_text = mutate(&mut rng, &initial);
        let m = run_metrics_cli(dir.path(), &log, &initial, &final_text)?;
        let mean = if counts.is_empty() { 0.0 } else { counts.iter().sum::<usize>() as f64 / counts.len() as f64 };
        ensure(m["words_pasted_per_action"]["mean"].as_f64() == Some(mean), || format!("log {n}: mean {m}"))?;
        let a: Vec<&str> = initial.split_whitespace().collect();
        let b: Vec<&str> = final_text.split_whitespace().collect();
        let denom = a.len().max(b.len());
        let expected = if denom == 0 { 0.0 } else { oracle_distance(&a, &b) as f64 / denom as f64 };
        let got = m["percent_document_changed"].as_f64().ok_or("missing percent")?;
        ensure((got - expected).abs() <= 1e-9, || format!("log {n}: {got} vs oracle {expected}"))?;
    }
    Ok(format!("hand-computed log exact (mean 6, 50% changed); {logs} random logs within 1e-9 of the oracle"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("acw-minimality", acw_minimality),
        ("redundant-more-revision", redundant_more_scenario),
        ("diff-fidelity", diff_fidelity),
        ("reanchoring-soundness", reanchoring_soundness),
        ("hallucination-filtering", hallucination_filtering),
        ("structured-output-robustness", structured_output_robustness),
        ("end-to-end-determinism", golden_determinism),
        ("dual-context-prompt", dual_context_prompt),
        ("metrics-oracle", metrics_oracle),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
