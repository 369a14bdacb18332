//! PII detector suite.
//!
//! Three kinds of detectors feed one suite: structural flags (ground truth from
//! the device), common-format regular expressions and an entity recognizer.
//! Every detector can also answer whether a string tail could still grow into
//! one of its matches, which the keystroke redactor uses for provisional tags.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use regex_automata::dfa::{dense, Automaton};
use regex_automata::util::syntax;
use regex_automata::{Anchored, Input, MatchKind};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Catalogue shipped with the crate.
pub const DEFAULT_CATALOGUE: &str = include_str!("../data/common_formats.tsv");
/// Gazetteer shipped with the crate.
pub const DEFAULT_GAZETTEER: &str = include_str!("../data/default_gazetteer.tsv");

/// A half-open character range carrying one or more tag labels.
///
/// Offsets count Unicode scalar values, not bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RedactionSpan {
    pub start: usize,
    pub end: usize,
    pub tags: BTreeSet<String>,
}

impl RedactionSpan {
    pub fn new(start: usize, end: usize, tag: impl Into<String>) -> Self {
        let mut tags = BTreeSet::new();
        tags.insert(tag.into());
        Self { start, end, tags }
    }

    pub fn with_tags<I, S>(start: usize, end: usize, tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            start,
            end,
            tags: tags.into_iter().map(Into::into).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn is_compound(&self) -> bool {
        self.tags.len() > 1
    }

    /// True when the two ranges share at least one character.
    pub fn intersects(&self, other: &RedactionSpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, other: &RedactionSpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    /// `<tag>` or `<tag1|tag2>`.
    pub fn placeholder(&self) -> String {
        placeholder_for(&self.tags)
    }
}

pub fn placeholder_for(tags: &BTreeSet<String>) -> String {
    let joined: Vec<&str> = tags.iter().map(String::as_str).collect();
    format!("<{}>", joined.join("|"))
}

/// Overlap resolution class. Lower runs first and wins overlaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Priority {
    Structural = 0,
    Format = 1,
    Entity = 2,
}

/// A match in byte offsets, as produced by an individual detector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Match {
    pub range: Range<usize>,
    pub tags: BTreeSet<String>,
}

pub trait Detector: Send + Sync + fmt::Debug {
    /// Primary tag label.
    fn label(&self) -> &str;

    fn priority(&self) -> Priority;

    /// All matches in `text`, byte offsets.
    fn find(&self, text: &str) -> Vec<Match>;

    /// Could `text[start..]` be extended into a match beginning at `start`?
    ///
    /// Must never answer `false` for a true prefix of a match.
    fn possible_prefix(&self, text: &str, start: usize) -> bool;
}

/// One catalogue line compiled: a search regex plus an anchored prefix DFA.
pub struct FormatDetector {
    label: String,
    pattern: String,
    regex: Regex,
    prefix_dfa: dense::DFA<Vec<u32>>,
    min_chars: usize,
}

impl fmt::Debug for FormatDetector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FormatDetector")
            .field("label", &self.label)
            .field("pattern", &self.pattern)
            .field("min_chars", &self.min_chars)
            .finish()
    }
}

impl FormatDetector {
    pub fn new(label: &str, pattern: &str, min_chars: usize) -> Result<Self> {
        let regex = Regex::new(pattern).map_err(|e| Error::Pattern {
            label: label.to_string(),
            message: e.to_string(),
        })?;
        // MatchKind::All keeps every thread alive, so a dead state really
        // means no extension can match.
        let prefix_dfa = dense::Builder::new()
            .configure(
                dense::Config::new()
                    .match_kind(MatchKind::All)
                    .start_kind(regex_automata::dfa::StartKind::Anchored)
                    .unicode_word_boundary(true),
            )
            .syntax(syntax::Config::new())
            .build(pattern)
            .map_err(|e| Error::Pattern {
                label: label.to_string(),
                message: e.to_string(),
            })?;
        Ok(Self {
            label: label.to_string(),
            pattern: pattern.to_string(),
            regex,
            prefix_dfa,
            min_chars,
        })
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }
}

impl Detector for FormatDetector {
    fn label(&self) -> &str {
        &self.label
    }

    fn priority(&self) -> Priority {
        Priority::Format
    }

    fn find(&self, text: &str) -> Vec<Match> {
        self.regex
            .find_iter(text)
            .filter(|m| !m.is_empty() && m.as_str().chars().count() >= self.min_chars)
            .map(|m| Match {
                range: m.range(),
                tags: BTreeSet::from([self.label.clone()]),
            })
            .collect()
    }

    fn possible_prefix(&self, text: &str, start: usize) -> bool {
        let input = Input::new(text)
            .range(start..text.len())
            .anchored(Anchored::Yes);
        let mut state = match self.prefix_dfa.start_state_forward(&input) {
            Ok(s) => s,
            // Quit on the look-behind byte: undecidable, so stay conservative.
            Err(_) => return true,
        };
        for &b in &text.as_bytes()[start..] {
            state = self.prefix_dfa.next_state(state, b);
            if self.prefix_dfa.is_dead_state(state) {
                return false;
            }
            if self.prefix_dfa.is_quit_state(state) {
                return true;
            }
        }
        true
    }
}

/// Parse a catalogue file: `label<TAB>pattern[<TAB>min_chars]`, `#` comments.
pub fn parse_catalogue(source: &str) -> Result<Vec<FormatDetector>> {
    let mut out = Vec::new();
    for (lineno, line) in source.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        let (label, pattern) = match (cols.next(), cols.next()) {
            (Some(l), Some(p)) if !l.is_empty() && !p.is_empty() => (l, p),
            _ => {
                return Err(Error::Format {
                    line: lineno + 1,
                    message: "expected label<TAB>pattern".into(),
                })
            }
        };
        let min_chars = match cols.next().map(str::trim) {
            None | Some("") => 0,
            Some(n) => n.parse().map_err(|_| Error::Format {
                line: lineno + 1,
                message: format!("bad minimum length {n:?}"),
            })?,
        };
        out.push(FormatDetector::new(&label.to_lowercase(), pattern, min_chars)?);
    }
    Ok(out)
}

/// Case-insensitive longest-match surface-form lookup.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    /// folded form -> labels
    forms: BTreeMap<String, BTreeSet<String>>,
    max_words: usize,
}

/// Labels whose tokens must be capitalized to count as entity mentions.
const CAPITALIZED_LABELS: &[&str] = &["person"];

fn word_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\p{L}\p{N}][\p{L}\p{N}'’&-]*").unwrap())
}

fn fold(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

impl Gazetteer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, label: &str, surface: &str) {
        let folded = fold(surface);
        if folded.is_empty() {
            return;
        }
        self.max_words = self.max_words.max(folded.split(' ').count());
        self.forms
            .entry(folded)
            .or_default()
            .insert(label.trim().to_lowercase());
    }

    /// `label<TAB>surface form` per line.
    pub fn parse(source: &str) -> Result<Self> {
        let mut g = Self::new();
        for (lineno, line) in source.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once('\t') {
                Some((label, form)) if !label.trim().is_empty() => g.insert(label, form),
                _ => {
                    return Err(Error::Format {
                        line: lineno + 1,
                        message: "expected label<TAB>surface form".into(),
                    })
                }
            }
        }
        Ok(g)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.forms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }

    pub fn lookup(&self, surface: &str) -> Option<&BTreeSet<String>> {
        self.forms.get(&fold(surface))
    }

    fn allowed_labels(labels: &BTreeSet<String>, words: &[&str]) -> BTreeSet<String> {
        let capitalized = words
            .iter()
            .all(|w| w.chars().next().is_some_and(char::is_uppercase));
        labels
            .iter()
            .filter(|l| capitalized || !CAPITALIZED_LABELS.contains(&l.as_str()))
            .cloned()
            .collect()
    }
}

impl Detector for Gazetteer {
    fn label(&self) -> &str {
        "entity"
    }

    fn priority(&self) -> Priority {
        Priority::Entity
    }

    fn find(&self, text: &str) -> Vec<Match> {
        let words: Vec<Range<usize>> = word_regex().find_iter(text).map(|m| m.range()).collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < words.len() {
            let mut found = None;
            let longest = self.max_words.min(words.len() - i);
            for k in (1..=longest).rev() {
                let span = &words[i..i + k];
                // multi-word forms only across whitespace gaps
                let contiguous = span
                    .windows(2)
                    .all(|w| text[w[0].end..w[1].start].chars().all(char::is_whitespace));
                if !contiguous {
                    continue;
                }
                let parts: Vec<&str> = span.iter().map(|r| &text[r.clone()]).collect();
                if let Some(labels) = self.forms.get(&fold(&parts.join(" "))) {
                    let labels = Self::allowed_labels(labels, &parts);
                    if !labels.is_empty() {
                        found = Some((k, labels));
                        break;
                    }
                }
            }
            match found {
                Some((k, tags)) => {
                    out.push(Match {
                        range: words[i].start..words[i + k - 1].end,
                        tags,
                    });
                    i += k;
                }
                None => i += 1,
            }
        }
        out
    }

    fn possible_prefix(&self, text: &str, start: usize) -> bool {
        let tail = &text[start..];
        if tail.is_empty() {
            return true;
        }
        let prev_is_word = text[..start]
            .chars()
            .next_back()
            .is_some_and(char::is_alphanumeric);
        if prev_is_word {
            return false;
        }
        let trailing_space = tail.ends_with(char::is_whitespace);
        let mut folded = fold(tail);
        if trailing_space && !folded.is_empty() {
            folded.push(' ');
        }
        let words: Vec<&str> = tail.split_whitespace().collect();
        self.forms
            .range(folded.clone()..)
            .take_while(|(form, _)| form.starts_with(&folded))
            .any(|(_, labels)| !Self::allowed_labels(labels, &words).is_empty())
    }
}

/// Whole-field detector used for device-flagged inputs.
#[derive(Debug, Clone)]
pub struct StructuralDetector {
    label: String,
}

impl StructuralDetector {
    pub fn new(label: &str) -> Self {
        Self {
            label: label.to_string(),
        }
    }
}

impl Detector for StructuralDetector {
    fn label(&self) -> &str {
        &self.label
    }

    fn priority(&self) -> Priority {
        Priority::Structural
    }

    fn find(&self, text: &str) -> Vec<Match> {
        if text.is_empty() {
            return Vec::new();
        }
        vec![Match {
            range: 0..text.len(),
            tags: BTreeSet::from([self.label.clone()]),
        }]
    }

    fn possible_prefix(&self, _text: &str, _start: usize) -> bool {
        true
    }
}

fn placeholder_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<[a-z][a-z0-9_ ]*(?:\|[a-z][a-z0-9_ ]*)*>").unwrap())
}

/// Byte ranges of tag placeholders already present in `text`.
pub fn placeholder_ranges(text: &str) -> Vec<Range<usize>> {
    placeholder_regex().find_iter(text).map(|m| m.range()).collect()
}

pub fn is_placeholder(token: &str) -> bool {
    placeholder_regex()
        .find(token)
        .is_some_and(|m| m.start() == 0 && m.end() == token.len())
}

/// Byte offset of every char boundary, including `text.len()`.
pub(crate) fn char_boundaries(text: &str) -> Vec<usize> {
    text.char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect()
}

/// A redacted string together with where its placeholders sit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Redacted {
    pub text: String,
    /// Spans over `text` (each covers exactly one placeholder).
    pub spans: Vec<RedactionSpan>,
}

/// Replace every span of `raw` (char offsets, sorted, disjoint) by its placeholder.
pub fn materialize(raw: &[char], spans: &[RedactionSpan]) -> Redacted {
    let mut text = String::with_capacity(raw.len());
    let mut out_spans = Vec::with_capacity(spans.len());
    let mut cursor = 0;
    let mut out_len = 0;
    for span in spans {
        debug_assert!(span.start >= cursor && span.end <= raw.len());
        for &c in &raw[cursor..span.start] {
            text.push(c);
        }
        out_len += span.start - cursor;
        let ph = span.placeholder();
        let ph_len = ph.chars().count();
        text.push_str(&ph);
        out_spans.push(RedactionSpan {
            start: out_len,
            end: out_len + ph_len,
            tags: span.tags.clone(),
        });
        out_len += ph_len;
        cursor = span.end;
    }
    for &c in &raw[cursor..] {
        text.push(c);
    }
    Redacted {
        text,
        spans: out_spans,
    }
}

/// Ordered detector suite.
#[derive(Debug, Default)]
pub struct DetectorSuite {
    detectors: Vec<Box<dyn Detector>>,
}

impl DetectorSuite {
    pub fn new() -> Self {
        Self::default()
    }

    /// Bundled regex catalogue plus bundled gazetteer.
    pub fn standard() -> Self {
        let mut suite = Self::new();
        for d in parse_catalogue(DEFAULT_CATALOGUE).expect("bundled catalogue compiles") {
            suite.push(Box::new(d));
        }
        suite.push(Box::new(
            Gazetteer::parse(DEFAULT_GAZETTEER).expect("bundled gazetteer parses"),
        ));
        suite
    }

    pub fn with_catalogue(catalogue: &str, gazetteer: Option<Gazetteer>) -> Result<Self> {
        let mut suite = Self::new();
        for d in parse_catalogue(catalogue)? {
            suite.push(Box::new(d));
        }
        if let Some(g) = gazetteer {
            suite.push(Box::new(g));
        }
        Ok(suite)
    }

    pub fn push(&mut self, detector: Box<dyn Detector>) {
        self.detectors.push(detector);
    }

    pub fn detectors(&self) -> &[Box<dyn Detector>] {
        &self.detectors
    }

    /// Labels of detectors for which `text[start_char..]` may still become a match.
    pub fn possible_prefix_labels(&self, text: &str, start_char: usize) -> BTreeSet<String> {
        let bounds = char_boundaries(text);
        let Some(&start) = bounds.get(start_char) else {
            return BTreeSet::new();
        };
        self.detectors
            .iter()
            .filter(|d| d.priority() != Priority::Structural)
            .filter(|d| d.possible_prefix(text, start))
            .map(|d| d.label().to_string())
            .collect()
    }

    /// Union of all detector spans with overlaps resolved: priority first,
    /// then longest, then leftmost. Identical ranges at equal priority merge
    /// their tags, and a loser that only partly overlaps the winners is
    /// merged with them into one compound span. Existing placeholders are
    /// never matched into.
    pub fn detect_all(&self, text: &str) -> Vec<RedactionSpan> {
        let masked = placeholder_ranges(text);
        let mut candidates: Vec<(Priority, Match)> = Vec::new();
        for d in &self.detectors {
            for m in d.find(text) {
                if masked
                    .iter()
                    .any(|p| p.start < m.range.end && m.range.start < p.end)
                {
                    continue;
                }
                candidates.push((d.priority(), m));
            }
        }
        candidates.sort_by(|(pa, a), (pb, b)| {
            pa.cmp(pb)
                .then((b.range.end - b.range.start).cmp(&(a.range.end - a.range.start)))
                .then(a.range.start.cmp(&b.range.start))
        });

        let mut accepted: Vec<(Priority, Match)> = Vec::new();
        for (prio, m) in candidates {
            if let Some((_, same)) = accepted
                .iter_mut()
                .find(|(p, a)| *p == prio && a.range == m.range)
            {
                same.tags.extend(m.tags);
                continue;
            }
            let (mut hit, rest): (Vec<_>, Vec<_>) = accepted
                .into_iter()
                .partition(|(_, a)| a.range.start < m.range.end && m.range.start < a.range.end);
            accepted = rest;
            if hit.is_empty() {
                accepted.push((prio, m));
                continue;
            }
            hit.sort_by_key(|(_, a)| a.range.start);
            if covered(&hit, &m.range) {
                accepted.extend(hit);
                continue;
            }
            // A loser that sticks out of the winners would leave a fragment
            // behind; merge it into one compound span instead.
            let mut merged = m;
            let mut best = prio;
            for (p, a) in hit {
                best = best.min(p);
                merged.range = merged.range.start.min(a.range.start)..merged.range.end.max(a.range.end);
                merged.tags.extend(a.tags);
            }
            accepted.push((best, merged));
        }
        accepted.sort_by_key(|(_, m)| m.range.start);

        let bounds = char_boundaries(text);
        let to_char = |b: usize| bounds.binary_search(&b).unwrap_or_else(|i| i);
        accepted
            .into_iter()
            .map(|(_, m)| RedactionSpan {
                start: to_char(m.range.start),
                end: to_char(m.range.end),
                tags: m.tags,
            })
            .collect()
    }

    /// Spans (raw char offsets) whose replacement leaves nothing detectable.
    ///
    /// Replacing a winner can expose a match that lost an overlap; detection is
    /// repeated on the redacted text until it comes back empty.
    pub fn redaction_spans(&self, text: &str) -> Vec<RedactionSpan> {
        let raw: Vec<char> = text.chars().collect();
        let mut spans = self.detect_all(text);
        loop {
            let red = materialize(&raw, &spans);
            let extra = self.detect_all(&red.text);
            if extra.is_empty() {
                return spans;
            }
            // output offset -> raw offset, valid outside placeholders
            let mut added = Vec::with_capacity(extra.len());
            for e in extra {
                let start = out_to_raw(&spans, &red.spans, e.start);
                let end = out_to_raw(&spans, &red.spans, e.end - 1) + 1;
                added.push(RedactionSpan {
                    start,
                    end,
                    tags: e.tags,
                });
            }
            spans.extend(added);
            spans.sort();
        }
    }

    pub fn redact(&self, text: &str) -> Redacted {
        let raw: Vec<char> = text.chars().collect();
        materialize(&raw, &self.redaction_spans(text))
    }
}

/// Whether disjoint, start-sorted `spans` leave no gap inside `range`.
fn covered(spans: &[(Priority, Match)], range: &Range<usize>) -> bool {
    let mut reach = range.start;
    for (_, a) in spans {
        if a.range.start > reach {
            return false;
        }
        reach = reach.max(a.range.end);
    }
    reach >= range.end
}

fn out_to_raw(raw_spans: &[RedactionSpan], out_spans: &[RedactionSpan], pos: usize) -> usize {
    let mut shift: isize = 0;
    for (r, o) in raw_spans.iter().zip(out_spans) {
        if o.end <= pos {
            shift += r.len() as isize - o.len() as isize;
        } else {
            break;
        }
    }
    (pos as isize + shift) as usize
}

/// Detect with the standard suite and replace spans by placeholders.
pub fn redact_string(text: &str) -> Redacted {
    standard_suite().redact(text)
}

/// Process-wide standard suite; construction compiles every DFA once.
pub fn standard_suite() -> &'static DetectorSuite {
    static SUITE: OnceLock<DetectorSuite> = OnceLock::new();
    SUITE.get_or_init(DetectorSuite::standard)
}

/// Common-format spans only, from the bundled catalogue.
pub fn match_common_formats(text: &str) -> Vec<RedactionSpan> {
    static SUITE: OnceLock<DetectorSuite> = OnceLock::new();
    SUITE
        .get_or_init(|| DetectorSuite::with_catalogue(DEFAULT_CATALOGUE, None).unwrap())
        .detect_all(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(spans: &[RedactionSpan]) -> Vec<String> {
        spans.iter().map(RedactionSpan::placeholder).collect()
    }

    fn text_of(text: &str, s: &RedactionSpan) -> String {
        text.chars().skip(s.start).take(s.len()).collect()
    }

    #[test]
    fn ip_in_sentence() {
        let t = "ip 10.0.0.1 port";
        let spans = standard_suite().detect_all(t);
        assert_eq!(spans.len(), 1);
        assert_eq!(tags(&spans), ["<ip>"]);
        assert_eq!(text_of(t, &spans[0]), "10.0.0.1");
    }

    #[test]
    fn nothing_to_find() {
        assert!(standard_suite().detect_all("no pii here").is_empty());
    }

    #[test]
    fn url_and_date_are_disjoint() {
        let t = "visit http://a.b/c on 5/6/2021";
        let spans = standard_suite().detect_all(t);
        assert_eq!(tags(&spans), ["<url>", "<date>"]);
        assert_eq!(text_of(t, &spans[0]), "http://a.b/c");
        assert_eq!(text_of(t, &spans[1]), "5/6/2021");
        assert!(spans[0].end <= spans[1].start);
    }

    #[test]
    fn parenthesized_phone_covers_all_chars() {
        let spans = match_common_formats("(215) 555-0100");
        assert_eq!(spans, vec![RedactionSpan::new(0, 14, "phone")]);
    }

    #[test]
    fn price() {
        assert_eq!(
            match_common_formats("$19.99"),
            vec![RedactionSpan::new(0, 6, "price")]
        );
    }

    #[test]
    fn short_digit_run_is_not_a_phone() {
        assert!(match_common_formats("555").is_empty());
    }

    #[test]
    fn catalogue_labels() {
        let cases = [
            ("call 555-123-4567", "phone"),
            ("mail bob@example.com", "email"),
            ("ssn 123-45-6789", "ssn"),
            ("card 4111 1111 1111 1111", "credit_card"),
            ("zip 19104", "zip"),
            ("at 3401 Walnut Street", "address"),
            ("on 2021-05-06", "date"),
            ("on March 5th", "date"),
            ("at 10:30 pm", "time"),
            ("v6 fe80::1", "ip"),
            ("see www.example.org/x", "url"),
        ];
        for (text, label) in cases {
            let spans = match_common_formats(text);
            assert_eq!(spans.len(), 1, "{text}: {spans:?}");
            assert_eq!(spans[0].tags, BTreeSet::from([label.to_string()]), "{text}");
        }
    }

    #[test]
    fn email_beats_embedded_domain() {
        let spans = match_common_formats("bob@example.com");
        assert_eq!(spans, vec![RedactionSpan::new(0, 15, "email")]);
    }

    #[test]
    fn redact_email() {
        assert_eq!(
            redact_string("email me at bob@example.com").text,
            "email me at <email>"
        );
        assert_eq!(redact_string("").text, "");
    }

    #[test]
    fn gazetteer_work_of_art() {
        let mut g = Gazetteer::new();
        g.insert("work of art", "Anna Karenina");
        let mut suite = DetectorSuite::with_catalogue(DEFAULT_CATALOGUE, None).unwrap();
        suite.push(Box::new(g));
        let r = suite.redact("reading Anna Karenina tonight");
        assert_eq!(r.text, "reading <work of art> tonight");
        assert_eq!(r.spans, vec![RedactionSpan::new(8, 21, "work of art")]);
    }

    #[test]
    fn gazetteer_is_case_insensitive_but_person_needs_capitals() {
        let g = Gazetteer::parse("person\tmark\nwork of art\tanna karenina\n").unwrap();
        assert_eq!(g.find("i mark it").len(), 0);
        assert_eq!(g.find("ask Mark").len(), 1);
        assert_eq!(g.find("ANNA  karenina").len(), 1);
        assert!(g.possible_prefix("reading anna ka", 8));
        assert!(!g.possible_prefix("reading annx", 8));
        assert!(!g.possible_prefix("readinganna", 7));
    }

    #[test]
    fn gazetteer_longest_match() {
        let g = Gazetteer::parse("org\tnew york\norg\tnew york times\n").unwrap();
        let m = g.find("the New York Times said");
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].range, 4..18);
    }

    #[test]
    fn malformed_catalogue_lines() {
        assert!(parse_catalogue("phone").is_err());
        assert!(parse_catalogue("phone\t(unclosed").is_err());
        assert!(parse_catalogue("phone\t[0-9]+\tx").is_err());
        assert!(Gazetteer::parse("no tab here").is_err());
    }

    #[test]
    fn prefix_predicate_on_phone() {
        let d = FormatDetector::new("phone", r"\b[0-9]{3}-[0-9]{3}-[0-9]{4}\b", 0).unwrap();
        let full = "call 555-123-4567";
        for end in 6..=full.len() {
            assert!(d.possible_prefix(&full[..end], 5), "{}", &full[..end]);
        }
        assert!(!d.possible_prefix("call 55a", 5));
        assert!(!d.possible_prefix("call 555-123-45678", 5));
    }

    #[test]
    fn placeholders_are_opaque() {
        let t = "mail <email> or <date|phone>";
        assert!(standard_suite().detect_all(t).is_empty());
        assert!(is_placeholder("<work of art>"));
        assert!(!is_placeholder("<3"));
    }

    #[test]
    fn same_range_same_priority_merges_tags() {
        let suite = DetectorSuite::with_catalogue("a\tfoo\nb\tfoo\n", None).unwrap();
        let spans = suite.detect_all("x foo");
        assert_eq!(spans, vec![RedactionSpan::with_tags(2, 5, ["a", "b"])]);
        assert_eq!(spans[0].placeholder(), "<a|b>");
    }

    #[test]
    fn structural_outranks_format() {
        let mut suite = DetectorSuite::with_catalogue(DEFAULT_CATALOGUE, None).unwrap();
        suite.push(Box::new(StructuralDetector::new("password")));
        let spans = suite.detect_all("call 555-123-4567");
        assert_eq!(spans, vec![RedactionSpan::new(0, 17, "password")]);
    }

    #[test]
    fn partial_overlap_becomes_compound() {
        // the phone pattern accepts a leading "1 ", which reaches into the ssn
        let t = "ok 051-52-7941 (500) 972-7722 later";
        let spans = standard_suite().detect_all(t);
        assert_eq!(spans, vec![RedactionSpan::with_tags(3, 29, ["phone", "ssn"])]);
        assert_eq!(redact_string(t).text, "ok <phone|ssn> later");
    }

    #[test]
    fn contained_loser_is_dropped() {
        let suite = DetectorSuite::with_catalogue("outer\tab-cd\ninner\tb-c\n", None).unwrap();
        assert_eq!(suite.detect_all("ab-cd"), vec![RedactionSpan::new(0, 5, "outer")]);
    }

    #[test]
    fn char_offsets_with_multibyte_text() {
        let t = "héllo 555-123-4567";
        let spans = standard_suite().detect_all(t);
        assert_eq!(spans, vec![RedactionSpan::new(6, 18, "phone")]);
    }
}
