//! Streaming redaction of character-at-a-time keystroke logs.
//!
//! Every keystroke produces a full snapshot of the text field. Snapshots of
//! one field are buffered until the entry completes (field cleared, inactivity
//! timeout, or end of stream). Two rollback passes keep partial strings from
//! leaking PII that is only recognizable once more characters arrive:
//!
//! 1. When a token completes, detections touching it are projected back onto
//!    every earlier snapshot typed since the token (or the detection) began.
//!    Provisional prefix tags on those snapshots are cleared first, so a
//!    token that turned out harmless leaves no tag behind.
//! 2. When the entry completes, detections on the final text are projected
//!    onto every retained snapshot. Spans wholly inside a final span take the
//!    final tag; spans that only partly overlap merge into a compound tag.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::detect::{materialize, DetectorSuite, RedactionSpan};
use crate::error::{Error, Result};

/// One logged snapshot of a text field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeystrokeEvent {
    pub user_id: String,
    pub timestamp: i64,
    pub app_id: String,
    pub current_text: String,
    #[serde(default)]
    pub is_password: bool,
    #[serde(default)]
    pub is_phone_field: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub user_id: String,
    pub app_id: String,
}

impl StreamKey {
    pub fn of(event: &KeystrokeEvent) -> Self {
        Self {
            user_id: event.user_id.clone(),
            app_id: event.app_id.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Text,
    Password,
    Phone,
}

impl FieldKind {
    pub fn of(event: &KeystrokeEvent) -> Self {
        if event.is_password {
            FieldKind::Password
        } else if event.is_phone_field {
            FieldKind::Phone
        } else {
            FieldKind::Text
        }
    }

    fn structural_tag(self) -> Option<&'static str> {
        match self {
            FieldKind::Text => None,
            FieldKind::Password => Some("password"),
            FieldKind::Phone => Some("phone"),
        }
    }
}

/// Characters that end a token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundarySet {
    punctuation: BTreeSet<char>,
}

impl Default for BoundarySet {
    fn default() -> Self {
        Self::new(".,!?;:")
    }
}

impl BoundarySet {
    /// ASCII whitespace is always a boundary; `punctuation` adds to it.
    pub fn new(punctuation: &str) -> Self {
        Self {
            punctuation: punctuation.chars().collect(),
        }
    }

    pub fn contains(&self, c: char) -> bool {
        c.is_ascii_whitespace() || self.punctuation.contains(&c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RedactorConfig {
    /// Inactivity gap that closes an entry.
    pub timeout_ms: i64,
    /// Emit redacted partial snapshots alongside the final text.
    pub keep_snapshots: bool,
    /// Attach raw snapshots and spans to each entry (never serialized).
    pub audit: bool,
    pub boundaries: BoundarySet,
    /// Token starts examined for provisional prefix tags.
    pub provisional_window: usize,
}

impl Default for RedactorConfig {
    fn default() -> Self {
        Self {
            timeout_ms: 60_000,
            keep_snapshots: false,
            audit: false,
            boundaries: BoundarySet::default(),
            provisional_window: 4,
        }
    }
}

/// A buffered snapshot with its current redaction state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub timestamp: i64,
    pub text: String,
    /// Settled spans, disjoint and sorted.
    pub confirmed: Vec<RedactionSpan>,
    /// Prefix-based guesses on the trailing tokens.
    pub provisional: Vec<RedactionSpan>,
}

impl Snapshot {
    pub fn new(timestamp: i64, text: impl Into<String>) -> Self {
        Self {
            timestamp,
            text: text.into(),
            confirmed: Vec::new(),
            provisional: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntryBuffer {
    pub key: StreamKey,
    pub kind: FieldKind,
    pub history: Vec<Snapshot>,
    /// Char offset where the last completed token ends.
    pub token_boundary: usize,
}

impl EntryBuffer {
    pub fn new(key: StreamKey, kind: FieldKind) -> Self {
        Self {
            key,
            kind,
            history: Vec::new(),
            token_boundary: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    pub fn last_timestamp(&self) -> Option<i64> {
        self.history.last().map(|s| s.timestamp)
    }
}

/// Raw view of one retained snapshot, for verification tooling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotAudit {
    pub raw: String,
    pub spans: Vec<RedactionSpan>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SanitizedEntry {
    pub user_id: String,
    pub app_id: String,
    pub start_timestamp: i64,
    pub end_timestamp: i64,
    pub final_text: String,
    /// Placeholder positions in `final_text`.
    pub spans: Vec<RedactionSpan>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshots: Vec<String>,
    #[serde(skip)]
    pub audit: Option<Vec<SnapshotAudit>>,
}

fn longest_common_prefix(a: &[char], b: &[char]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

/// Common prefix and suffix lengths; the suffix never overlaps the prefix.
fn alignment(from: &[char], to: &[char]) -> (usize, usize) {
    let p = longest_common_prefix(from, to);
    let room = from.len().min(to.len()) - p;
    let q = from
        .iter()
        .rev()
        .zip(to.iter().rev())
        .take(room)
        .take_while(|(x, y)| x == y)
        .count();
    (p, q)
}

/// Map a span on `from` onto `to`, treating the edited middle region as
/// belonging to any span that reaches into it.
pub fn project_span(span: &RedactionSpan, from: &[char], to: &[char]) -> Option<RedactionSpan> {
    let (p, q) = alignment(from, to);
    let (lf, lt) = (from.len(), to.len());
    let start = if span.start <= p {
        span.start
    } else if span.start >= lf - q {
        span.start + lt - lf
    } else {
        p
    };
    let end = if span.end <= p {
        span.end
    } else if span.end >= lf - q {
        span.end + lt - lf
    } else {
        lt - q
    };
    (start < end).then(|| RedactionSpan {
        start,
        end,
        tags: span.tags.clone(),
    })
}

/// Map a span on `from` onto `to` keeping only characters that survived
/// unchanged (common prefix and common suffix).
fn carry_span(span: &RedactionSpan, from: &[char], to: &[char]) -> Vec<RedactionSpan> {
    let (p, q) = alignment(from, to);
    let (lf, lt) = (from.len(), to.len());
    let mut out = Vec::new();
    if span.start < p {
        out.push(RedactionSpan {
            start: span.start,
            end: span.end.min(p),
            tags: span.tags.clone(),
        });
    }
    let suffix_start = lf - q;
    if span.end > suffix_start {
        let s = span.start.max(suffix_start);
        out.push(RedactionSpan {
            start: s + lt - lf,
            end: span.end + lt - lf,
            tags: span.tags.clone(),
        });
    }
    out
}

/// Merge spans sharing at least one character into compound spans.
pub fn merge_overlapping(mut spans: Vec<RedactionSpan>) -> Vec<RedactionSpan> {
    spans.retain(|s| !s.is_empty());
    spans.sort_by_key(|s| (s.start, s.end));
    let mut out: Vec<RedactionSpan> = Vec::with_capacity(spans.len());
    for s in spans {
        match out.last_mut() {
            Some(last) if s.start < last.end => {
                last.end = last.end.max(s.end);
                last.tags.extend(s.tags);
            }
            _ => out.push(s),
        }
    }
    out
}

/// Range of the token completed by going from `previous_text` to
/// `current_text`, if a boundary character was appended right after a
/// non-boundary one. Edits are read as delete-then-append.
pub fn detect_token_completion(
    previous_text: &str,
    current_text: &str,
    boundaries: &BoundarySet,
) -> Option<Range<usize>> {
    let prev: Vec<char> = previous_text.chars().collect();
    let cur: Vec<char> = current_text.chars().collect();
    let appended_from = longest_common_prefix(&prev, &cur).max(1);
    (appended_from..cur.len())
        .rev()
        .find(|&b| boundaries.contains(cur[b]) && !boundaries.contains(cur[b - 1]))
        .map(|b| {
            let start = (0..b)
                .rev()
                .find(|&i| boundaries.contains(cur[i]))
                .map_or(0, |i| i + 1);
            start..b
        })
}

/// First rollback pass, run when the last snapshot in `buffer` completed
/// `token`. Detections on that snapshot which touch the token are projected
/// back through earlier snapshots until the point where the token (or the
/// detection, whichever began first) had not been typed yet.
pub fn rollback_stage1(buffer: &mut EntryBuffer, token: Range<usize>, detections: &[RedactionSpan]) {
    let Some((current, earlier)) = buffer.history.split_last_mut() else {
        return;
    };
    let cur: Vec<char> = current.text.chars().collect();
    let touching: Vec<&RedactionSpan> = detections
        .iter()
        .filter(|d| d.start < token.end && token.start < d.end)
        .collect();
    let rollback_start = touching
        .iter()
        .map(|d| d.start)
        .fold(token.start, usize::min);

    for snap in earlier.iter_mut().rev() {
        let text: Vec<char> = snap.text.chars().collect();
        if text.len() <= rollback_start || longest_common_prefix(&text, &cur) < rollback_start {
            break;
        }
        let region = RedactionSpan::new(rollback_start, text.len(), "");
        snap.provisional.retain(|p| !p.intersects(&region));
        let mut spans = std::mem::take(&mut snap.confirmed);
        spans.extend(touching.iter().filter_map(|d| project_span(d, &cur, &text)));
        snap.confirmed = merge_overlapping(spans);
    }
    buffer.token_boundary = token.end;
}

/// Spans for one retained snapshot after the final detections are overlaid.
fn overlay_final(snap: &Snapshot, final_chars: &[char], finals: &[RedactionSpan]) -> Vec<RedactionSpan> {
    let text: Vec<char> = snap.text.chars().collect();
    let projected: Vec<RedactionSpan> = finals
        .iter()
        .filter_map(|f| project_span(f, final_chars, &text))
        .collect();
    let covered = |s: &RedactionSpan| projected.iter().any(|f| f.contains(s));
    let touched = |s: &RedactionSpan| projected.iter().any(|f| f.intersects(s));

    let mut pool = projected.clone();
    pool.extend(snap.confirmed.iter().filter(|s| !covered(s)).cloned());
    pool.extend(
        snap.provisional
            .iter()
            .filter(|s| touched(s) && !covered(s))
            .cloned(),
    );
    merge_overlapping(pool)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FinalizeOptions {
    pub keep_snapshots: bool,
    pub audit: bool,
}

/// Second rollback pass and materialization. `final_spans` are the
/// detections on the last snapshot's text; they alone decide `final_text`.
pub fn finalize_entry(
    buffer: EntryBuffer,
    final_spans: &[RedactionSpan],
    options: FinalizeOptions,
) -> Result<SanitizedEntry> {
    let (first, last) = match (buffer.history.first(), buffer.history.last()) {
        (Some(f), Some(l)) => (f.timestamp, l.timestamp),
        _ => return Err(Error::EmptyBuffer),
    };
    let StreamKey { user_id, app_id } = buffer.key;

    if let Some(tag) = buffer.kind.structural_tag() {
        let final_text = format!("<{tag}>");
        let len = final_text.chars().count();
        return Ok(SanitizedEntry {
            user_id,
            app_id,
            start_timestamp: first,
            end_timestamp: last,
            final_text,
            spans: vec![RedactionSpan::new(0, len, tag)],
            snapshots: Vec::new(),
            audit: options.audit.then(Vec::new),
        });
    }

    let (final_snap, partials) = buffer.history.split_last().expect("non-empty");
    let final_chars: Vec<char> = final_snap.text.chars().collect();
    let redacted = materialize(&final_chars, final_spans);

    let mut snapshots = Vec::new();
    let mut audit = Vec::new();
    if options.keep_snapshots || options.audit {
        for snap in partials {
            let spans = overlay_final(snap, &final_chars, final_spans);
            if options.keep_snapshots {
                let chars: Vec<char> = snap.text.chars().collect();
                snapshots.push(materialize(&chars, &spans).text);
            }
            if options.audit {
                audit.push(SnapshotAudit {
                    raw: snap.text.clone(),
                    spans,
                });
            }
        }
        if options.audit {
            audit.push(SnapshotAudit {
                raw: final_snap.text.clone(),
                spans: final_spans.to_vec(),
            });
        }
    }

    Ok(SanitizedEntry {
        user_id,
        app_id,
        start_timestamp: first,
        end_timestamp: last,
        final_text: redacted.text,
        spans: redacted.spans,
        snapshots,
        audit: options.audit.then_some(audit),
    })
}

/// Per-stream buffering state over a shared detector suite.
#[derive(Debug)]
pub struct Redactor {
    suite: Arc<DetectorSuite>,
    config: RedactorConfig,
    buffers: BTreeMap<StreamKey, EntryBuffer>,
    last_seen: BTreeMap<StreamKey, i64>,
}

impl Redactor {
    pub fn new(suite: Arc<DetectorSuite>, config: RedactorConfig) -> Self {
        Self {
            suite,
            config,
            buffers: BTreeMap::new(),
            last_seen: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &RedactorConfig {
        &self.config
    }

    pub fn buffer(&self, key: &StreamKey) -> Option<&EntryBuffer> {
        self.buffers.get(key)
    }

    fn options(&self) -> FinalizeOptions {
        FinalizeOptions {
            keep_snapshots: self.config.keep_snapshots,
            audit: self.config.audit,
        }
    }

    fn close(&mut self, key: &StreamKey) -> Option<SanitizedEntry> {
        let buffer = self.buffers.remove(key)?;
        if buffer.is_empty() {
            return None;
        }
        let finals = match buffer.kind {
            FieldKind::Text => {
                let text = &buffer.history.last().expect("non-empty").text;
                self.suite.redaction_spans(text)
            }
            _ => Vec::new(),
        };
        Some(finalize_entry(buffer, &finals, self.options()).expect("non-empty buffer"))
    }

    /// Feed one event; returns entries completed by it.
    pub fn ingest(&mut self, event: KeystrokeEvent) -> Result<Vec<SanitizedEntry>> {
        let key = StreamKey::of(&event);
        if let Some(&last) = self.last_seen.get(&key) {
            if event.timestamp < last {
                return Err(Error::OutOfOrder {
                    user_id: event.user_id,
                    app_id: event.app_id,
                    timestamp: event.timestamp,
                    last,
                });
            }
        }
        self.last_seen.insert(key.clone(), event.timestamp);

        let kind = FieldKind::of(&event);
        let mut done = Vec::new();
        if let Some(buf) = self.buffers.get(&key) {
            let idle = buf
                .last_timestamp()
                .is_some_and(|t| event.timestamp - t > self.config.timeout_ms);
            if idle || buf.kind != kind {
                done.extend(self.close(&key));
            }
        }
        if event.current_text.is_empty() {
            done.extend(self.close(&key));
            return Ok(done);
        }

        let buffer = self
            .buffers
            .entry(key.clone())
            .or_insert_with(|| EntryBuffer::new(key, kind));
        if kind != FieldKind::Text {
            // content of flagged fields is never retained
            buffer.history.push(Snapshot::new(event.timestamp, ""));
            return Ok(done);
        }
        push_snapshot(buffer, &self.suite, &self.config, event.timestamp, event.current_text);
        Ok(done)
    }

    /// Close every open entry (end of stream), in stream-key order.
    pub fn finish(&mut self) -> Vec<SanitizedEntry> {
        let keys: Vec<StreamKey> = self.buffers.keys().cloned().collect();
        keys.iter().filter_map(|k| self.close(k)).collect()
    }
}

/// Provisional tags on the trailing tokens of `text`: for each of the last
/// few token starts, the labels whose matches could still begin there.
fn provisional_tail(suite: &DetectorSuite, text: &str, window: usize) -> Vec<RedactionSpan> {
    let chars: Vec<char> = text.chars().collect();
    let starts: Vec<usize> = (0..chars.len())
        .filter(|&i| !chars[i].is_whitespace() && (i == 0 || chars[i - 1].is_whitespace()))
        .collect();
    let from = starts.len().saturating_sub(window);
    let spans = starts[from..]
        .iter()
        .filter_map(|&s| {
            let labels = suite.possible_prefix_labels(text, s);
            (!labels.is_empty()).then_some(RedactionSpan {
                start: s,
                end: chars.len(),
                tags: labels,
            })
        })
        .collect();
    merge_overlapping(spans)
}

/// Append a text snapshot to `buffer` and run stage-1 rollback if it
/// completed a token.
pub fn push_snapshot(
    buffer: &mut EntryBuffer,
    suite: &DetectorSuite,
    config: &RedactorConfig,
    timestamp: i64,
    text: String,
) {
    let own = suite.redaction_spans(&text);
    let cur: Vec<char> = text.chars().collect();
    let mut confirmed = own.clone();
    let previous_text = buffer.history.last().map(|p| p.text.clone());
    if let Some(prev) = buffer.history.last() {
        let prev_chars: Vec<char> = prev.text.chars().collect();
        for s in &prev.confirmed {
            confirmed.extend(carry_span(s, &prev_chars, &cur));
        }
    }
    let provisional = provisional_tail(suite, &text, config.provisional_window);
    buffer.history.push(Snapshot {
        timestamp,
        confirmed: merge_overlapping(confirmed),
        provisional,
        text,
    });
    let prev = previous_text.unwrap_or_default();
    if let Some(token) =
        detect_token_completion(&prev, &buffer.history.last().unwrap().text, &config.boundaries)
    {
        rollback_stage1(buffer, token, &own);
    }
}
