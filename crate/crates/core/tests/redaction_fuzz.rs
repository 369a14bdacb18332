use std::sync::Arc;

use proptest::prelude::*;
use xplat::detect::{standard_suite, DetectorSuite};
use xplat::keystroke::{Redactor, RedactorConfig, SanitizedEntry};
use xplat::redact_string;
use xplat::synth::typing_session;

fn run(seed: u64) -> (xplat::synth::TypingSession, Vec<SanitizedEntry>) {
    let session = typing_session(seed);
    let config = RedactorConfig {
        keep_snapshots: true,
        audit: true,
        ..Default::default()
    };
    let mut r = Redactor::new(Arc::new(DetectorSuite::standard()), config);
    let mut out = Vec::new();
    for e in session.events.clone() {
        out.extend(r.ingest(e).unwrap());
    }
    out.extend(r.finish());
    (session, out)
}

fn uncovered_pii(mask: &[bool], spans: &[xplat::RedactionSpan]) -> Vec<usize> {
    (0..mask.len())
        .filter(|&i| mask[i] && !spans.iter().any(|s| s.start <= i && i < s.end))
        .collect()
}

#[test]
fn no_snapshot_leaks_embedded_pii() {
    for seed in 0..300 {
        let (session, out) = run(seed);
        assert_eq!(out.len(), 1, "seed {seed}");
        let audit = out[0].audit.as_ref().unwrap();
        assert_eq!(audit.len(), session.events.len() - 1);
        for (i, a) in audit.iter().enumerate() {
            assert_eq!(a.raw, session.events[i].current_text);
            let bad = uncovered_pii(&session.pii_mask[i], &a.spans);
            assert!(
                bad.is_empty(),
                "seed {seed} snapshot {i} {:?} spans {:?} leaks {:?}",
                a.raw,
                a.spans,
                bad
            );
        }
    }
}

#[test]
fn streaming_final_text_matches_offline() {
    for seed in 0..200 {
        let (session, out) = run(seed);
        assert_eq!(out[0].final_text, redact_string(&session.final_text).text, "seed {seed}");
    }
}

#[test]
fn same_stream_same_output() {
    for seed in 0..20 {
        let (_, a) = run(seed);
        let (_, b) = run(seed);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}

proptest! {
    #[test]
    fn redaction_is_idempotent(s in "[a-z0-9@.() :/$-]{0,40}") {
        let once = redact_string(&s).text;
        prop_assert_eq!(redact_string(&once).text, once.clone());
    }

    #[test]
    fn redaction_only_replaces_regions(s in "[a-zA-Z0-9@. -]{0,40}") {
        let spans = standard_suite().redaction_spans(&s);
        let chars: Vec<char> = s.chars().collect();
        let red = redact_string(&s).text;
        let kept: String = (0..chars.len())
            .filter(|i| !spans.iter().any(|sp| sp.start <= *i && *i < sp.end))
            .map(|i| chars[i])
            .collect();
        let mut stripped = red.clone();
        for sp in &spans {
            stripped = stripped.replacen(&sp.placeholder(), "", 1);
        }
        prop_assert_eq!(stripped, kept);
    }

    #[test]
    fn prefix_predicate_accepts_every_prefix_of_a_match(
        pre in "[a-z ]{0,6}",
        pii in prop_oneof![
            "[0-9]{3}-[0-9]{3}-[0-9]{4}",
            "[0-9]{3}-[0-9]{2}-[0-9]{4}",
            "[a-z]{2,6}@[a-z]{2,6}\\.(com|org)",
            "\\([0-9]{3}\\) [0-9]{3}-[0-9]{4}",
        ],
    ) {
        let pre = if pre.is_empty() || pre.ends_with(' ') { pre } else { format!("{pre} ") };
        let text = format!("{pre}{pii} ");
        let suite = standard_suite();
        for span in suite.detect_all(&text) {
            for d in suite.detectors() {
                let bounds: Vec<usize> = text.char_indices().map(|(i, _)| i).chain([text.len()]).collect();
                let start = bounds[span.start];
                let whole = &text[..bounds[span.end]];
                if d.find(whole).iter().any(|m| m.range.start == start && m.range.end == whole.len()) {
                    for end in start + 1..=whole.len() {
                        prop_assert!(d.possible_prefix(&text[..end], start), "{} {:?}", d.label(), &text[..end]);
                    }
                }
            }
        }
    }
}
