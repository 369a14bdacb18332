//! Reading inputs, redacting SMS keystrokes and Facebook posts, and the
//! user exclusion funnel.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use xplat::features::{word_count, Platform, UserCorpus};
use xplat::{redact_string, DetectorSuite, KeystrokeEvent, Redactor, RedactorConfig, SanitizedEntry};

use crate::config::{RedactionSettings, RunConfig};

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("{}: read error", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: malformed record", path.display(), i + 1))?;
        out.push(item);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RedactionLog {
    pub events: usize,
    pub events_outside_allowlist: usize,
    pub entries: usize,
}

/// Redact a keystroke log. Streams of different users are processed in
/// parallel; entries come back ordered by user, then start time.
pub fn redact_events(
    events: Vec<KeystrokeEvent>,
    settings: &RedactionSettings,
    keep_snapshots: bool,
) -> Result<(Vec<SanitizedEntry>, RedactionLog)> {
    let mut log = RedactionLog {
        events: events.len(),
        ..Default::default()
    };
    let allow: BTreeSet<&str> = settings.apps.iter().map(String::as_str).collect();
    let mut by_user: BTreeMap<String, Vec<KeystrokeEvent>> = BTreeMap::new();
    for e in events {
        if !allow.is_empty() && !allow.contains(e.app_id.as_str()) {
            log.events_outside_allowlist += 1;
            continue;
        }
        by_user.entry(e.user_id.clone()).or_default().push(e);
    }
    let suite = Arc::new(DetectorSuite::standard());
    let config = RedactorConfig {
        timeout_ms: settings.timeout_ms,
        keep_snapshots,
        ..Default::default()
    };
    let per_user: Vec<Vec<SanitizedEntry>> = by_user
        .into_par_iter()
        .map(|(_, events)| {
            let mut r = Redactor::new(Arc::clone(&suite), config.clone());
            let mut out = Vec::new();
            for e in events {
                out.extend(r.ingest(e)?);
            }
            out.extend(r.finish());
            Ok(out)
        })
        .collect::<xplat::Result<_>>()?;
    let mut entries: Vec<SanitizedEntry> = per_user.into_iter().flatten().collect();
    entries.sort_by(|a, b| {
        (&a.user_id, a.start_timestamp, &a.app_id).cmp(&(&b.user_id, b.start_timestamp, &b.app_id))
    });
    log.entries = entries.len();
    Ok((entries, log))
}

#[derive(Debug, Clone, Deserialize)]
pub struct Post {
    pub user_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exclusion {
    pub user_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestLog {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub redaction: Option<RedactionLog>,
    pub sms_entries: usize,
    pub sms_entries_without_words: usize,
    pub facebook_posts: usize,
    pub users_seen: usize,
    pub users_included: usize,
    pub min_words: usize,
    pub excluded: Vec<Exclusion>,
}

/// Sanitized corpora of the users that pass the exclusion rules.
#[derive(Debug, Clone)]
pub struct Study {
    pub users: Vec<String>,
    pub corpora: BTreeMap<Platform, BTreeMap<String, UserCorpus>>,
    pub sms_entries: Vec<SanitizedEntry>,
    pub log: IngestLog,
}

impl Study {
    pub fn corpus(&self, platform: Platform) -> &BTreeMap<String, UserCorpus> {
        &self.corpora[&platform]
    }
}

pub fn load_sms_entries(cfg: &RunConfig) -> Result<(Vec<SanitizedEntry>, Option<RedactionLog>)> {
    if let Some(path) = cfg.optional_input("sms_entries")? {
        return Ok((read_jsonl(&path)?, None));
    }
    let path = cfg
        .optional_input("keystrokes")?
        .context("configure inputs.keystrokes or inputs.sms_entries")?;
    let events: Vec<KeystrokeEvent> = read_jsonl(&path)?;
    let (entries, log) = redact_events(events, &cfg.redaction, false)?;
    Ok((entries, Some(log)))
}

pub fn load_study(cfg: &RunConfig) -> Result<Study> {
    let (sms_entries, redaction) = load_sms_entries(cfg)?;
    let posts: Vec<Post> = read_jsonl(&cfg.input("facebook")?)?;

    let mut log = IngestLog {
        redaction,
        sms_entries: sms_entries.len(),
        facebook_posts: posts.len(),
        min_words: cfg.thresholds.min_words,
        ..Default::default()
    };
    let mut sms: BTreeMap<String, UserCorpus> = BTreeMap::new();
    for e in &sms_entries {
        if word_count(&e.final_text) == 0 {
            log.sms_entries_without_words += 1;
            continue;
        }
        sms.entry(e.user_id.clone())
            .or_insert_with(|| UserCorpus::new(&e.user_id, Platform::Sms))
            .documents
            .push(e.final_text.clone());
    }
    let redacted: Vec<(String, String)> = posts
        .into_par_iter()
        .map(|p| (p.user_id, redact_string(&p.text).text))
        .collect();
    let mut fb: BTreeMap<String, UserCorpus> = BTreeMap::new();
    for (user, text) in redacted {
        fb.entry(user.clone())
            .or_insert_with(|| UserCorpus::new(&user, Platform::Facebook))
            .documents
            .push(text);
    }

    let seen: BTreeSet<String> = sms.keys().chain(fb.keys()).cloned().collect();
    log.users_seen = seen.len();
    let mut users = Vec::new();
    for u in seen {
        let reason = match (fb.get(&u), sms.get(&u)) {
            (None, _) => Some("no facebook posts".to_string()),
            (_, None) => Some("no sms messages".to_string()),
            (Some(a), Some(b)) => {
                let words = a.word_count() + b.word_count();
                (words < cfg.thresholds.min_words).then(|| {
                    format!("{words} words across platforms, below {}", cfg.thresholds.min_words)
                })
            }
        };
        match reason {
            Some(reason) => log.excluded.push(Exclusion { user_id: u, reason }),
            None => users.push(u),
        }
    }
    log.users_included = users.len();
    let keep = |m: BTreeMap<String, UserCorpus>| -> BTreeMap<String, UserCorpus> {
        m.into_iter().filter(|(u, _)| users.binary_search(u).is_ok()).collect()
    };
    let corpora = BTreeMap::from([(Platform::Facebook, keep(fb)), (Platform::Sms, keep(sms))]);
    Ok(Study {
        users,
        corpora,
        sms_entries,
        log,
    })
}

/// Self-reports keyed by user, one column per outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcomes {
    pub names: Vec<String>,
    pub binary: BTreeSet<String>,
    /// user -> values in `names` order; NaN where missing.
    pub rows: BTreeMap<String, Vec<f64>>,
}

impl Outcomes {
    pub fn column(&self, name: &str, users: &[String]) -> Option<Vec<f64>> {
        let j = self.names.iter().position(|n| n == name)?;
        Some(
            users
                .iter()
                .map(|u| self.rows.get(u).map_or(f64::NAN, |r| r[j]))
                .collect(),
        )
    }
}

pub fn load_outcomes(path: &Path, binary: &[String]) -> Result<Outcomes> {
    let mut rdr = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open outcomes {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    ensure!(
        headers.get(0) == Some("user_id"),
        "{}: first column must be user_id",
        path.display()
    );
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let binary: BTreeSet<String> = binary.iter().filter(|b| names.contains(b)).cloned().collect();
    let mut rows = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: bad row {}", path.display(), i + 2))?;
        let user = rec.get(0).unwrap_or_default().to_string();
        let mut values = Vec::with_capacity(names.len());
        for (j, name) in names.iter().enumerate() {
            let raw = rec.get(j + 1).unwrap_or("").trim();
            let v = if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
                f64::NAN
            } else {
                raw.parse::<f64>().with_context(|| {
                    format!("{}:{}: {name} is not a number: {raw:?}", path.display(), i + 2)
                })?
            };
            if binary.contains(name) && v.is_finite() && v != 1.0 && v != -1.0 {
                bail!("{}:{}: binary outcome {name} must be 1 or -1, got {v}", path.display(), i + 2);
            }
            values.push(v);
        }
        if rows.insert(user.clone(), values).is_some() {
            bail!("{}: duplicate user {user}", path.display());
        }
    }
    Ok(Outcomes { names, binary, rows })
}

/// Embedding rows keyed by (user, platform).
pub fn load_embeddings(path: &Path) -> Result<BTreeMap<(String, Platform), Vec<f64>>> {
    let mut rdr = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open embeddings {}", path.display()))?;
    let width = rdr.headers()?.len();
    ensure!(width >= 3, "{}: expected user_id,platform,<values>", path.display());
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let user = rec.get(0).unwrap_or_default().to_string();
        let platform: Platform = rec.get(1).unwrap_or_default().parse()?;
        let values = rec
            .iter()
            .skip(2)
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .with_context(|| format!("{}:{line}: non-numeric embedding value", path.display()))?;
        ensure!(values.len() == width - 2, "{}:{line}: wrong width", path.display());
        ensure!(
            values.iter().all(|v| v.is_finite()),
            "{}:{line}: non-finite embedding value",
            path.display()
        );
        out.insert((user, platform), values);
    }
    Ok(out)
}
