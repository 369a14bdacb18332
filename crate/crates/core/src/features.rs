//! Tokenization, 1-to-3-gram relative frequencies and dictionary categories.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::detect::is_placeholder;
use crate::error::{Error, Result};

/// Sparse feature id -> relative frequency.
pub type FeatureVector = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Facebook,
    Sms,
}

impl Platform {
    pub const BOTH: [Platform; 2] = [Platform::Facebook, Platform::Sms];

    pub fn other(self) -> Platform {
        match self {
            Platform::Facebook => Platform::Sms,
            Platform::Sms => Platform::Facebook,
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Platform::Facebook => "FB",
            Platform::Sms => "SMS",
        }
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Platform::Facebook => "facebook",
            Platform::Sms => "sms",
        })
    }
}

impl FromStr for Platform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "facebook" | "fb" => Ok(Platform::Facebook),
            "sms" | "text" => Ok(Platform::Sms),
            other => Err(Error::InvalidArgument(format!("unknown platform {other:?}"))),
        }
    }
}

/// All sanitized documents of one user on one platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserCorpus {
    pub user_id: String,
    pub platform: Platform,
    pub documents: Vec<String>,
}

impl UserCorpus {
    pub fn new(user_id: impl Into<String>, platform: Platform) -> Self {
        Self {
            user_id: user_id.into(),
            platform,
            documents: Vec::new(),
        }
    }

    pub fn tokenized(&self) -> Vec<Vec<String>> {
        self.documents.iter().map(|d| tokenize(d)).collect()
    }

    pub fn word_count(&self) -> usize {
        self.documents.iter().map(|d| word_count(d)).sum()
    }

    pub fn post_count(&self) -> usize {
        self.documents.len()
    }
}

fn token_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(concat!(
            r"<[a-z][a-z0-9_ ]*(?:\|[a-z][a-z0-9_ ]*)*>",
            r"|(?i:https?://\S+|www\.\S+)",
            r"|<3",
            r"|[<>]?[:;=8][\-o\*']?[\)\]\(\[dDpP/\\:\}\{@\|]",
            r"|[\)\]\(\[/\\\}\{@\|][\-o\*']?[:;=8]",
            r"|[#@][\p{L}\p{N}_]+",
            r"|\p{N}+(?:[.,:/]\p{N}+)+",
            r"|[\p{L}\p{N}_]+(?:['’][\p{L}\p{N}]+)*",
            r"|\S",
        ))
        .unwrap()
    })
}

/// Social-media tokenizer: lowercases, keeps emoticons, contractions,
/// hashtags and `<tag>` placeholders whole, splits other punctuation.
pub fn tokenize(text: &str) -> Vec<String> {
    token_regex()
        .find_iter(text)
        .map(|m| m.as_str().replace('’', "'").to_lowercase())
        .collect()
}

/// Number of word-like tokens (placeholders and bare punctuation excluded).
pub fn word_count(text: &str) -> usize {
    tokenize(text)
        .iter()
        .filter(|t| !is_placeholder(t) && t.chars().any(char::is_alphanumeric))
        .count()
}

/// Raw n-gram counts, per order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NgramCounts {
    pub by_order: BTreeMap<usize, BTreeMap<String, u64>>,
    pub totals: BTreeMap<usize, u64>,
}

impl NgramCounts {
    /// Count n-grams of each order over `docs`. Placeholders are dropped and
    /// break n-grams, like document boundaries.
    pub fn count<D: AsRef<[String]>>(docs: &[D], orders: &[usize]) -> Self {
        let mut out = NgramCounts::default();
        for &n in orders {
            out.by_order.entry(n).or_default();
            out.totals.entry(n).or_insert(0);
        }
        for doc in docs {
            for segment in doc.as_ref().split(|t| is_placeholder(t)) {
                for &n in orders {
                    if n == 0 || segment.len() < n {
                        continue;
                    }
                    let table = out.by_order.get_mut(&n).unwrap();
                    for w in segment.windows(n) {
                        *table.entry(w.join(" ")).or_insert(0) += 1;
                    }
                    *out.totals.get_mut(&n).unwrap() += (segment.len() - n + 1) as u64;
                }
            }
        }
        out
    }

    /// Count divided by the total count of the same order.
    pub fn relative(&self) -> FeatureVector {
        let mut fv = FeatureVector::new();
        for (n, table) in &self.by_order {
            let total = self.totals[n];
            if total == 0 {
                continue;
            }
            for (k, &c) in table {
                fv.insert(k.clone(), c as f64 / total as f64);
            }
        }
        fv
    }
}

/// Relative n-gram frequencies of a single token sequence.
pub fn extract_ngrams(tokens: &[String], orders: &[usize]) -> FeatureVector {
    NgramCounts::count(&[tokens], orders).relative()
}

/// Relative n-gram frequencies over several documents; n-grams never cross
/// document boundaries.
pub fn extract_ngrams_docs<D: AsRef<[String]>>(docs: &[D], orders: &[usize]) -> FeatureVector {
    NgramCounts::count(docs, orders).relative()
}

/// Features used (non-zero) by at least `min_share` of the given vectors.
pub fn frequent_features<'a, I>(vectors: I, min_share: f64) -> BTreeSet<String>
where
    I: IntoIterator<Item = &'a FeatureVector>,
{
    let mut users = 0usize;
    let mut used: BTreeMap<&str, usize> = BTreeMap::new();
    for v in vectors {
        users += 1;
        for (k, &f) in v {
            if f > 0.0 {
                *used.entry(k.as_str()).or_insert(0) += 1;
            }
        }
    }
    let need = (min_share * users as f64).ceil().max(1.0) as usize;
    used.into_iter()
        .filter(|&(_, c)| c >= need)
        .map(|(k, _)| k.to_string())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DictionaryEntry {
    Literal(String),
    /// Entry written `stem*`; matches any token starting with `stem`.
    Prefix(String),
}

impl DictionaryEntry {
    pub fn parse(raw: &str) -> Result<Self> {
        let e = raw.trim().to_lowercase();
        match e.find('*') {
            None => Ok(DictionaryEntry::Literal(e)),
            Some(i) if i == e.len() - 1 => Ok(DictionaryEntry::Prefix(e[..i].to_string())),
            Some(_) => Err(Error::InvalidArgument(format!(
                "wildcard must be terminal in {raw:?}"
            ))),
        }
    }

    pub fn matches(&self, token: &str) -> bool {
        match self {
            DictionaryEntry::Literal(w) => w == token,
            DictionaryEntry::Prefix(p) => token.starts_with(p.as_str()),
        }
    }
}

/// Category lexicon with literal and prefix-wildcard entries.
#[derive(Debug, Clone, Default)]
pub struct DictionarySpec {
    categories: BTreeMap<String, Vec<DictionaryEntry>>,
    literal_index: HashMap<String, Vec<usize>>,
    prefix_index: HashMap<String, Vec<usize>>,
    names: Vec<String>,
}

impl DictionarySpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries<I, C, E>(categories: I) -> Result<Self>
    where
        I: IntoIterator<Item = (C, Vec<E>)>,
        C: Into<String>,
        E: AsRef<str>,
    {
        let mut spec = Self::new();
        for (name, entries) in categories {
            let name = name.into();
            spec.categories.entry(name.clone()).or_default();
            for e in entries {
                spec.add(&name, DictionaryEntry::parse(e.as_ref())?);
            }
        }
        spec.reindex();
        Ok(spec)
    }

    fn add(&mut self, category: &str, entry: DictionaryEntry) {
        self.categories
            .entry(category.to_string())
            .or_default()
            .push(entry);
    }

    fn reindex(&mut self) {
        self.names = self.categories.keys().cloned().collect();
        self.literal_index.clear();
        self.prefix_index.clear();
        for (ci, name) in self.names.iter().enumerate() {
            for e in &self.categories[name] {
                let (index, key) = match e {
                    DictionaryEntry::Literal(w) => (&mut self.literal_index, w),
                    DictionaryEntry::Prefix(p) => (&mut self.prefix_index, p),
                };
                let slot = index.entry(key.clone()).or_default();
                if !slot.contains(&ci) {
                    slot.push(ci);
                }
            }
        }
    }

    /// `[category]` header lines, then one entry per line. `#` starts a comment.
    pub fn parse(source: &str) -> Result<Self> {
        let mut spec = Self::new();
        let mut current: Option<String> = None;
        for (lineno, line) in source.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim().to_string();
                spec.categories.entry(name.clone()).or_default();
                current = Some(name);
                continue;
            }
            let Some(cat) = &current else {
                return Err(Error::Format {
                    line: lineno + 1,
                    message: "entry before any [category] header".into(),
                });
            };
            let entry = DictionaryEntry::parse(line).map_err(|e| Error::Format {
                line: lineno + 1,
                message: e.to_string(),
            })?;
            let cat = cat.clone();
            spec.add(&cat, entry);
        }
        spec.reindex();
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn category_names(&self) -> &[String] {
        &self.names
    }

    pub fn entries(&self, category: &str) -> Option<&[DictionaryEntry]> {
        self.categories.get(category).map(Vec::as_slice)
    }

    /// Indices of categories matching `token`, each at most once.
    fn categories_of(&self, token: &str) -> BTreeSet<usize> {
        let mut hit = BTreeSet::new();
        if let Some(cs) = self.literal_index.get(token) {
            hit.extend(cs);
        }
        for (i, _) in token.char_indices().skip(1).chain([(token.len(), ' ')]) {
            if let Some(cs) = self.prefix_index.get(&token[..i]) {
                hit.extend(cs);
            }
        }
        if let Some(cs) = self.prefix_index.get("") {
            hit.extend(cs);
        }
        hit
    }
}

/// Category -> share of tokens matching any of its entries. Placeholders do
/// not count as tokens.
pub fn extract_dictionary(tokens: &[String], spec: &DictionarySpec) -> FeatureVector {
    let mut counts = vec![0u64; spec.names.len()];
    let mut total = 0u64;
    for t in tokens.iter().filter(|t| !is_placeholder(t)) {
        total += 1;
        for ci in spec.categories_of(t) {
            counts[ci] += 1;
        }
    }
    spec.names
        .iter()
        .zip(counts)
        .map(|(name, c)| {
            let f = if total == 0 { 0.0 } else { c as f64 / total as f64 };
            (name.clone(), f)
        })
        .collect()
}
