use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use xplat::modeling::CrossDomainMode;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    /// Raw keystroke snapshots (JSON lines), redacted during ingestion.
    pub keystrokes: Option<PathBuf>,
    /// Already sanitized SMS entries (JSON lines), as written by `redact`.
    pub sms_entries: Option<PathBuf>,
    /// Facebook posts (JSON lines with `user_id` and `text`).
    pub facebook: Option<PathBuf>,
    /// CSV with `user_id` and one column per outcome.
    pub outcomes: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    /// Lexicon weights, `term,category,weight`.
    pub lexica: Option<PathBuf>,
    /// CSV of `user_id,platform,<d values>`.
    pub embeddings: Option<PathBuf>,
}

impl Inputs {
    /// (name, path) of every configured input, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, &PathBuf)> {
        [
            ("keystrokes", &self.keystrokes),
            ("sms_entries", &self.sms_entries),
            ("facebook", &self.facebook),
            ("outcomes", &self.outcomes),
            ("dictionary", &self.dictionary),
            ("lexica", &self.lexica),
            ("embeddings", &self.embeddings),
        ]
        .into_iter()
        .filter_map(|(n, p)| p.as_ref().map(|p| (n, p)))
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Minimum words per user, both platforms combined.
    pub min_words: usize,
    /// Minimum share of user-platform corpora that must use an n-gram.
    pub min_group_frequency: f64,
    pub fdr_alpha: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            min_words: 500,
            min_group_frequency: 0.05,
            fdr_alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RedactionSettings {
    pub timeout_ms: i64,
    /// App ids kept at ingestion; empty keeps every app.
    pub apps: Vec<String>,
}

impl Default for RedactionSettings {
    fn default() -> Self {
        Self {
            timeout_ms: 60_000,
            apps: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelingSettings {
    pub ridge_alpha: f64,
    /// Outcome columns coded ±1 and scored by sign accuracy.
    pub binary_outcomes: Vec<String>,
    pub bootstrap_iterations: usize,
    pub cross_domain: CrossDomainMode,
    pub ngram_orders: Vec<usize>,
    pub nmf_k: usize,
    pub nmf_iterations: usize,
}

impl Default for ModelingSettings {
    fn default() -> Self {
        Self {
            ridge_alpha: 1.0,
            binary_outcomes: vec!["gender".into()],
            bootstrap_iterations: xplat::stats::DEFAULT_BOOTSTRAP_ITERATIONS,
            cross_domain: CrossDomainMode::default(),
            ngram_orders: vec![1, 2, 3],
            nmf_k: 128,
            nmf_iterations: 300,
        }
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub inputs: Inputs,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub redaction: RedactionSettings,
    #[serde(default)]
    pub modeling: ModelingSettings,
    /// Relative paths resolve against this directory.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub min_words: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).context("invalid config")?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::parse(&text, base)?;
        cfg.apply(overrides)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(a) = o.alpha {
            self.thresholds.fdr_alpha = a;
        }
        if let Some(m) = o.min_words {
            self.thresholds.min_words = m;
        }
        if let Some(dir) = &o.output_dir {
            // command-line paths are relative to the working directory
            self.output_dir = std::path::absolute(dir)?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.thresholds;
        ensure!(
            t.fdr_alpha > 0.0 && t.fdr_alpha < 1.0,
            "fdr_alpha must lie in (0, 1), got {}",
            t.fdr_alpha
        );
        ensure!(
            (0.0..=1.0).contains(&t.min_group_frequency),
            "min_group_frequency must lie in [0, 1], got {}",
            t.min_group_frequency
        );
        let m = &self.modeling;
        ensure!(m.ridge_alpha > 0.0, "ridge_alpha must be > 0");
        ensure!(m.bootstrap_iterations >= 1, "bootstrap_iterations must be >= 1");
        ensure!(
            !m.ngram_orders.is_empty() && m.ngram_orders.iter().all(|n| (1..=3).contains(n)),
            "ngram_orders must be a non-empty subset of 1..=3"
        );
        ensure!(m.nmf_k >= 1, "nmf_k must be >= 1");
        ensure!(self.redaction.timeout_ms > 0, "timeout_ms must be > 0");
        if self.inputs.keystrokes.is_some() && self.inputs.sms_entries.is_some() {
            bail!("configure either inputs.keystrokes or inputs.sms_entries, not both");
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    /// Resolved path of an optional input; errors if configured but missing.
    pub fn optional_input(&self, name: &str) -> Result<Option<PathBuf>> {
        let Some((_, p)) = self.inputs.entries().into_iter().find(|(n, _)| *n == name) else {
            return Ok(None);
        };
        let path = self.resolve(p);
        ensure!(path.is_file(), "input `{name}` not found: {}", path.display());
        Ok(Some(path))
    }

    /// Resolved path of a required input.
    pub fn input(&self, name: &str) -> Result<PathBuf> {
        self.optional_input(name)?
            .with_context(|| format!("no `{name}` file configured under [inputs]"))
    }
}
