//! Stage runners. Each subcommand runs the stages it depends on and writes
//! their reports; `pipeline` runs all of them into a staging directory that
//! replaces the output directory only on success.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use xplat::features::{DictionarySpec, Platform};
use xplat::modeling::{EvalOptions, LexiconModel, RidgeOptions};

use crate::analysis::{self, FeatureTables, ModelInputs};
use crate::config::{ModelingSettings, RedactionSettings, RunConfig, Thresholds};
use crate::ingest::{self, Study};
use crate::output::{sha256_file, OutputDir};

/// Which modeling reports to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelingParts {
    pub train: bool,
    pub evaluate: bool,
    pub importance: bool,
}

impl ModelingParts {
    pub const ALL: Self = Self {
        train: true,
        evaluate: true,
        importance: true,
    };
}

pub fn ingest(cfg: &RunConfig, out: &mut OutputDir) -> Result<Study> {
    let study = ingest::load_study(cfg)?;
    if study.log.redaction.is_some() {
        out.jsonl("sanitized_sms.jsonl", &study.sms_entries)?;
    }
    out.json("exclusions.json", &study.log)?;
    Ok(study)
}

pub fn summary(study: &Study, out: &mut OutputDir) -> Result<()> {
    let rows = analysis::summarize(study);
    out.json("summary.json", &rows)?;
    out.csv("summary.csv", &rows)
}

pub fn features(cfg: &RunConfig, study: &Study, out: &mut OutputDir) -> Result<FeatureTables> {
    let dictionary = cfg
        .optional_input("dictionary")?
        .map(|p| DictionarySpec::load(&p))
        .transpose()?;
    let tables = analysis::build_features(
        study,
        &cfg.modeling.ngram_orders,
        cfg.thresholds.min_group_frequency,
        dictionary.as_ref(),
    );
    out.json("features.json", &analysis::feature_overview(&tables))?;
    if tables.dictionary.is_some() {
        out.csv("dictionary_features.csv", analysis::dictionary_rows(&tables))?;
    }
    Ok(tables)
}

pub fn diff(cfg: &RunConfig, study: &Study, tables: &FeatureTables, out: &mut OutputDir) -> Result<()> {
    let report = analysis::diff(study, tables, cfg.thresholds.fdr_alpha)?;
    let cloud = analysis::cloud(&report);
    out.json("diff.json", &report)?;
    out.csv("diff_ngrams.csv", &report.ngrams)?;
    if !report.categories.is_empty() {
        out.csv("diff_dictionary.csv", &report.categories)?;
    }
    out.json("cloud.json", &cloud)?;
    out.csv("cloud.csv", &cloud)
}

fn ridge_options(m: &ModelingSettings) -> RidgeOptions {
    RidgeOptions {
        alpha: m.ridge_alpha,
        ..Default::default()
    }
}

fn eval_options(cfg: &RunConfig) -> EvalOptions {
    EvalOptions {
        ridge: ridge_options(&cfg.modeling),
        cross_domain: cfg.modeling.cross_domain,
        bootstrap_iterations: cfg.modeling.bootstrap_iterations,
        seed: cfg.seed,
    }
}

fn write_models(out: &mut OutputDir, models: &[LexiconModel]) -> Result<()> {
    let mut buf = Vec::new();
    for (i, m) in models.iter().enumerate() {
        let mut one = Vec::new();
        m.write_csv(&mut one)?;
        // keep a single header
        let body = if i == 0 {
            &one[..]
        } else {
            let nl = one.iter().position(|&b| b == b'\n').map_or(one.len(), |p| p + 1);
            &one[nl..]
        };
        buf.extend_from_slice(body);
    }
    out.bytes("models.csv", &buf)
}

#[derive(Serialize)]
struct EvalBundle<'a> {
    features: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    reduction: Option<&'a analysis::NmfSummary>,
    report: &'a xplat::modeling::EvalReport,
}

pub fn modeling(
    cfg: &RunConfig,
    study: &Study,
    tables: &FeatureTables,
    parts: ModelingParts,
    out: &mut OutputDir,
) -> Result<()> {
    let outcomes_path = cfg.input("outcomes")?;
    let outcomes = ingest::load_outcomes(&outcomes_path, &cfg.modeling.binary_outcomes)?;
    let inputs: ModelInputs = analysis::ngram_inputs(study, tables, &outcomes)?;
    let ridge = ridge_options(&cfg.modeling);

    let trained = if parts.train || parts.importance {
        analysis::train(&inputs, &ridge)?
    } else {
        Vec::new()
    };
    if parts.train {
        write_models(out, &trained)?;
    }

    let lexica = cfg
        .optional_input("lexica")?
        .map(|p| LexiconModel::load_csv(&p))
        .transpose()?;

    if parts.evaluate {
        let opts = eval_options(cfg);
        let mut cells = Vec::new();
        let mut comps = Vec::new();
        let report = analysis::evaluate(&inputs, &opts)?;
        out.json(
            "eval_ngrams.json",
            &EvalBundle {
                features: "ngrams",
                reduction: None,
                report: &report,
            },
        )?;
        let (c, k) = analysis::eval_rows("ngrams", &report);
        cells.extend(c);
        comps.extend(k);

        if let Some(path) = cfg.optional_input("embeddings")? {
            let emb = ingest::load_embeddings(&path)?;
            let (inputs, nmf) = analysis::embedding_inputs(
                study,
                &emb,
                &outcomes,
                cfg.modeling.nmf_k,
                cfg.modeling.nmf_iterations,
                cfg.seed,
            )?;
            let report = analysis::evaluate(&inputs, &opts)?;
            out.json(
                "eval_embeddings.json",
                &EvalBundle {
                    features: "embeddings",
                    reduction: Some(&nmf),
                    report: &report,
                },
            )?;
            let (c, k) = analysis::eval_rows("embeddings", &report);
            cells.extend(c);
            comps.extend(k);
        }
        out.csv("eval.csv", &cells)?;
        out.csv("eval_comparisons.csv", &comps)?;

        if let Some(lexica) = &lexica {
            let rows = analysis::lexicon_eval(
                lexica,
                tables,
                &outcomes,
                &study.users,
                cfg.modeling.bootstrap_iterations,
                cfg.seed,
            );
            out.json("lexicon_eval.json", &rows)?;
        }
    }

    if parts.importance {
        let freq_fb = inputs.fb.mean_frequencies();
        let freq_sms = inputs.sms.mean_frequencies();
        let mut rows = analysis::importance("trained", &trained, &freq_fb, &freq_sms);
        if let Some(lexica) = &lexica {
            let full_fb = analysis::mean_frequencies(&tables.ngrams[&Platform::Facebook]);
            let full_sms = analysis::mean_frequencies(&tables.ngrams[&Platform::Sms]);
            let models: Vec<LexiconModel> = lexica.values().cloned().collect();
            rows.extend(analysis::importance("lexicon", &models, &full_fb, &full_sms));
        }
        out.json("importance.json", &rows)?;
        out.csv("importance.csv", &rows)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct InputDigest {
    path: PathBuf,
    bytes: u64,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    thresholds: &'a Thresholds,
    redaction: &'a RedactionSettings,
    modeling: &'a ModelingSettings,
    inputs: BTreeMap<&'static str, InputDigest>,
    outputs: &'a BTreeMap<String, String>,
}

fn manifest(cfg: &RunConfig, out: &mut OutputDir) -> Result<()> {
    let mut inputs = BTreeMap::new();
    for (name, p) in cfg.inputs.entries() {
        let (bytes, sha256) = sha256_file(&cfg.resolve(p))?;
        inputs.insert(
            name,
            InputDigest {
                path: p.clone(),
                bytes,
                sha256,
            },
        );
    }
    let outputs = out.written().clone();
    let m = Manifest {
        tool: "xplat",
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        thresholds: &cfg.thresholds,
        redaction: &cfg.redaction,
        modeling: &cfg.modeling,
        inputs,
        outputs: &outputs,
    };
    out.json("manifest.json", &m)
}

fn stage<T>(name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().with_context(|| format!("stage `{name}` failed"))
}

fn staging_path(target: &Path) -> PathBuf {
    let mut name = target.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    target.with_file_name(name)
}

/// Full run: redact, features, diff, modeling, manifest.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PathBuf> {
    let target = cfg.output_dir();
    let staging = staging_path(&target);
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    let result = (|| {
        let mut out = OutputDir::create(&staging)?;
        let study = stage("redact", || ingest(cfg, &mut out))?;
        stage("summary", || summary(&study, &mut out))?;
        let tables = stage("features", || features(cfg, &study, &mut out))?;
        stage("diff", || diff(cfg, &study, &tables, &mut out))?;
        stage("modeling", || modeling(cfg, &study, &tables, ModelingParts::ALL, &mut out))?;
        stage("manifest", || manifest(cfg, &mut out))
    })();
    if let Err(e) = result {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    if target.exists() {
        fs::remove_dir_all(&target)
            .with_context(|| format!("cannot replace {}", target.display()))?;
    }
    fs::rename(&staging, &target)
        .with_context(|| format!("cannot move results to {}", target.display()))?;
    Ok(target)
}
