//! Report computations shared by the subcommands and the pipeline.

use std::collections::BTreeMap;

use anyhow::{ensure, Context, Result};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use xplat::features::{
    extract_dictionary, extract_ngrams_docs, frequent_features, DictionarySpec,
    FeatureVector, Platform,
};
use xplat::modeling::{
    cross_domain_matrix, feature_importance, majority_sign, nmf_reduce, ridge_fit, DomainData,
    EvalOptions, EvalReport, ImportanceEntry, LexiconModel, Metric, OutcomeData, OutcomeKind,
    Quadrant, RidgeOptions,
};
use xplat::stats::{self, bh_fdr, describe, BootstrapResult};

use crate::ingest::{Outcomes, Study};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub platform: Platform,
    pub measure: &'static str,
    pub users: usize,
    pub median: f64,
    pub mean: f64,
    pub sd: f64,
    pub sd_defined: bool,
}

/// Per-user word and post counts on each platform.
pub fn summarize(study: &Study) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for platform in Platform::BOTH {
        let corpora = study.corpus(platform);
        let words: Vec<f64> = corpora.values().map(|c| c.word_count() as f64).collect();
        let posts: Vec<f64> = corpora.values().map(|c| c.post_count() as f64).collect();
        for (measure, values) in [("words", words), ("posts", posts)] {
            if let Some(d) = describe(&values) {
                rows.push(SummaryRow {
                    platform,
                    measure,
                    users: d.n,
                    median: d.median,
                    mean: d.mean,
                    sd: d.sd,
                    sd_defined: d.sd_defined,
                });
            }
        }
    }
    rows
}

/// Per-user feature vectors of both platforms.
#[derive(Debug, Clone)]
pub struct FeatureTables {
    pub orders: Vec<usize>,
    pub min_share: f64,
    pub ngrams: BTreeMap<Platform, BTreeMap<String, FeatureVector>>,
    /// N-grams that pass the group-frequency filter.
    pub kept: Vec<String>,
    pub dictionary: Option<BTreeMap<Platform, BTreeMap<String, FeatureVector>>>,
}

pub fn build_features(
    study: &Study,
    orders: &[usize],
    min_share: f64,
    dictionary: Option<&DictionarySpec>,
) -> FeatureTables {
    let mut ngrams = BTreeMap::new();
    let mut dict = BTreeMap::new();
    for platform in Platform::BOTH {
        let per_user: Vec<(String, FeatureVector, Option<FeatureVector>)> = study
            .corpus(platform)
            .par_iter()
            .map(|(user, corpus)| {
                let docs = corpus.tokenized();
                let ng = extract_ngrams_docs(&docs, orders);
                let dv = dictionary.map(|spec| {
                    let all: Vec<String> = docs.into_iter().flatten().collect();
                    extract_dictionary(&all, spec)
                });
                (user.clone(), ng, dv)
            })
            .collect();
        let mut ng_map = BTreeMap::new();
        let mut dv_map = BTreeMap::new();
        for (u, ng, dv) in per_user {
            if let Some(dv) = dv {
                dv_map.insert(u.clone(), dv);
            }
            ng_map.insert(u, ng);
        }
        ngrams.insert(platform, ng_map);
        dict.insert(platform, dv_map);
    }
    let kept = frequent_features(ngrams.values().flat_map(|m| m.values()), min_share)
        .into_iter()
        .collect();
    FeatureTables {
        orders: orders.to_vec(),
        min_share,
        ngrams,
        kept,
        dictionary: dictionary.map(|_| dict),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureOverview {
    pub users: usize,
    pub orders: Vec<usize>,
    pub min_group_frequency: f64,
    pub ngrams_seen: usize,
    pub ngrams_kept: usize,
    pub kept: Vec<String>,
}

pub fn feature_overview(t: &FeatureTables) -> FeatureOverview {
    let seen: std::collections::BTreeSet<&String> =
        t.ngrams.values().flat_map(|m| m.values()).flat_map(|v| v.keys()).collect();
    FeatureOverview {
        users: t.ngrams[&Platform::Facebook].len(),
        orders: t.orders.clone(),
        min_group_frequency: t.min_share,
        ngrams_seen: seen.len(),
        ngrams_kept: t.kept.len(),
        kept: t.kept.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DictionaryRow {
    pub user_id: String,
    pub platform: Platform,
    pub category: String,
    pub value: f64,
}

pub fn dictionary_rows(t: &FeatureTables) -> Vec<DictionaryRow> {
    let Some(dict) = &t.dictionary else {
        return Vec::new();
    };
    let mut rows = Vec::new();
    for (platform, users) in dict {
        for (user, fv) in users {
            for (cat, v) in fv {
                rows.push(DictionaryRow {
                    user_id: user.clone(),
                    platform: *platform,
                    category: cat.clone(),
                    value: *v,
                });
            }
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NgramDiff {
    pub ngram: String,
    pub order: usize,
    /// Positive: more frequent on Facebook.
    pub d: Option<f64>,
    pub p_value: Option<f64>,
    pub significant: bool,
    /// Platforms are perfectly separated by this n-gram.
    pub separated: bool,
    pub freq_fb: f64,
    pub freq_sms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryDiff {
    pub category: String,
    pub t: Option<f64>,
    pub d: Option<f64>,
    pub p_value: Option<f64>,
    pub significant: bool,
    pub mean_fb: f64,
    pub mean_sms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffReport {
    pub users: usize,
    pub fdr_alpha: f64,
    pub ngrams: Vec<NgramDiff>,
    pub categories: Vec<CategoryDiff>,
}

fn paired_columns(
    tables: &BTreeMap<Platform, BTreeMap<String, FeatureVector>>,
    users: &[String],
    feature: &str,
) -> (Vec<f64>, Vec<f64>) {
    let col = |p: Platform| -> Vec<f64> {
        users
            .iter()
            .map(|u| tables[&p][u].get(feature).copied().unwrap_or(0.0))
            .collect()
    };
    (col(Platform::Facebook), col(Platform::Sms))
}

fn flag_significant(ps: &[Option<f64>], alpha: f64) -> Vec<bool> {
    let tested: Vec<f64> = ps.iter().flatten().copied().collect();
    let mut flags = bh_fdr(&tested, alpha).into_iter();
    ps.iter()
        .map(|p| p.is_some() && flags.next().unwrap_or(false))
        .collect()
}

fn by_effect<T>(rows: &mut [T], key: impl Fn(&T) -> (Option<f64>, &str)) {
    rows.sort_by(|a, b| {
        let (ea, na) = key(a);
        let (eb, nb) = key(b);
        let ea = ea.unwrap_or(f64::NEG_INFINITY);
        let eb = eb.unwrap_or(f64::NEG_INFINITY);
        eb.total_cmp(&ea).then_with(|| na.cmp(nb))
    });
}

/// Paired effect sizes and logistic platform screening for every kept
/// n-gram, paired t-tests for dictionary categories, BH-FDR within each.
pub fn diff(study: &Study, t: &FeatureTables, alpha: f64) -> Result<DiffReport> {
    let users = &study.users;
    ensure!(
        users.len() >= 2,
        "insufficient users: {} included on both platforms, need at least 2 ({} seen, {} excluded)",
        users.len(),
        study.log.users_seen,
        study.log.excluded.len()
    );
    let labels: Vec<bool> = std::iter::repeat_n(true, users.len())
        .chain(std::iter::repeat_n(false, users.len()))
        .collect();
    let mut ngrams: Vec<NgramDiff> = t
        .kept
        .par_iter()
        .map(|f| {
            let (fb, sms) = paired_columns(&t.ngrams, users, f);
            let d = stats::cohens_d_paired(&fb, &sms).ok();
            let stacked: Vec<f64> = fb.iter().chain(&sms).copied().collect();
            let fit = stats::univariate_logistic_p(&stacked, &labels).ok();
            NgramDiff {
                ngram: f.clone(),
                order: f.split(' ').count(),
                d,
                p_value: fit.map(|r| r.p_value),
                significant: false,
                separated: fit.is_some_and(|r| r.separated),
                freq_fb: stats::mean(&fb),
                freq_sms: stats::mean(&sms),
            }
        })
        .collect();
    let ps: Vec<Option<f64>> = ngrams.iter().map(|r| r.p_value).collect();
    for (row, s) in ngrams.iter_mut().zip(flag_significant(&ps, alpha)) {
        row.significant = s;
    }
    by_effect(&mut ngrams, |r| (r.d, &r.ngram));

    let mut categories = Vec::new();
    if let Some(dict) = &t.dictionary {
        let names: Vec<String> = dict[&Platform::Facebook]
            .values()
            .next()
            .map(|fv| fv.keys().cloned().collect())
            .unwrap_or_default();
        for c in names {
            let (fb, sms) = paired_columns(dict, users, &c);
            let tt = stats::paired_t_test(&fb, &sms).ok();
            categories.push(CategoryDiff {
                category: c,
                t: tt.map(|r| r.t),
                d: stats::cohens_d_paired(&fb, &sms).ok(),
                p_value: tt.map(|r| r.p),
                significant: false,
                mean_fb: stats::mean(&fb),
                mean_sms: stats::mean(&sms),
            });
        }
        let ps: Vec<Option<f64>> = categories.iter().map(|r| r.p_value).collect();
        for (row, s) in categories.iter_mut().zip(flag_significant(&ps, alpha)) {
            row.significant = s;
        }
        by_effect(&mut categories, |r| (r.t, &r.category));
    }
    Ok(DiffReport {
        users: users.len(),
        fdr_alpha: alpha,
        ngrams,
        categories,
    })
}

/// Word-cloud data for the significant n-grams: size from |d|, darkness
/// from frequency, both scaled to [0, 1] within a side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CloudDatum {
    pub ngram: String,
    pub d: Option<f64>,
    pub frequency: f64,
    pub side: Platform,
    pub size: f64,
    pub darkness: f64,
}

pub fn cloud(report: &DiffReport) -> Vec<CloudDatum> {
    let sig: Vec<&NgramDiff> = report.ngrams.iter().filter(|r| r.significant).collect();
    let side = |r: &NgramDiff| {
        if r.freq_fb >= r.freq_sms {
            Platform::Facebook
        } else {
            Platform::Sms
        }
    };
    let mut max_d: BTreeMap<Platform, f64> = BTreeMap::new();
    let mut max_f: BTreeMap<Platform, f64> = BTreeMap::new();
    for r in &sig {
        let s = side(r);
        let f = (r.freq_fb + r.freq_sms) / 2.0;
        let md = max_d.entry(s).or_insert(0.0);
        *md = md.max(r.d.map_or(0.0, f64::abs));
        let mf = max_f.entry(s).or_insert(0.0);
        *mf = mf.max(f);
    }
    let scaled = |v: f64, max: f64| if max > 0.0 { v / max } else { 0.0 };
    sig.into_iter()
        .map(|r| {
            let s = side(r);
            let f = (r.freq_fb + r.freq_sms) / 2.0;
            CloudDatum {
                ngram: r.ngram.clone(),
                d: r.d,
                frequency: f,
                side: s,
                size: scaled(r.d.map_or(0.0, f64::abs), max_d[&s]),
                darkness: scaled(f, max_f[&s]),
            }
        })
        .collect()
}

/// Aligned per-platform matrices and outcome columns for the included users.
#[derive(Debug, Clone)]
pub struct ModelInputs {
    pub fb: DomainData,
    pub sms: DomainData,
    pub outcomes: Vec<OutcomeData>,
}

pub fn outcome_columns(outcomes: &Outcomes, users: &[String]) -> Vec<OutcomeData> {
    outcomes
        .names
        .iter()
        .map(|name| OutcomeData {
            name: name.clone(),
            kind: if outcomes.binary.contains(name) {
                OutcomeKind::Binary
            } else {
                OutcomeKind::Continuous
            },
            values: outcomes.column(name, users).expect("known column"),
        })
        .collect()
}

pub fn ngram_inputs(study: &Study, t: &FeatureTables, outcomes: &Outcomes) -> Result<ModelInputs> {
    ensure!(
        study.users.len() >= 3,
        "insufficient users for leave-one-out: {} included",
        study.users.len()
    );
    let domain = |p| DomainData::from_vectors(p, &t.ngrams[&p], &t.kept);
    Ok(ModelInputs {
        fb: domain(Platform::Facebook),
        sms: domain(Platform::Sms),
        outcomes: outcome_columns(outcomes, &study.users),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NmfSummary {
    pub k: usize,
    pub iterations: usize,
    pub seed: u64,
    pub input_dims: usize,
    pub final_error: f64,
    pub shifted_columns: usize,
}

/// NMF-reduced embeddings of both platforms, factorized jointly so the
/// two share one basis.
pub fn embedding_inputs(
    study: &Study,
    embeddings: &BTreeMap<(String, Platform), Vec<f64>>,
    outcomes: &Outcomes,
    k: usize,
    iterations: usize,
    seed: u64,
) -> Result<(ModelInputs, NmfSummary)> {
    let users = &study.users;
    let mut missing = Vec::new();
    let mut rows: Vec<&Vec<f64>> = Vec::new();
    for p in Platform::BOTH {
        for u in users {
            match embeddings.get(&(u.clone(), p)) {
                Some(v) => rows.push(v),
                None => missing.push(format!("{u}/{p}")),
            }
        }
    }
    ensure!(missing.is_empty(), "embeddings missing for {}", missing.join(", "));
    let d = rows.first().map_or(0, |r| r.len());
    let n = users.len();
    let v = DMatrix::from_fn(2 * n, d, |i, j| rows[i][j]);
    let k = k.min(2 * n).min(d);
    let fit = nmf_reduce(&v, k, iterations, seed).context("embedding reduction")?;
    let names: Vec<String> = (0..k).map(|j| format!("nmf{j:03}")).collect();
    let domain = |p: Platform, offset: usize| DomainData {
        platform: p,
        users: users.clone(),
        features: names.clone(),
        x: fit.w.rows(offset, n).into_owned(),
    };
    Ok((
        ModelInputs {
            fb: domain(Platform::Facebook, 0),
            sms: domain(Platform::Sms, n),
            outcomes: outcome_columns(outcomes, users),
        },
        NmfSummary {
            k,
            iterations,
            seed,
            input_dims: d,
            final_error: fit.error(),
            shifted_columns: fit.shift.map_or(0, |s| s.iter().filter(|&&x| x > 0.0).count()),
        },
    ))
}

/// Ridge models trained on every Facebook user with a report.
pub fn train(inputs: &ModelInputs, ridge: &RidgeOptions) -> Result<Vec<LexiconModel>> {
    inputs
        .outcomes
        .iter()
        .map(|o| {
            let rows: Vec<usize> = (0..o.values.len()).filter(|&i| o.values[i].is_finite()).collect();
            ensure!(rows.len() >= 2, "outcome {} has fewer than two reports", o.name);
            let x = inputs.fb.x.select_rows(&rows);
            let y: Vec<f64> = rows.iter().map(|&i| o.values[i]).collect();
            let m = ridge_fit(&x, &y, ridge).with_context(|| format!("training {}", o.name))?;
            Ok(m.into_lexicon(&o.name, &inputs.fb.features))
        })
        .collect()
}

pub fn evaluate(inputs: &ModelInputs, opts: &EvalOptions) -> Result<EvalReport> {
    Ok(cross_domain_matrix(&inputs.fb, &inputs.sms, &inputs.outcomes, opts)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub features: String,
    pub outcome: String,
    pub metric: Metric,
    pub cell: String,
    pub train: Platform,
    pub test: Platform,
    pub value: Option<f64>,
    pub n: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub features: String,
    pub outcome: String,
    pub test: Platform,
    pub in_domain: String,
    pub cross_domain: String,
    pub delta: Option<f64>,
    pub p_value: Option<f64>,
    pub iterations: Option<usize>,
    pub skipped: Option<usize>,
    pub seed: Option<u64>,
}

pub fn eval_rows(label: &str, r: &EvalReport) -> (Vec<EvalRow>, Vec<ComparisonRow>) {
    let mut cells = Vec::new();
    let mut comps = Vec::new();
    for o in &r.outcomes {
        for c in &o.cells {
            cells.push(EvalRow {
                features: label.into(),
                outcome: o.outcome.clone(),
                metric: o.metric,
                cell: c.cell.clone(),
                train: c.train,
                test: c.test,
                value: c.metric,
                n: c.n,
                skipped: c.skipped,
            });
        }
        for c in &o.comparisons {
            let b = c.bootstrap.as_ref();
            comps.push(ComparisonRow {
                features: label.into(),
                outcome: o.outcome.clone(),
                test: c.test,
                in_domain: c.in_domain.clone(),
                cross_domain: c.cross_domain.clone(),
                delta: b.map(|b| b.delta),
                p_value: b.map(|b| b.p_value),
                iterations: b.map(|b| b.iterations),
                skipped: b.map(|b| b.skipped),
                seed: b.map(|b| b.seed),
            });
        }
    }
    (cells, comps)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceRow {
    pub model: String,
    pub outcome: String,
    pub rank: usize,
    pub feature: String,
    pub weight: f64,
    pub freq_fb: f64,
    pub freq_sms: f64,
    pub importance: f64,
    pub quadrant: Option<Quadrant>,
}

/// Importance of every weighted feature of each model; frequencies are
/// means over the included users.
pub fn importance(
    source: &str,
    models: &[LexiconModel],
    freq_fb: &FeatureVector,
    freq_sms: &FeatureVector,
) -> Vec<ImportanceRow> {
    models
        .iter()
        .flat_map(|m| {
            feature_importance(m, freq_fb, freq_sms)
                .into_iter()
                .enumerate()
                .map(move |(i, e): (usize, ImportanceEntry)| ImportanceRow {
                    model: source.to_string(),
                    outcome: m.outcome.clone(),
                    rank: i + 1,
                    feature: e.feature,
                    weight: e.weight,
                    freq_fb: e.freq_fb,
                    freq_sms: e.freq_sms,
                    importance: e.importance,
                    quadrant: e.quadrant,
                })
        })
        .collect()
}

/// Mean relative frequency over users, for every feature seen.
pub fn mean_frequencies(per_user: &BTreeMap<String, FeatureVector>) -> FeatureVector {
    let n = per_user.len().max(1) as f64;
    let mut out = FeatureVector::new();
    for fv in per_user.values() {
        for (k, v) in fv {
            *out.entry(k.clone()).or_insert(0.0) += v;
        }
    }
    out.values_mut().for_each(|v| *v /= n);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LexiconEvalRow {
    pub outcome: String,
    pub metric: Metric,
    pub n: usize,
    pub facebook: Option<f64>,
    pub sms: Option<f64>,
    pub bootstrap: Option<BootstrapResult>,
}

/// Apply pretrained lexica to each platform and compare their agreement
/// with self-reports.
pub fn lexicon_eval(
    lexica: &BTreeMap<String, LexiconModel>,
    t: &FeatureTables,
    outcomes: &Outcomes,
    users: &[String],
    iterations: usize,
    seed: u64,
) -> Vec<LexiconEvalRow> {
    let cols = outcome_columns(outcomes, users);
    cols.iter()
        .enumerate()
        .filter_map(|(oi, o)| {
            let model = lexica.get(&o.name)?;
            let rows: Vec<usize> = (0..users.len()).filter(|&i| o.values[i].is_finite()).collect();
            let truth: Vec<f64> = rows.iter().map(|&i| o.values[i]).collect();
            let score = |p: Platform| -> Vec<f64> {
                rows.iter().map(|&i| model.apply(&t.ngrams[&p][&users[i]])).collect()
            };
            let (a, b) = (score(Platform::Facebook), score(Platform::Sms));
            let metric = o.kind.metric();
            let value = |est: &[f64]| metric.compute(est, &truth).ok();
            let s = seed.wrapping_add(oi as u64);
            let boot = match metric {
                Metric::Pearson => stats::bootstrap_corr_diff(&a, &b, &truth, iterations, s),
                Metric::SignAccuracy => stats::bootstrap_accuracy_diff(
                    &a,
                    &b,
                    &truth,
                    majority_sign(&truth),
                    iterations,
                    s,
                ),
            };
            Some(LexiconEvalRow {
                outcome: o.name.clone(),
                metric,
                n: rows.len(),
                facebook: value(&a),
                sms: value(&b),
                bootstrap: boot.ok(),
            })
        })
        .collect()
}
