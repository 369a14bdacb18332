//! Lexicon scoring, ridge regression with leave-one-out evaluation,
//! train/test platform transfer, weighted frequency-difference importance
//! and NMF dimensionality reduction.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, Platform};
use crate::stats::{self, BootstrapResult};

/// Term in a lexicon weight file that carries the intercept.
pub const INTERCEPT_TERM: &str = "_intercept";

/// Linear model over named features: `sum(w_f * freq(f)) + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconModel {
    pub outcome: String,
    pub weights: BTreeMap<String, f64>,
    pub intercept: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct LexiconRow {
    term: String,
    category: String,
    weight: f64,
}

impl LexiconModel {
    pub fn apply(&self, features: &FeatureVector) -> f64 {
        // iterate over the smaller map
        let dot: f64 = if features.len() < self.weights.len() {
            features
                .iter()
                .filter_map(|(k, v)| self.weights.get(k).map(|w| w * v))
                .sum()
        } else {
            self.weights
                .iter()
                .filter_map(|(k, w)| features.get(k).map(|v| w * v))
                .sum()
        };
        dot + self.intercept
    }

    /// Read `term,category,weight` rows; one model per category.
    pub fn read_csv<R: Read>(reader: R) -> Result<BTreeMap<String, LexiconModel>> {
        let mut out: BTreeMap<String, LexiconModel> = BTreeMap::new();
        let mut rdr = csv::Reader::from_reader(reader);
        for (i, row) in rdr.deserialize::<LexiconRow>().enumerate() {
            let row = row.map_err(|e| Error::Format {
                line: i + 2,
                message: e.to_string(),
            })?;
            if !row.weight.is_finite() {
                return Err(Error::Format {
                    line: i + 2,
                    message: format!("non-finite weight for {:?}", row.term),
                });
            }
            let model = out.entry(row.category.clone()).or_insert_with(|| LexiconModel {
                outcome: row.category.clone(),
                weights: BTreeMap::new(),
                intercept: 0.0,
            });
            if row.term == INTERCEPT_TERM {
                model.intercept += row.weight;
            } else {
                *model.weights.entry(row.term).or_insert(0.0) += row.weight;
            }
        }
        Ok(out)
    }

    pub fn load_csv(path: &Path) -> Result<BTreeMap<String, LexiconModel>> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(f)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let rows = std::iter::once((INTERCEPT_TERM, self.intercept))
            .chain(self.weights.iter().map(|(k, v)| (k.as_str(), *v)));
        for (term, weight) in rows {
            w.serialize(LexiconRow {
                term: term.to_string(),
                category: self.outcome.clone(),
                weight,
            })
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RidgeOptions {
    pub alpha: f64,
    /// Scale columns to unit variance using training statistics.
    pub standardize: bool,
    /// Fit an unpenalized intercept by centering.
    pub fit_intercept: bool,
}

impl Default for RidgeOptions {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            standardize: true,
            fit_intercept: true,
        }
    }
}

/// Ridge fit expressed on the original feature scale.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub coef: DVector<f64>,
    pub intercept: f64,
}

impl RidgeModel {
    pub fn predict_row(&self, x: &DMatrix<f64>, row: usize) -> f64 {
        x.row(row).transpose().dot(&self.coef) + self.intercept
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        x * &self.coef + DVector::from_element(x.nrows(), self.intercept)
    }

    pub fn into_lexicon(self, outcome: &str, features: &[String]) -> LexiconModel {
        LexiconModel {
            outcome: outcome.to_string(),
            weights: features
                .iter()
                .cloned()
                .zip(self.coef.iter().copied())
                .filter(|(_, w)| *w != 0.0)
                .collect(),
            intercept: self.intercept,
        }
    }
}

fn solve_spd(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Degenerate("ridge system is not positive definite".into()))?;
    Ok(chol.solve(&b))
}

/// Solve `(A'A + alpha I) w = A'b`, via the n x n dual when A is wide.
fn ridge_solve(a: &DMatrix<f64>, b: &DVector<f64>, alpha: f64) -> Result<DVector<f64>> {
    let (n, p) = a.shape();
    if p == 0 {
        return Ok(DVector::zeros(0));
    }
    if p <= n {
        let mut g = a.tr_mul(a);
        for j in 0..p {
            g[(j, j)] += alpha;
        }
        solve_spd(g, a.tr_mul(b))
    } else {
        let mut k = a * a.transpose();
        for i in 0..n {
            k[(i, i)] += alpha;
        }
        Ok(a.tr_mul(&solve_spd(k, b.clone())?))
    }
}

/// Column centering and scaling derived from training rows.
struct Scaling {
    mean: DVector<f64>,
    scale: DVector<f64>,
}

impl Scaling {
    fn fit(x: &DMatrix<f64>, opts: &RidgeOptions) -> Self {
        let (n, p) = x.shape();
        let mut mean = DVector::zeros(p);
        let mut scale = DVector::from_element(p, 1.0);
        for j in 0..p {
            let col = x.column(j);
            if opts.fit_intercept {
                mean[j] = col.sum() / n as f64;
            }
            if opts.standardize {
                let m = col.sum() / n as f64;
                let ss: f64 = col.iter().map(|v| (v - m) * (v - m)).sum();
                let sd = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
                // constant columns carry no signal; centering zeroes them
                scale[j] = if sd > 0.0 { sd } else { 1.0 };
            }
        }
        Self { mean, scale }
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x.clone();
        for j in 0..z.ncols() {
            let (m, s) = (self.mean[j], self.scale[j]);
            z.column_mut(j).apply(|v| *v = (*v - m) / s);
        }
        z
    }
}

fn check_finite(x: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite value in ridge input".into()));
    }
    Ok(())
}

/// L2-regularized least squares. With default options the columns are
/// standardized and the intercept comes from the training means.
pub fn ridge_fit(x: &DMatrix<f64>, y: &[f64], opts: &RidgeOptions) -> Result<RidgeModel> {
    if x.nrows() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "{} rows but {} outcomes",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::InvalidArgument("no training rows".into()));
    }
    if opts.alpha.is_nan() || opts.alpha <= 0.0 || !opts.alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("alpha must be > 0, got {}", opts.alpha)));
    }
    check_finite(x, y)?;
    let scaling = Scaling::fit(x, opts);
    let z = scaling.apply(x);
    let y_mean = if opts.fit_intercept { stats::mean(y) } else { 0.0 };
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_mean));
    let w = ridge_solve(&z, &yc, opts.alpha)?;
    let coef = w.component_div(&scaling.scale);
    let intercept = y_mean - coef.dot(&scaling.mean);
    Ok(RidgeModel { coef, intercept })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoocvMethod {
    /// Refit for every held-out row.
    #[default]
    Refit,
    /// Closed-form leave-one-out residuals from the hat matrix. Exact for
    /// unstandardized fits only.
    HatMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Pearson,
    /// Share of correct signs against ±1 truth.
    SignAccuracy,
}

impl Metric {
    pub fn compute(self, pred: &[f64], truth: &[f64]) -> Result<f64> {
        match self {
            Metric::Pearson => stats::pearson_r(pred, truth),
            Metric::SignAccuracy => Ok(stats::sign_accuracy(pred, truth, majority_sign(truth))),
        }
    }
}

/// +1 unless strictly more values are negative.
pub fn majority_sign(truth: &[f64]) -> f64 {
    let neg = truth.iter().filter(|&&t| t < 0.0).count();
    if 2 * neg > truth.len() {
        -1.0
    } else {
        1.0
    }
}

/// Leave-one-out folds: (training rows, held-out row).
pub fn loocv_folds(n: usize) -> impl Iterator<Item = (Vec<usize>, usize)> {
    (0..n).map(move |i| ((0..n).filter(|&j| j != i).collect(), i))
}

fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    x.select_rows(rows)
}

/// Held-out predictions for every row; None when a fold was degenerate.
pub fn loocv_predictions(
    x: &DMatrix<f64>,
    y: &[f64],
    opts: &RidgeOptions,
    method: LoocvMethod,
) -> Result<Vec<Option<f64>>> {
    transfer_predictions(x, x, y, opts, method)
}

/// Fit on `source` minus row i, predict row i of `target`. With
/// `source == target` this is plain leave-one-out.
pub fn transfer_predictions(
    source: &DMatrix<f64>,
    target: &DMatrix<f64>,
    y: &[f64],
    opts: &RidgeOptions,
    method: LoocvMethod,
) -> Result<Vec<Option<f64>>> {
    let n = y.len();
    if n < 3 {
        return Err(Error::InvalidArgument("leave-one-out needs n >= 3".into()));
    }
    if source.shape() != target.shape() || source.nrows() != n {
        return Err(Error::InvalidArgument("source, target and y are not aligned".into()));
    }
    check_finite(source, y)?;
    check_finite(target, &[])?;
    match method {
        LoocvMethod::Refit => {
            let folds: Vec<(Vec<usize>, usize)> = loocv_folds(n).collect();
            folds
                .into_par_iter()
                .map(|(train, held)| {
                    debug_assert!(!train.contains(&held));
                    let ys: Vec<f64> = train.iter().map(|&r| y[r]).collect();
                    match ridge_fit(&select_rows(source, &train), &ys, opts) {
                        Ok(m) => Ok(Some(m.predict_row(target, held))),
                        Err(Error::Degenerate(_)) => Ok(None),
                        Err(e) => Err(e),
                    }
                })
                .collect()
        }
        LoocvMethod::HatMatrix => {
            if opts.standardize {
                return Err(Error::InvalidArgument(
                    "hat-matrix leave-one-out requires standardize = false".into(),
                ));
            }
            if source != target {
                return Err(Error::InvalidArgument(
                    "hat-matrix leave-one-out needs source == target".into(),
                ));
            }
            hat_loocv(source, y, opts)
        }
    }
}

fn hat_loocv(x: &DMatrix<f64>, y: &[f64], opts: &RidgeOptions) -> Result<Vec<Option<f64>>> {
    let n = x.nrows();
    let scaling = Scaling::fit(x, opts);
    let xc = scaling.apply(x);
    // smoother of the penalized part; the intercept adds the 1/n averaging
    let s = if xc.ncols() == 0 {
        DMatrix::zeros(n, n)
    } else if xc.ncols() <= n {
        let mut g = xc.tr_mul(&xc);
        for j in 0..g.nrows() {
            g[(j, j)] += opts.alpha;
        }
        let chol = g
            .cholesky()
            .ok_or_else(|| Error::Degenerate("ridge system is not positive definite".into()))?;
        &xc * chol.solve(&xc.transpose())
    } else {
        let k = &xc * xc.transpose();
        let mut ka = k.clone();
        for i in 0..n {
            ka[(i, i)] += opts.alpha;
        }
        let chol = ka
            .cholesky()
            .ok_or_else(|| Error::Degenerate("ridge system is not positive definite".into()))?;
        // K (K + aI)^-1, symmetric since both commute
        chol.solve(&k).transpose()
    };
    let yv = DVector::from_column_slice(y);
    let (h, fitted) = if opts.fit_intercept {
        let ym = stats::mean(y);
        let yc = yv.add_scalar(-ym);
        let h = s.map(|v| v + 1.0 / n as f64);
        (h, (&s * yc).add_scalar(ym))
    } else {
        let f = &s * &yv;
        (s, f)
    };
    Ok((0..n)
        .map(|i| {
            let hii = h[(i, i)];
            (hii < 1.0 - 1e-12).then(|| y[i] - (y[i] - fitted[i]) / (1.0 - hii))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvResult {
    pub metric: f64,
    pub predictions: Vec<Option<f64>>,
    pub skipped: usize,
}

/// Leave-one-out metric of ridge predictions against `y`.
pub fn loocv_evaluate(
    x: &DMatrix<f64>,
    y: &[f64],
    opts: &RidgeOptions,
    metric: Metric,
    method: LoocvMethod,
) -> Result<LoocvResult> {
    let predictions = loocv_predictions(x, y, opts, method)?;
    let metric = metric_on(&predictions, y, metric)?;
    let skipped = predictions.iter().filter(|p| p.is_none()).count();
    Ok(LoocvResult {
        metric,
        predictions,
        skipped,
    })
}

fn metric_on(pred: &[Option<f64>], y: &[f64], metric: Metric) -> Result<f64> {
    let (p, t): (Vec<f64>, Vec<f64>) = pred
        .iter()
        .zip(y)
        .filter_map(|(p, &t)| p.map(|p| (p, t)))
        .unzip();
    metric.compute(&p, &t)
}

/// Per-user feature matrix of one platform; rows follow `users`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainData {
    pub platform: Platform,
    pub users: Vec<String>,
    pub features: Vec<String>,
    pub x: DMatrix<f64>,
}

impl DomainData {
    /// Dense matrix over `features` from sparse per-user vectors.
    pub fn from_vectors(
        platform: Platform,
        vectors: &BTreeMap<String, FeatureVector>,
        features: &[String],
    ) -> Self {
        let users: Vec<String> = vectors.keys().cloned().collect();
        let x = DMatrix::from_fn(users.len(), features.len(), |i, j| {
            vectors[&users[i]].get(&features[j]).copied().unwrap_or(0.0)
        });
        Self {
            platform,
            users,
            features: features.to_vec(),
            x,
        }
    }

    /// Mean relative frequency of every feature over users.
    pub fn mean_frequencies(&self) -> FeatureVector {
        let n = self.x.nrows().max(1) as f64;
        self.features
            .iter()
            .enumerate()
            .map(|(j, f)| (f.clone(), self.x.column(j).sum() / n))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Continuous,
    /// Coded ±1.
    Binary,
}

impl OutcomeKind {
    pub fn metric(self) -> Metric {
        match self {
            OutcomeKind::Continuous => Metric::Pearson,
            OutcomeKind::Binary => Metric::SignAccuracy,
        }
    }
}

/// Self-reported outcome; `values` follow the user order of the domain data.
/// Non-finite values mark users without a report.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeData {
    pub name: String,
    pub kind: OutcomeKind,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossDomainMode {
    /// The target user is also left out of the source training set.
    #[default]
    LeaveOneUserOut,
    /// Train once on every source user.
    FullSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub ridge: RidgeOptions,
    pub cross_domain: CrossDomainMode,
    pub bootstrap_iterations: usize,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            ridge: RidgeOptions::default(),
            cross_domain: CrossDomainMode::default(),
            bootstrap_iterations: stats::DEFAULT_BOOTSTRAP_ITERATIONS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    /// "FB/SMS" means trained on Facebook, tested on SMS.
    pub cell: String,
    pub train: Platform,
    pub test: Platform,
    pub metric: Option<f64>,
    pub n: usize,
    pub skipped: usize,
    #[serde(skip)]
    pub predictions: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellComparison {
    pub test: Platform,
    pub in_domain: String,
    pub cross_domain: String,
    pub bootstrap: Option<BootstrapResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeReport {
    pub outcome: String,
    pub kind: OutcomeKind,
    pub metric: Metric,
    pub cells: Vec<CellResult>,
    pub comparisons: Vec<CellComparison>,
}

impl OutcomeReport {
    pub fn cell(&self, train: Platform, test: Platform) -> &CellResult {
        self.cells
            .iter()
            .find(|c| c.train == train && c.test == test)
            .expect("all four cells present")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub options: EvalOptions,
    pub users: usize,
    pub features: usize,
    pub outcomes: Vec<OutcomeReport>,
}

pub fn cell_name(train: Platform, test: Platform) -> String {
    format!("{}/{}", train.short(), test.short())
}

const CELL_ORDER: [(Platform, Platform); 4] = [
    (Platform::Facebook, Platform::Facebook),
    (Platform::Facebook, Platform::Sms),
    (Platform::Sms, Platform::Sms),
    (Platform::Sms, Platform::Facebook),
];

fn unmatched_users(a: &[String], b: &[String]) -> Vec<String> {
    let sa: std::collections::BTreeSet<&String> = a.iter().collect();
    let sb: std::collections::BTreeSet<&String> = b.iter().collect();
    sa.symmetric_difference(&sb).map(|s| s.to_string()).collect()
}

/// Train/test on every platform pair. In-domain cells are leave-one-out;
/// cross-domain cells follow `opts.cross_domain`. Each test platform gets a
/// bootstrap comparison of its in-domain and cross-domain predictions.
pub fn cross_domain_matrix(
    fb: &DomainData,
    sms: &DomainData,
    outcomes: &[OutcomeData],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if fb.users != sms.users {
        let mut diff = unmatched_users(&fb.users, &sms.users);
        if diff.is_empty() {
            diff.push("<same users in different order>".into());
        }
        return Err(Error::UserMismatch(diff));
    }
    if fb.features != sms.features {
        return Err(Error::InvalidArgument("platforms use different feature columns".into()));
    }
    let n_users = fb.users.len();
    let domain = |p: Platform| if p == Platform::Facebook { fb } else { sms };

    let reports = outcomes
        .iter()
        .enumerate()
        .map(|(oi, outcome)| {
            if outcome.values.len() != n_users {
                return Err(Error::InvalidArgument(format!(
                    "outcome {} has {} values for {} users",
                    outcome.name,
                    outcome.values.len(),
                    n_users
                )));
            }
            let rows: Vec<usize> = (0..n_users).filter(|&i| outcome.values[i].is_finite()).collect();
            let y: Vec<f64> = rows.iter().map(|&i| outcome.values[i]).collect();
            let metric = outcome.kind.metric();

            let cells = CELL_ORDER
                .par_iter()
                .map(|&(train, test)| {
                    let xs = select_rows(&domain(train).x, &rows);
                    let xt = select_rows(&domain(test).x, &rows);
                    let predictions = if train == test
                        || opts.cross_domain == CrossDomainMode::LeaveOneUserOut
                    {
                        transfer_predictions(&xs, &xt, &y, &opts.ridge, LoocvMethod::Refit)?
                    } else {
                        let m = ridge_fit(&xs, &y, &opts.ridge)?;
                        m.predict(&xt).iter().map(|&v| Some(v)).collect()
                    };
                    let value = match metric_on(&predictions, &y, metric) {
                        Ok(v) => Some(v),
                        Err(Error::Degenerate(_)) => None,
                        Err(e) => return Err(e),
                    };
                    Ok(CellResult {
                        cell: cell_name(train, test),
                        train,
                        test,
                        metric: value,
                        n: rows.len(),
                        skipped: predictions.iter().filter(|p| p.is_none()).count(),
                        predictions,
                    })
                })
                .collect::<Result<Vec<_>>>()?;

            let mut comparisons = Vec::new();
            for (ci, test) in Platform::BOTH.into_iter().enumerate() {
                let inside = cells.iter().find(|c| c.train == test && c.test == test).unwrap();
                let across = cells.iter().find(|c| c.train != test && c.test == test).unwrap();
                let keep: Vec<usize> = (0..y.len())
                    .filter(|&i| inside.predictions[i].is_some() && across.predictions[i].is_some())
                    .collect();
                let a: Vec<f64> = keep.iter().map(|&i| inside.predictions[i].unwrap()).collect();
                let b: Vec<f64> = keep.iter().map(|&i| across.predictions[i].unwrap()).collect();
                let t: Vec<f64> = keep.iter().map(|&i| y[i]).collect();
                let seed = opts.seed.wrapping_add((oi * 2 + ci) as u64);
                let boot = match metric {
                    Metric::Pearson => {
                        stats::bootstrap_corr_diff(&a, &b, &t, opts.bootstrap_iterations, seed)
                    }
                    Metric::SignAccuracy => stats::bootstrap_accuracy_diff(
                        &a,
                        &b,
                        &t,
                        majority_sign(&t),
                        opts.bootstrap_iterations,
                        seed,
                    ),
                };
                comparisons.push(CellComparison {
                    test,
                    in_domain: inside.cell.clone(),
                    cross_domain: across.cell.clone(),
                    bootstrap: boot.ok(),
                });
            }
            Ok(OutcomeReport {
                outcome: outcome.name.clone(),
                kind: outcome.kind,
                metric,
                cells,
                comparisons,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(EvalReport {
        options: *opts,
        users: n_users,
        features: fb.features.len(),
        outcomes: reports,
    })
}

/// Sign of the weight (rows) crossed with the side the feature is more
/// frequent on (columns): A/B positive weight, C/D negative weight,
/// A/C Facebook-leaning, B/D SMS-leaning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Quadrant {
    A,
    B,
    C,
    D,
}

impl Quadrant {
    pub fn of(weight: f64, freq_diff: f64) -> Option<Quadrant> {
        if weight == 0.0 || freq_diff == 0.0 || !weight.is_finite() || !freq_diff.is_finite() {
            return None;
        }
        Some(match (weight > 0.0, freq_diff > 0.0) {
            (true, true) => Quadrant::A,
            (true, false) => Quadrant::B,
            (false, true) => Quadrant::C,
            (false, false) => Quadrant::D,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature: String,
    pub weight: f64,
    pub freq_fb: f64,
    pub freq_sms: f64,
    /// `weight * (freq_fb - freq_sms)`; positive values push Facebook
    /// estimates up relative to SMS.
    pub importance: f64,
    pub quadrant: Option<Quadrant>,
}

/// Weighted frequency difference of every weighted feature, sorted by
/// signed importance (largest first, ties by name).
pub fn feature_importance(
    model: &LexiconModel,
    freq_fb: &FeatureVector,
    freq_sms: &FeatureVector,
) -> Vec<ImportanceEntry> {
    let mut out: Vec<ImportanceEntry> = model
        .weights
        .iter()
        .map(|(f, &w)| {
            let a = freq_fb.get(f).copied().unwrap_or(0.0);
            let b = freq_sms.get(f).copied().unwrap_or(0.0);
            ImportanceEntry {
                feature: f.clone(),
                weight: w,
                freq_fb: a,
                freq_sms: b,
                importance: w * (a - b),
                quadrant: Quadrant::of(w, a - b),
            }
        })
        .collect();
    out.sort_by(|x, y| {
        y.importance
            .total_cmp(&x.importance)
            .then_with(|| x.feature.cmp(&y.feature))
    });
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmfResult {
    pub w: DMatrix<f64>,
    pub h: DMatrix<f64>,
    /// Squared Frobenius error after initialization and after each iteration.
    pub objective: Vec<f64>,
    /// Per-column shift added to make the input non-negative, if any.
    pub shift: Option<Vec<f64>>,
}

impl NmfResult {
    pub fn error(&self) -> f64 {
        self.objective.last().copied().unwrap_or(f64::NAN).sqrt()
    }
}

/// Shift columns with negative entries up by their minimum.
pub fn shift_nonnegative(v: &mut DMatrix<f64>) -> Option<Vec<f64>> {
    let shifts: Vec<f64> = v
        .column_iter()
        .map(|c| {
            let m = c.min();
            if m < 0.0 { -m } else { 0.0 }
        })
        .collect();
    if shifts.iter().all(|&s| s == 0.0) {
        return None;
    }
    for (j, &s) in shifts.iter().enumerate() {
        v.column_mut(j).add_scalar_mut(s);
    }
    Some(shifts)
}

fn frob2(v: &DMatrix<f64>, w: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
    (v - w * h).norm_squared()
}

fn multiplicative_step(target: &mut DMatrix<f64>, num: &DMatrix<f64>, den: &DMatrix<f64>) {
    for ((t, &a), &b) in target.iter_mut().zip(num.iter()).zip(den.iter()) {
        if b > 0.0 {
            *t *= a / b;
        }
    }
}

/// Multiplicative-update NMF `V ≈ W H` minimizing squared Frobenius error.
/// Negative inputs are shifted per column first.
pub fn nmf_reduce(v: &DMatrix<f64>, k: usize, iterations: usize, seed: u64) -> Result<NmfResult> {
    let (n, d) = v.shape();
    if k == 0 || k > n.min(d) {
        return Err(Error::InvalidArgument(format!(
            "k = {k} outside 1..={} for a {n}x{d} matrix",
            n.min(d)
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite matrix entry".into()));
    }
    let mut v = v.clone();
    let shift = shift_nonnegative(&mut v);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = (v.mean() / k as f64).sqrt().max(1e-3);
    let mut w = DMatrix::from_fn(n, k, |_, _| scale * (0.1 + rng.random::<f64>()));
    let mut h = DMatrix::from_fn(k, d, |_, _| scale * (0.1 + rng.random::<f64>()));

    let mut objective = Vec::with_capacity(iterations + 1);
    objective.push(frob2(&v, &w, &h));
    for _ in 0..iterations {
        let num = w.tr_mul(&v);
        let den = w.tr_mul(&w) * &h;
        multiplicative_step(&mut h, &num, &den);
        let num = &v * h.transpose();
        let den = &w * (&h * h.transpose());
        multiplicative_step(&mut w, &num, &den);
        objective.push(frob2(&v, &w, &h));
    }
    Ok(NmfResult { w, h, objective, shift })
}

/// Non-negative codes for new rows against a fixed basis `h`.
pub fn nmf_transform(v: &DMatrix<f64>, h: &DMatrix<f64>, iterations: usize, seed: u64) -> Result<DMatrix<f64>> {
    if v.ncols() != h.ncols() {
        return Err(Error::InvalidArgument("basis and data widths differ".into()));
    }
    if v.iter().any(|x| *x < 0.0 || !x.is_finite()) {
        return Err(Error::InvalidArgument("transform input must be finite and non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = h.nrows();
    let mut w = DMatrix::from_fn(v.nrows(), k, |_, _| 0.1 + rng.random::<f64>());
    let hht = h * h.transpose();
    let vht = v * h.transpose();
    for _ in 0..iterations {
        let den = &w * &hht;
        multiplicative_step(&mut w, &vht, &den);
    }
    Ok(w)
}
