//! Effect sizes, paired tests, logistic screening, FDR control, correlation
//! and a paired bootstrap for metric differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// One feature or category test, after FDR control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub id: String,
    pub statistic: f64,
    pub p_value: f64,
    pub significant: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

fn check_paired(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "paired samples differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument("need at least two pairs".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite value".into()));
    }
    Ok(())
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample (n - 1) standard deviation; 0 for fewer than two values.
pub fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (v.len() - 1) as f64).sqrt()
}

fn diff_moments(x: &[f64], y: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    (mean(&d), sample_sd(&d))
}

/// Paired Cohen's d: mean(x - y) / sd(x - y). Positive when `x` is higher.
pub fn cohens_d_paired(x: &[f64], y: &[f64]) -> Result<f64> {
    check_paired(x, y)?;
    let (m, sd) = diff_moments(x, y);
    if sd == 0.0 {
        return if m == 0.0 {
            Ok(0.0)
        } else {
            Err(Error::Degenerate("differences have zero variance".into()))
        };
    }
    Ok(m / sd)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: f64,
}

/// Two-sided paired t-test of `x - y`.
pub fn paired_t_test(x: &[f64], y: &[f64]) -> Result<TTest> {
    check_paired(x, y)?;
    let n = x.len() as f64;
    let df = n - 1.0;
    let (m, sd) = diff_moments(x, y);
    if sd == 0.0 {
        return if m == 0.0 {
            Ok(TTest { t: 0.0, p: 1.0, df })
        } else {
            Err(Error::Degenerate("differences have zero variance".into()))
        };
    }
    let t = m / (sd / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    let p = (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0);
    Ok(TTest { t, p, df })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    /// Feature coefficient on the original scale.
    pub coef: f64,
    pub intercept: f64,
    pub p_value: f64,
    /// The classes are (quasi-)separated by the feature; `p_value` is the
    /// likelihood-ratio p at the limit of the diverging fit.
    pub separated: bool,
    pub iterations: usize,
}

const IRLS_TOL: f64 = 1e-8;
const IRLS_MAX_ITER: usize = 100;

fn log_lik_const(k: f64, n: f64) -> f64 {
    // max log-likelihood of k successes in n trials with one free rate
    if k == 0.0 || k == n {
        0.0
    } else {
        let p = k / n;
        k * p.ln() + (n - k) * (1.0 - p).ln()
    }
}

/// Intercept plus one feature logistic regression of `labels` on `x`,
/// fitted by IRLS. Returns the two-sided Wald p of the feature.
pub fn univariate_logistic_p(x: &[f64], labels: &[bool]) -> Result<LogisticFit> {
    if x.len() != labels.len() {
        return Err(Error::InvalidArgument("feature and labels differ in length".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite feature value".into()));
    }
    let n = x.len() as f64;
    let n1 = labels.iter().filter(|&&l| l).count() as f64;
    if n1 == 0.0 || n1 == n {
        return Err(Error::InvalidArgument("both classes must be present".into()));
    }

    let mx = mean(x);
    let sx = sample_sd(x);
    if sx == 0.0 {
        let b0 = (n1 / (n - n1)).ln();
        return Ok(LogisticFit {
            coef: 0.0,
            intercept: b0,
            p_value: 1.0,
            separated: false,
            iterations: 0,
        });
    }
    let z: Vec<f64> = x.iter().map(|v| (v - mx) / sx).collect();

    if let Some(p) = separation_lr_p(&z, labels, n1) {
        let sign = if separated_upwards(&z, labels) { 1.0 } else { -1.0 };
        return Ok(LogisticFit {
            coef: sign * f64::INFINITY,
            intercept: f64::NAN,
            p_value: p,
            separated: true,
            iterations: 0,
        });
    }

    let mut b = [(n1 / (n - n1)).ln(), 0.0];
    for iter in 1..=IRLS_MAX_ITER {
        // accumulate X'WX and X'(y - mu)
        let (mut h00, mut h01, mut h11, mut g0, mut g1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&zi, &yi) in z.iter().zip(labels) {
            let mu = 1.0 / (1.0 + (-(b[0] + b[1] * zi)).exp());
            let w = mu * (1.0 - mu);
            let r = f64::from(u8::from(yi)) - mu;
            h00 += w;
            h01 += w * zi;
            h11 += w * zi * zi;
            g0 += r;
            g1 += r * zi;
        }
        let det = h00 * h11 - h01 * h01;
        if det <= 0.0 || !det.is_finite() {
            return Err(Error::Degenerate("singular information matrix".into()));
        }
        let step = [(h11 * g0 - h01 * g1) / det, (h00 * g1 - h01 * g0) / det];
        b[0] += step[0];
        b[1] += step[1];
        if step[0].abs().max(step[1].abs()) < IRLS_TOL {
            // information at the converged estimate
            let (mut i00, mut i01, mut i11) = (0.0, 0.0, 0.0);
            for &zi in &z {
                let mu = 1.0 / (1.0 + (-(b[0] + b[1] * zi)).exp());
                let w = mu * (1.0 - mu);
                i00 += w;
                i01 += w * zi;
                i11 += w * zi * zi;
            }
            let det = i00 * i11 - i01 * i01;
            let se = (i00 / det).sqrt();
            let wald = b[1] / se;
            let normal = Normal::standard();
            let p = (2.0 * normal.sf(wald.abs())).clamp(0.0, 1.0);
            return Ok(LogisticFit {
                coef: b[1] / sx,
                intercept: b[0] - b[1] * mx / sx,
                p_value: p,
                separated: false,
                iterations: iter,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: IRLS_MAX_ITER,
    })
}

fn class_ranges(z: &[f64], labels: &[bool]) -> ((f64, f64), (f64, f64)) {
    let mut r0 = (f64::INFINITY, f64::NEG_INFINITY);
    let mut r1 = r0;
    for (&v, &l) in z.iter().zip(labels) {
        let r = if l { &mut r1 } else { &mut r0 };
        r.0 = r.0.min(v);
        r.1 = r.1.max(v);
    }
    (r0, r1)
}

fn separated_upwards(z: &[f64], labels: &[bool]) -> bool {
    let (r0, r1) = class_ranges(z, labels);
    r0.1 <= r1.0
}

/// Likelihood-ratio p at the separation limit, or None when the classes
/// overlap. Points tied at the separating value keep a free shared rate.
fn separation_lr_p(z: &[f64], labels: &[bool], n1: f64) -> Option<f64> {
    let (r0, r1) = class_ranges(z, labels);
    let boundary = if r0.1 <= r1.0 {
        r0.1
    } else if r1.1 <= r0.0 {
        r1.1
    } else {
        return None;
    };
    let n = z.len() as f64;
    let (mut tied, mut tied1) = (0.0, 0.0);
    for (&v, &l) in z.iter().zip(labels) {
        if v == boundary {
            tied += 1.0;
            tied1 += f64::from(u8::from(l));
        }
    }
    let ll_limit = log_lik_const(tied1, tied);
    let ll_null = log_lik_const(n1, n);
    let stat = (2.0 * (ll_limit - ll_null)).max(0.0);
    let chi = ChiSquared::new(1.0).expect("df = 1");
    Some(chi.sf(stat).clamp(0.0, 1.0))
}

/// Benjamini-Hochberg step-up: rejects every p at or below the largest
/// `p_(k)` with `p_(k) <= k * alpha / m`.
pub fn bh_fdr(p_values: &[f64], alpha: f64) -> Vec<bool> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut cutoff = None;
    for (rank, &i) in order.iter().enumerate() {
        if p_values[i] <= (rank + 1) as f64 * alpha / m as f64 {
            cutoff = Some(p_values[i]);
        }
    }
    match cutoff {
        Some(c) => p_values.iter().map(|&p| p <= c).collect(),
        None => vec![false; m],
    }
}

/// BH-adjusted p-values (q-values).
pub fn bh_adjust(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut q = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        running = running.min(p_values[i] * m as f64 / (rank + 1) as f64);
        q[i] = running.min(1.0);
    }
    q
}

/// Sample Pearson correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument(
            "pearson_r needs two aligned samples of length >= 2".into(),
        ));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Share of predictions whose sign matches the ±1 truth. Zero predictions
/// go to `tie_class`.
pub fn sign_accuracy(pred: &[f64], truth: &[f64], tie_class: f64) -> f64 {
    let hits = pred
        .iter()
        .zip(truth)
        .filter(|(&p, &t)| {
            let s = if p > 0.0 {
                1.0
            } else if p < 0.0 {
                -1.0
            } else {
                tie_class
            };
            s == t.signum()
        })
        .count();
    hits as f64 / pred.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Observed difference on the full sample.
    pub delta: f64,
    pub p_value: f64,
    pub iterations: usize,
    /// Resamples dropped because the metric was undefined on them.
    pub skipped: usize,
    pub seed: u64,
}

pub const DEFAULT_BOOTSTRAP_ITERATIONS: usize = 10_000;

/// Paired bootstrap over `n` units of a metric difference. `delta` gets the
/// resampled indices and returns None on a degenerate resample.
///
/// The p-value is null-centered and two-sided: the share of resampled
/// differences at least `|observed|` away from the observed difference.
pub fn bootstrap_diff<F>(n: usize, iterations: usize, seed: u64, delta: F) -> Result<BootstrapResult>
where
    F: Fn(&[usize]) -> Option<f64>,
{
    if n < 2 {
        return Err(Error::InvalidArgument("bootstrap needs at least two units".into()));
    }
    if iterations == 0 {
        return Err(Error::InvalidArgument("bootstrap needs iterations >= 1".into()));
    }
    let all: Vec<usize> = (0..n).collect();
    let observed = delta(&all).ok_or_else(|| Error::Degenerate("metric undefined on full sample".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = vec![0usize; n];
    let (mut extreme, mut valid) = (0usize, 0usize);
    for _ in 0..iterations {
        for slot in idx.iter_mut() {
            *slot = rng.random_range(0..n);
        }
        if let Some(d) = delta(&idx) {
            valid += 1;
            if (d - observed).abs() >= observed.abs() {
                extreme += 1;
            }
        }
    }
    if valid == 0 {
        return Err(Error::Degenerate("every bootstrap resample was degenerate".into()));
    }
    Ok(BootstrapResult {
        delta: observed,
        p_value: extreme as f64 / valid as f64,
        iterations,
        skipped: iterations - valid,
        seed,
    })
}

fn pearson_at(x: &[f64], y: &[f64], idx: &[usize]) -> Option<f64> {
    let n = idx.len() as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    for &i in idx {
        sx += x[i];
        sy += y[i];
    }
    let (mx, my) = (sx / n, sy / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &i in idx {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Bootstrap test of r(a, truth) - r(b, truth) with users resampled jointly.
pub fn bootstrap_corr_diff(
    a: &[f64],
    b: &[f64],
    truth: &[f64],
    iterations: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    if a.len() != truth.len() || b.len() != truth.len() {
        return Err(Error::InvalidArgument("bootstrap inputs are not aligned".into()));
    }
    bootstrap_diff(truth.len(), iterations, seed, |idx| {
        Some(pearson_at(a, truth, idx)? - pearson_at(b, truth, idx)?)
    })
}

/// Bootstrap test of a sign-accuracy difference against ±1 truth.
pub fn bootstrap_accuracy_diff(
    a: &[f64],
    b: &[f64],
    truth: &[f64],
    tie_class: f64,
    iterations: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    if a.len() != truth.len() || b.len() != truth.len() {
        return Err(Error::InvalidArgument("bootstrap inputs are not aligned".into()));
    }
    let hit = |p: f64, t: f64| {
        let s = if p > 0.0 {
            1.0
        } else if p < 0.0 {
            -1.0
        } else {
            tie_class
        };
        f64::from(u8::from(s == t.signum()))
    };
    bootstrap_diff(truth.len(), iterations, seed, |idx| {
        let n = idx.len() as f64;
        let d: f64 = idx.iter().map(|&i| hit(a[i], truth[i]) - hit(b[i], truth[i])).sum();
        Some(d / n)
    })
}

/// Median, mean and sample standard deviation of a list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Describe {
    pub n: usize,
    pub median: f64,
    pub mean: f64,
    /// Reported as 0 when undefined (n < 2); see `sd_defined`.
    pub sd: f64,
    pub sd_defined: bool,
}

pub fn describe(values: &[f64]) -> Option<Describe> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    let median = if k % 2 == 1 {
        v[k / 2]
    } else {
        (v[k / 2 - 1] + v[k / 2]) / 2.0
    };
    Some(Describe {
        n: k,
        median,
        mean: mean(&v),
        sd: sample_sd(&v),
        sd_defined: k >= 2,
    })
}
