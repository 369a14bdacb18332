//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use xplat::detect::materialize;
use xplat::features::{extract_ngrams_docs, tokenize, FeatureVector, Platform};
use xplat::keystroke::{Redactor, RedactorConfig, SanitizedEntry};
use xplat::modeling::{
    cross_domain_matrix, feature_importance, loocv_evaluate, loocv_predictions, nmf_reduce, ridge_fit,
    DomainData, EvalOptions, LoocvMethod, Metric, Quadrant, RidgeOptions,
};
use xplat::stats::{bh_fdr, bootstrap_corr_diff, cohens_d_paired, paired_t_test, DEFAULT_BOOTSTRAP_ITERATIONS};
use xplat::synth::{null_estimates, planted_domains, random_nonnegative, typing_session, PlantedDesign};
use xplat::{redact_string, DetectorSuite};

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn stream(seed: u64) -> (xplat::synth::TypingSession, Vec<SanitizedEntry>) {
    let session = typing_session(seed);
    let config = RedactorConfig {
        keep_snapshots: true,
        audit: true,
        ..Default::default()
    };
    let mut r = Redactor::new(Arc::new(DetectorSuite::standard()), config);
    let mut out = Vec::new();
    for e in session.events.clone() {
        out.extend(r.ingest(e).expect("ingest"));
    }
    out.extend(r.finish());
    (session, out)
}

fn leak_freedom() -> Outcome {
    let start = Instant::now();
    let seeds = 10_000..11_000u64;
    let results: Vec<Result<usize, String>> = seeds
        .into_par_iter()
        .map(|seed| {
            let (session, out) = stream(seed);
            ensure(out.len() == 1, || format!("seed {seed}: {} entries", out.len()))?;
            let entry = &out[0];
            let audit = entry.audit.as_ref().ok_or("no audit")?;
            ensure(audit.len() == session.events.len() - 1, || format!("seed {seed}: audit length"))?;
            let mut retained: Vec<&str> = entry.snapshots.iter().map(String::as_str).collect();
            retained.push(&entry.final_text);
            ensure(retained.len() == audit.len(), || {
                format!("seed {seed}: {} retained strings, {} audited", retained.len(), audit.len())
            })?;
            for (i, a) in audit.iter().enumerate() {
                ensure(a.raw == session.events[i].current_text, || format!("seed {seed}: raw {i}"))?;
                let chars: Vec<char> = a.raw.chars().collect();
                ensure(materialize(&chars, &a.spans).text == retained[i], || {
                    format!("seed {seed}: retained string {i} does not follow its audited spans")
                })?;
                let mask = &session.pii_mask[i];
                if let Some(c) = (0..mask.len())
                    .find(|&c| mask[c] && !a.spans.iter().any(|s| s.start <= c && c < s.end))
                {
                    return Err(format!("seed {seed}: snapshot {i} {:?} exposes char {c}", a.raw));
                }
                for pii in &session.pii_strings {
                    ensure(!retained[i].contains(pii.as_str()), || {
                        format!("seed {seed}: {pii:?} verbatim in {:?}", retained[i])
                    })?;
                }
            }
            Ok(retained.len())
        })
        .collect();
    let strings: usize = results.into_iter().collect::<Result<Vec<_>, _>>()?.iter().sum();
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!("1000 sessions, {strings} retained strings, 0 exposed characters"))
}

fn online_offline() -> Outcome {
    for seed in 0..200u64 {
        let (session, out) = stream(seed);
        let offline = redact_string(&session.final_text).text;
        ensure(out[0].final_text == offline, || {
            format!("seed {seed}: {:?} vs {offline:?}", out[0].final_text)
        })?;
    }
    Ok("200 sessions byte-identical".into())
}

/// Largest k with p_(k) <= k alpha / m, by trying every k.
fn brute_force_bh(p: &[f64], alpha: f64) -> Vec<bool> {
    let m = p.len();
    let mut cutoff = None;
    for k in 1..=m {
        let below = p.iter().filter(|&&q| q <= k as f64 * alpha / m as f64).count();
        if below >= k {
            cutoff = Some(k);
        }
    }
    match cutoff {
        None => vec![false; m],
        Some(k) => p.iter().map(|&q| q <= k as f64 * alpha / m as f64).collect(),
    }
}

fn bh_exact() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut rejections = 0;
    for trial in 0..500 {
        let m = rng.random_range(1..=50);
        let p: Vec<f64> = (0..m)
            .map(|_| match rng.random_range(0..4) {
                0 => rng.random::<f64>() * 0.01,
                1 => (rng.random_range(0..20) as f64) / 400.0,
                _ => rng.random::<f64>(),
            })
            .collect();
        let alpha = [0.05, 0.1, 0.2][trial % 3];
        let got = bh_fdr(&p, alpha);
        let want = brute_force_bh(&p, alpha);
        ensure(got == want, || format!("trial {trial}: {p:?} at {alpha}"))?;
        rejections += got.iter().filter(|&&b| b).count();
    }
    Ok(format!("500 vectors identical, {rejections} rejections total"))
}

fn t_and_d() -> Outcome {
    let fb = [3.0, 6.0, 9.0];
    let sms = [1.0, 2.0, 3.0];
    let t = paired_t_test(&fb, &sms).map_err(|e| e.to_string())?;
    let d = cohens_d_paired(&fb, &sms).map_err(|e| e.to_string())?;
    // mean 4, sd 2, n 3
    let t_hand = 4.0 / (2.0 / 3f64.sqrt());
    ensure((t.t - t_hand).abs() <= 1e-9, || format!("t = {} vs {t_hand}", t.t))?;
    ensure(d == 2.0, || format!("d = {d}"))?;
    let ts = paired_t_test(&sms, &fb).map_err(|e| e.to_string())?;
    let ds = cohens_d_paired(&sms, &fb).map_err(|e| e.to_string())?;
    ensure(ts.t == -t.t && ds == -d && ts.p == t.p, || format!("swap gave t {} d {ds}", ts.t))?;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let n = rng.random_range(2..30);
        let a: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
        let (x, y) = (paired_t_test(&a, &b).unwrap(), paired_t_test(&b, &a).unwrap());
        let (dx, dy) = (cohens_d_paired(&a, &b).unwrap(), cohens_d_paired(&b, &a).unwrap());
        ensure(x.t == -y.t && dx == -dy, || format!("swap asymmetry on n = {n}"))?;
    }
    Ok(format!("t = {:.12}, d = {d}, swaps exact", t.t))
}

fn ridge_loocv() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, p) = (30, 5);
    let x = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() * 4.0 - 2.0);
    let beta = [1.5, -2.0, 0.7, 0.0, 3.1];
    let y: Vec<f64> = (0..n).map(|i| 0.4 + (0..p).map(|j| beta[j] * x[(i, j)]).sum::<f64>()).collect();
    let r = loocv_evaluate(&x, &y, &RidgeOptions::default(), Metric::Pearson, LoocvMethod::Refit)
        .map_err(|e| e.to_string())?
        .metric;
    ensure(r >= 0.999, || format!("r = {r}"))?;

    let mut worst: f64 = 0.0;
    for (alpha, fit_intercept) in [(1.0, true), (0.1, true), (5.0, false)] {
        let opts = RidgeOptions {
            alpha,
            standardize: false,
            fit_intercept,
        };
        let refit = loocv_predictions(&x, &y, &opts, LoocvMethod::Refit).map_err(|e| e.to_string())?;
        let hat = loocv_predictions(&x, &y, &opts, LoocvMethod::HatMatrix).map_err(|e| e.to_string())?;
        for (a, b) in refit.iter().zip(&hat) {
            let (a, b) = (a.ok_or("refit fold skipped")?, b.ok_or("hat fold skipped")?);
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("refit vs hat max gap {worst:e}"))?;
    Ok(format!("r = {r:.6}, refit vs hat max gap {worst:.1e}"))
}

fn bootstrap_calibration() -> Outcome {
    let start = Instant::now();
    let trials = 500u64;
    let iterations = DEFAULT_BOOTSTRAP_ITERATIONS;
    let rejections: usize = (0..trials)
        .into_par_iter()
        .map(|t| {
            let (a, b, truth) = null_estimates(120, 1.0, 50_000 + t);
            let r = bootstrap_corr_diff(&a, &b, &truth, iterations, t).expect("bootstrap");
            usize::from(r.p_value < 0.05)
        })
        .sum();
    let rate = rejections as f64 / trials as f64;
    ensure((0.03..=0.07).contains(&rate), || format!("rejection rate {rate}"))?;

    let (a, b, truth) = null_estimates(120, 1.0, 7);
    let x = bootstrap_corr_diff(&a, &b, &truth, iterations, 99).map_err(|e| e.to_string())?;
    let y = bootstrap_corr_diff(&a, &b, &truth, iterations, 99).map_err(|e| e.to_string())?;
    ensure(
        x.delta.to_bits() == y.delta.to_bits() && x.p_value.to_bits() == y.p_value.to_bits(),
        || "seeded rerun differs".into(),
    )?;
    within(start.elapsed(), Duration::from_secs(300))?;
    Ok(format!(
        "rejection rate {rate:.3} over {trials} trials x {iterations} resamples; seeded rerun bit-identical"
    ))
}

const FILLER: &[&str] = &[
    "the", "and", "to", "we", "it", "was", "so", "just", "good", "time", "now", "back", "day", "see",
    "going", "know", "get", "fun", "work", "home",
];

/// (word, skewed platform, weight sign, expected quadrant)
const PLANTED: &[(&str, Platform, f64, Quadrant)] = &[
    ("sunny", Platform::Facebook, 1.0, Quadrant::A),
    ("pizza", Platform::Sms, 1.0, Quadrant::B),
    ("gloomy", Platform::Facebook, -1.0, Quadrant::C),
    ("traffic", Platform::Sms, -1.0, Quadrant::D),
];

/// One user's documents on `platform`, planted words drawn at rates that
/// depend on the platform skew and on the outcome.
fn planted_docs(platform: Platform, y: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<String>> {
    let rates: Vec<f64> = PLANTED
        .iter()
        .map(|&(_, skew, sign, _)| {
            let base = if skew == platform { 0.04 } else { 0.012 };
            base * (1.0 + 0.7 * sign * y.tanh())
        })
        .collect();
    (0..30)
        .map(|_| {
            let text: Vec<&str> = (0..20)
                .map(|_| {
                    let mut u: f64 = rng.random();
                    for (k, r) in rates.iter().enumerate() {
                        if u < *r {
                            return PLANTED[k].0;
                        }
                        u -= r;
                    }
                    FILLER[rng.random_range(0..FILLER.len())]
                })
                .collect();
            tokenize(&text.join(" "))
        })
        .collect()
}

fn quadrant_fidelity() -> Outcome {
    let mut report = Vec::new();
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
        let n = 60;
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let mut vectors: BTreeMap<Platform, BTreeMap<String, FeatureVector>> = BTreeMap::new();
        for (i, &yi) in y.iter().enumerate() {
            for platform in Platform::BOTH {
                let docs = planted_docs(platform, yi, &mut rng);
                vectors
                    .entry(platform)
                    .or_default()
                    .insert(format!("u{i:02}"), extract_ngrams_docs(&docs, &[1]));
            }
        }
        let mut features: Vec<String> = vectors
            .values()
            .flat_map(|m| m.values().flat_map(|v| v.keys().cloned()))
            .collect();
        features.sort();
        features.dedup();
        let fb = DomainData::from_vectors(Platform::Facebook, &vectors[&Platform::Facebook], &features);
        let sms = DomainData::from_vectors(Platform::Sms, &vectors[&Platform::Sms], &features);
        let model = ridge_fit(&fb.x, &y, &RidgeOptions::default())
            .map_err(|e| e.to_string())?
            .into_lexicon("outcome", &features);
        let entries = feature_importance(&model, &fb.mean_frequencies(), &sms.mean_frequencies());
        for &(word, _, _, expected) in PLANTED {
            let e = entries.iter().find(|e| e.feature == word).ok_or(format!("{word} not weighted"))?;
            let predicted = Quadrant::of(e.weight.signum(), (e.freq_fb - e.freq_sms).signum());
            ensure(e.quadrant == Some(expected) && predicted == Some(expected), || {
                format!(
                    "seed {seed}: {word} w = {:.4} diff = {:.4} -> {:?}, expected {expected:?}",
                    e.weight,
                    e.freq_fb - e.freq_sms,
                    e.quadrant
                )
            })?;
        }
        report.push(seed);
    }
    Ok(format!("4 planted features in their quadrants on {} corpora", report.len()))
}

fn cells(report: &xplat::modeling::OutcomeReport) -> Result<[f64; 4], String> {
    use Platform::*;
    let get = |a, b| report.cell(a, b).metric.ok_or_else(|| format!("cell {a}/{b} undefined"));
    Ok([get(Facebook, Facebook)?, get(Facebook, Sms)?, get(Sms, Sms)?, get(Sms, Facebook)?])
}

fn cross_domain_symmetry() -> Outcome {
    let opts = EvalOptions {
        bootstrap_iterations: 500,
        ..Default::default()
    };
    let mut spread_max: f64 = 0.0;
    for seed in 0..5u64 {
        let design = PlantedDesign {
            identical: true,
            ..Default::default()
        };
        let (fb, sms, y) = planted_domains(&design, seed);
        let r = cross_domain_matrix(&fb, &sms, &[y], &opts).map_err(|e| e.to_string())?;
        let c = cells(&r.outcomes[0])?;
        let spread = c.iter().cloned().fold(f64::MIN, f64::max) - c.iter().cloned().fold(f64::MAX, f64::min);
        ensure(spread <= 1e-9, || format!("seed {seed}: identical cells {c:?}"))?;
        spread_max = spread_max.max(spread);
    }
    let mut margins = Vec::new();
    for (signal, in_domain) in [(Platform::Facebook, 0), (Platform::Sms, 2)] {
        for seed in 0..5u64 {
            let design = PlantedDesign {
                signal_on: Some(signal),
                ..Default::default()
            };
            let (fb, sms, y) = planted_domains(&design, 100 + seed);
            let r = cross_domain_matrix(&fb, &sms, &[y], &opts).map_err(|e| e.to_string())?;
            let c = cells(&r.outcomes[0])?;
            let best_other = (0..4).filter(|&k| k != in_domain).map(|k| c[k]).fold(f64::MIN, f64::max);
            ensure(c[in_domain] > best_other, || format!("{signal} seed {seed}: cells {c:?}"))?;
            margins.push(c[in_domain] - best_other);
        }
    }
    let min_margin = margins.iter().cloned().fold(f64::MAX, f64::min);
    Ok(format!(
        "identical spread {spread_max:.1e}; planted in-domain cell leads by >= {min_margin:.3}"
    ))
}

fn nmf_checks() -> Outcome {
    let mut worst_rise: f64 = 0.0;
    for seed in 0..50u64 {
        let rows = 4 + (seed as usize * 7) % 20;
        let cols = 3 + (seed as usize * 5) % 15;
        let k = 1 + (seed as usize) % rows.min(cols).min(6);
        let v = random_nonnegative(rows, cols, 900 + seed);
        let r = nmf_reduce(&v, k, 200, seed).map_err(|e| e.to_string())?;
        for (it, w) in r.objective.windows(2).enumerate() {
            let rise = (w[1] - w[0]) / w[0].max(f64::MIN_POSITIVE);
            worst_rise = worst_rise.max(rise);
            // allow rounding only
            ensure(w[1] <= w[0] * (1.0 + 1e-12), || {
                format!("seed {seed} ({rows}x{cols}, k {k}) iteration {it}: {} -> {}", w[0], w[1])
            })?;
        }
    }
    let identity = DMatrix::<f64>::identity(2, 2);
    let r = nmf_reduce(&identity, 2, 500, 0).map_err(|e| e.to_string())?;
    ensure(r.error() < 1e-3, || format!("identity error {}", r.error()))?;
    Ok(format!(
        "50 matrices non-increasing (largest relative rise {worst_rise:.1e}); identity error {:.1e}",
        r.error()
    ))
}

fn files_under(root: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let path = e.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, fs::read(&path).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(out)
}

fn pipeline_determinism() -> Outcome {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo/config.toml");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    let mut slowest = Duration::ZERO;
    for name in ["first", "second"] {
        let out = tmp.path().join(name);
        let start = Instant::now();
        let status = Command::new(env!("CARGO_BIN_EXE_xplat"))
            .arg("pipeline")
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        ensure(status.status.success(), || String::from_utf8_lossy(&status.stderr).into_owned())?;
        within(elapsed, Duration::from_secs(60))?;
        slowest = slowest.max(elapsed);
        runs.push(files_under(&out)?);
    }
    let (a, b) = (&runs[0], &runs[1]);
    ensure(a.keys().eq(b.keys()), || "different file sets".into())?;
    for (name, bytes) in a {
        ensure(&b[name] == bytes, || format!("{} differs", name.display()))?;
    }
    ensure(a.len() >= 10, || format!("only {} reports", a.len()))?;
    Ok(format!("{} reports byte-identical, slowest run {slowest:.2?}", a.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 10] = [
        ("redaction leak-freedom", leak_freedom),
        ("online/offline redaction equivalence", online_offline),
        ("BH-FDR matches brute-force step-up", bh_exact),
        ("paired t and Cohen's d hand values", t_and_d),
        ("ridge LOOCV accuracy and hat-matrix shortcut", ridge_loocv),
        ("bootstrap null calibration", bootstrap_calibration),
        ("feature importance quadrants", quadrant_fidelity),
        ("cross-domain matrix symmetry", cross_domain_symmetry),
        ("NMF monotone objective and identity recovery", nmf_checks),
        ("end-to-end pipeline determinism", pipeline_determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({elapsed:.2?}): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({elapsed:.2?}): {detail}", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
