use nalgebra::DMatrix;
use xplat::features::Platform;
use xplat::modeling::{
    cross_domain_matrix, loocv_evaluate, loocv_predictions, nmf_reduce, EvalOptions, LoocvMethod,
    Metric, RidgeOptions,
};
use xplat::synth::{planted_domains, random_nonnegative, PlantedDesign};

fn unstandardized(alpha: f64, fit_intercept: bool) -> RidgeOptions {
    RidgeOptions {
        alpha,
        standardize: false,
        fit_intercept,
    }
}

#[test]
fn hat_shortcut_matches_refits() {
    for (seed, n, p) in [(1u64, 12usize, 3usize), (2, 30, 8), (3, 50, 5), (4, 10, 25), (5, 40, 60)] {
        let x = random_nonnegative(n, p, seed);
        let y: Vec<f64> = (0..n).map(|i| x.row(i).sum() + (i as f64 * 0.9).sin()).collect();
        for intercept in [true, false] {
            let opts = unstandardized(0.7, intercept);
            let refit = loocv_predictions(&x, &y, &opts, LoocvMethod::Refit).unwrap();
            let hat = loocv_predictions(&x, &y, &opts, LoocvMethod::HatMatrix).unwrap();
            for (a, b) in refit.iter().zip(&hat) {
                let (a, b) = (a.unwrap(), b.unwrap());
                assert!((a - b).abs() < 1e-9, "n={n} p={p} intercept={intercept}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn loocv_noise_band() {
    let design = PlantedDesign {
        users: 120,
        features: 5,
        signal_on: None,
        ..Default::default()
    };
    let mut inside = 0;
    for seed in 0..20 {
        let (fb, _, y) = planted_domains(&design, seed);
        let r = loocv_evaluate(&fb.x, &y.values, &RidgeOptions::default(), Metric::Pearson, LoocvMethod::Refit)
            .unwrap();
        if r.metric.abs() < 0.25 {
            inside += 1;
        }
    }
    assert!(inside >= 18, "{inside}/20 inside the null band");
}

#[test]
fn nmf_objective_monotone() {
    for seed in 0..20 {
        let v = random_nonnegative(8 + (seed as usize % 5), 6 + (seed as usize % 7), seed);
        let r = nmf_reduce(&v, 3, 200, seed).unwrap();
        for w in r.objective.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15, "seed {seed}: {} -> {}", w[0], w[1]);
        }
    }
}

fn cells(report: &xplat::modeling::OutcomeReport) -> [f64; 4] {
    use Platform::*;
    [
        report.cell(Facebook, Facebook).metric.unwrap(),
        report.cell(Facebook, Sms).metric.unwrap(),
        report.cell(Sms, Sms).metric.unwrap(),
        report.cell(Sms, Facebook).metric.unwrap(),
    ]
}

fn quick() -> EvalOptions {
    EvalOptions {
        bootstrap_iterations: 1000,
        seed: 3,
        ..Default::default()
    }
}

#[test]
fn identical_platforms_give_equal_cells() {
    let design = PlantedDesign {
        identical: true,
        ..Default::default()
    };
    let (fb, sms, y) = planted_domains(&design, 8);
    let report = cross_domain_matrix(&fb, &sms, &[y], &quick()).unwrap();
    let c = cells(&report.outcomes[0]);
    for v in &c[1..] {
        assert!((v - c[0]).abs() < 1e-9, "{c:?}");
    }
}

#[test]
fn planted_signal_in_domain_cell_wins() {
    let (fb, sms, y) = planted_domains(&PlantedDesign::default(), 21);
    let report = cross_domain_matrix(&fb, &sms, &[y], &quick()).unwrap();
    let c = cells(&report.outcomes[0]);
    assert!(c[1..].iter().all(|v| c[0] > *v), "{c:?}");
    assert!(c[0] > 0.8);
}

#[test]
fn swapping_platforms_transposes_cells() {
    let (fb, sms, y) = planted_domains(&PlantedDesign::default(), 5);
    let a = cells(&cross_domain_matrix(&fb, &sms, std::slice::from_ref(&y), &quick()).unwrap().outcomes[0]);
    let (mut fb2, mut sms2) = (sms.clone(), fb.clone());
    fb2.platform = Platform::Facebook;
    sms2.platform = Platform::Sms;
    let b = cells(&cross_domain_matrix(&fb2, &sms2, &[y], &quick()).unwrap().outcomes[0]);
    // FB/FB <-> SMS/SMS and FB/SMS <-> SMS/FB
    assert_eq!([a[0], a[1], a[2], a[3]], [b[2], b[3], b[0], b[1]]);
}

#[test]
fn user_mismatch_is_reported() {
    let (fb, mut sms, y) = planted_domains(&PlantedDesign::default(), 1);
    sms.users[0] = "stranger".into();
    let err = cross_domain_matrix(&fb, &sms, &[y], &quick()).unwrap_err();
    match err {
        xplat::Error::UserMismatch(ids) => {
            assert!(ids.contains(&"stranger".to_string()));
            assert!(ids.contains(&"u000".to_string()));
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn identity_nmf_reaches_tolerance() {
    let r = nmf_reduce(&DMatrix::identity(2, 2), 2, 500, 0).unwrap();
    assert!(r.error() < 1e-3);
}
