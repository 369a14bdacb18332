use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use xplat::stats::bootstrap_corr_diff;
use xplat::synth::null_estimates;

#[test]
fn null_rejection_rate_near_nominal() {
    let trials = 300;
    let rejected: usize = (0..trials as u64)
        .into_par_iter()
        .map(|s| {
            let (a, b, t) = null_estimates(120, 1.0, 1000 + s);
            let r = bootstrap_corr_diff(&a, &b, &t, 2000, s).unwrap();
            usize::from(r.p_value < 0.05)
        })
        .sum();
    let rate = rejected as f64 / trials as f64;
    eprintln!("null rejection rate {rate:.3}");
    assert!((0.02..=0.08).contains(&rate), "rate {rate}");
}

#[test]
fn real_difference_is_detected() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let z = Normal::new(0.0, 1.0).unwrap();
    let truth: Vec<f64> = (0..150).map(|_| z.sample(&mut rng)).collect();
    let good: Vec<f64> = truth.iter().map(|t| t + 0.3 * z.sample(&mut rng)).collect();
    let poor: Vec<f64> = truth.iter().map(|t| t + 2.0 * z.sample(&mut rng)).collect();
    let r = bootstrap_corr_diff(&good, &poor, &truth, 2000, 11).unwrap();
    assert!(r.delta > 0.3);
    assert!(r.p_value < 0.01);
}
