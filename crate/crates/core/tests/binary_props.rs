use driftsample::binary::{
    enumerate_filter, exact_samples_per_round, expected_samples_per_round, guess, mc_samples_per_round,
    posterior_entropy, recursive_filter, run_threshold, run_threshold_with, tune_theta_with, BinaryModel, RunOptions,
    ThresholdPolicy, TuneOptions,
};
use proptest::prelude::*;

fn model() -> BinaryModel {
    BinaryModel::new(0.05, 0.2, 2.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filter_matches_enumeration(
        eps in 0.01f64..0.49,
        delta in 0.01f64..0.49,
        signals in prop::collection::vec(prop::collection::vec(any::<bool>(), 0..4), 1..=8),
    ) {
        let m = BinaryModel::new(eps, delta, 1.0).unwrap();
        let a = enumerate_filter(&m, &signals);
        let b = recursive_filter(&m, &signals);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn entropy_decreases_away_from_half(a in 0.0f64..0.5, b in 0.0f64..0.5) {
        prop_assume!((a - b).abs() > 1e-9);
        let (near, far) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(posterior_entropy(0.5 + near) > posterior_entropy(0.5 + far));
        prop_assert!((posterior_entropy(0.5 - a) - posterior_entropy(0.5 + a)).abs() < 1e-12);
    }
}

#[test]
fn entropy_endpoints_and_ties() {
    assert_eq!(posterior_entropy(0.5), 1.0);
    assert_eq!(posterior_entropy(0.0), 0.0);
    assert_eq!(posterior_entropy(1.0), 0.0);
    assert!(guess(0.5));
    assert!(!guess(0.499));
}

#[test]
fn sampling_band() {
    let pol = ThresholdPolicy::new(0.1).unwrap();
    assert!(pol.samples_at(0.1) && pol.samples_at(0.9) && pol.samples_at(0.5));
    assert!(!pol.samples_at(0.09) && !pol.samples_at(0.91));
    let tr = run_threshold(&model(), &pol, 2000, 5).unwrap();
    for r in &tr.records {
        assert!(!pol.samples_at(r.p_after) || r.cap_hit);
        assert_eq!(r.guess, r.p_after >= 0.5);
    }
}

#[test]
fn relabeling_is_symmetric() {
    let pol = ThresholdPolicy::new(0.08).unwrap();
    let run = |x| {
        run_threshold_with(&model(), &pol, 20_000, 11, RunOptions { initial_state: Some(x), ..Default::default() })
            .unwrap()
    };
    let (a, b) = (run(false), run(true));
    let mismatched = a.records.iter().zip(&b.records).filter(|(r, s)| r.samples != s.samples || r.correct != s.correct);
    assert_eq!(mismatched.count(), 0);
    for (r, s) in a.records.iter().zip(&b.records) {
        assert_ne!(r.x, s.x);
        assert!((r.p_after - (1.0 - s.p_after)).abs() < 1e-9);
    }
    assert_eq!(a.summary.histogram, b.summary.histogram);
}

#[test]
fn argmax_guess_beats_fixed_guess() {
    let n = 50_000;
    let tr = run_threshold(&model(), &ThresholdPolicy::new(0.2).unwrap(), n, 9).unwrap();
    let acc = tr.summary.accuracy;
    for fixed in [false, true] {
        let hits: Vec<f64> =
            tr.records.iter().map(|r| (r.correct as u8 as f64) - ((r.x == fixed) as u8 as f64)).collect();
        let mean = hits.iter().sum::<f64>() / n as f64;
        // rounds are strongly correlated; use generous batch-free bound via slow mixing
        let var = hits.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt() * (1.0 / model().eps).sqrt();
        assert!(mean >= -3.0 * se, "argmax {acc} vs fixed {fixed}: diff {mean}");
    }
}

#[test]
fn exact_expectation_matches_monte_carlo() {
    for theta in [0.1, 0.25, 0.4] {
        let exact = exact_samples_per_round(&model(), theta, 8).unwrap();
        let mc = mc_samples_per_round(&model(), theta, 8, 20_000, 17).unwrap();
        assert!(
            (exact - mc.mean).abs() <= 3.0 * mc.stderr + 1e-12,
            "theta {theta}: exact {exact} mc {} ± {}",
            mc.mean,
            mc.stderr
        );
    }
}

#[test]
fn rate_nonincreasing_in_theta() {
    let grid = [0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.499];
    let est: Vec<_> = grid.iter().map(|&t| expected_samples_per_round(&model(), t, 50_000, 23).unwrap()).collect();
    for w in est.windows(2) {
        assert!(w[1].mean <= w[0].mean + 3.0 * (w[0].stderr + w[1].stderr), "{w:?}");
    }
    assert!(est.last().unwrap().mean < 0.2);
}

#[test]
fn tuning_meets_budget() {
    let opts = TuneOptions { mc_rounds: 20_000, ..Default::default() };
    let tuned = tune_theta_with(&model(), 2.0, 0.1, 4, opts).unwrap();
    assert!(tuned.rate.mean <= 2.0 && tuned.rate.mean >= 1.9, "{tuned:?}");
    let est = expected_samples_per_round(&model(), tuned.policy.theta, 20_000, 4).unwrap();
    assert_eq!(est, tuned.rate);
}
