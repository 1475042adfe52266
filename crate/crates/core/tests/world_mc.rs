use driftsample::policy::{simulate, SamplingSchedule};
use driftsample::world::simulate_world;
use driftsample::ModelParams;

#[test]
fn posterior_mean_error_matches_variance() {
    let p = ModelParams::new(0.7, 1.3, 1.0, 1.0).unwrap().with_v0(0.5).unwrap();
    let sched = SamplingSchedule::new(vec![1.0, 0.0, 2.5, 0.5, 0.0, 3.0]).unwrap();
    let analytic = simulate(&sched, &p, p.v0).unwrap().posteriors();
    let reps = 20_000;
    let mut sums = vec![0.0; analytic.len()];
    let mut sq = vec![0.0; analytic.len()];
    for seed in 0..reps {
        let w = simulate_world(&sched, &p, analytic.len(), seed).unwrap();
        assert_eq!(w.variances(), analytic);
        for (i, e) in w.squared_errors().into_iter().enumerate() {
            sums[i] += e;
            sq[i] += e * e;
        }
    }
    let n = reps as f64;
    for (i, v) in analytic.iter().enumerate() {
        let mean = sums[i] / n;
        let se = ((sq[i] / n - mean * mean) / n).sqrt();
        // 4 standard errors across six rounds
        assert!((mean - v).abs() <= 4.0 * se, "round {}: mse {mean} vs {v} (se {se})", i + 1);
    }
}

#[test]
fn world_is_deterministic_per_seed() {
    let p = ModelParams::new(1.0, 1.0, 0.75, 1.0).unwrap();
    let sched = SamplingSchedule::periodic(vec![0.0, 2.0]).unwrap();
    assert_eq!(simulate_world(&sched, &p, 50, 8).unwrap(), simulate_world(&sched, &p, 50, 8).unwrap());
    assert_ne!(simulate_world(&sched, &p, 50, 8).unwrap(), simulate_world(&sched, &p, 50, 9).unwrap());
}
