//! Generative simulation of the hidden random walk and its noisy samples.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::model::{step_unchecked, ModelParams};
use crate::policy::SamplingSchedule;

/// One simulated round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldRound {
    pub t: usize,
    pub x: f64,
    /// Observed values; a fractional remainder contributes one extra draw
    /// with inflated noise.
    pub draws: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub squared_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldTrace {
    pub rounds: Vec<WorldRound>,
}

impl WorldTrace {
    pub fn variances(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.variance).collect()
    }

    pub fn squared_errors(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.squared_error).collect()
    }
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("standard deviation is finite and nonnegative")
}

/// Draws `x_0 ~ N(0, v0)`, lets it drift, samples per the schedule and
/// tracks the posterior mean. The variance track reproduces [`crate::policy::simulate`]
/// exactly because it uses the same recursion.
pub fn simulate_world(
    schedule: &SamplingSchedule,
    params: &ModelParams,
    horizon: usize,
    seed: u64,
) -> Result<WorldTrace> {
    params.validate()?;
    schedule.check_for(params)?;
    ensure(horizon >= 1, || Error::InvalidParameter("horizon must be >= 1".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step_noise = normal(params.rho.sqrt());
    let mut x = normal(params.v0.sqrt()).sample(&mut rng);
    let mut mean = 0.0;
    let mut v = params.v0;
    let mut rounds = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        x += step_noise.sample(&mut rng);
        let s = schedule.at(t);
        let prior = v + params.rho;
        let whole = s.floor() as usize;
        let frac = s - whole as f64;
        let mut draws = Vec::with_capacity(whole + 1);
        let mut weighted = mean / prior;
        let mut precision = 1.0 / prior;
        let noise = normal(params.sigma.sqrt());
        for _ in 0..whole {
            let y = x + noise.sample(&mut rng);
            weighted += y / params.sigma;
            precision += 1.0 / params.sigma;
            draws.push(y);
        }
        if frac > 0.0 {
            let y = x + normal((params.sigma / frac).sqrt()).sample(&mut rng);
            weighted += y * frac / params.sigma;
            precision += frac / params.sigma;
            draws.push(y);
        }
        mean = weighted / precision;
        v = if s > 0.0 { step_unchecked(v, s, params) } else { prior };
        rounds.push(WorldRound { t, x, draws, mean, variance: v, squared_error: (mean - x) * (mean - x) });
    }
    Ok(WorldTrace { rounds })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_samples_grows_linearly() {
        let p = ModelParams::new(0.5, 1.0, 1.0, 1.0).unwrap().with_v0(0.2).unwrap();
        let w = simulate_world(&SamplingSchedule::zeros(5), &p, 5, 1).unwrap();
        for r in &w.rounds {
            assert!((r.variance - (0.2 + 0.5 * r.t as f64)).abs() < 1e-12);
            assert_eq!(r.mean, 0.0);
        }
    }

    #[test]
    fn precise_sample_pins_state() {
        let p = ModelParams::new(1.0, 1e-9, 1.0, 1.0).unwrap();
        let s = SamplingSchedule::new(vec![1.0]).unwrap();
        let w = simulate_world(&s, &p, 1, 4).unwrap();
        assert!(w.rounds[0].squared_error < 1e-6);
    }
}
