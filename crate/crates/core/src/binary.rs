//! Two-state hidden Markov extension: the state flips with probability `eps`
//! each round, each sample reports it correctly with probability `½ + δ`, and
//! a threshold policy keeps sampling while the posterior is inside
//! `[θ, 1 − θ]`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

pub const DEFAULT_SAMPLE_CAP: usize = 10_000;
pub const DEFAULT_THETA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryModel {
    pub eps: f64,
    pub delta_sig: f64,
    #[serde(rename = "B")]
    pub budget: f64,
}

impl BinaryModel {
    pub fn new(eps: f64, delta_sig: f64, budget: f64) -> Result<Self> {
        let m = BinaryModel { eps, delta_sig, budget };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.eps > 0.0 && self.eps < 0.5, || {
            Error::InvalidParameter(format!("eps must lie in (0, 1/2), got {}", self.eps))
        })?;
        ensure(self.delta_sig > 0.0 && self.delta_sig < 0.5, || {
            Error::InvalidParameter(format!("delta_sig must lie in (0, 1/2), got {}", self.delta_sig))
        })?;
        ensure(self.budget.is_finite() && self.budget >= 0.0, || {
            Error::InvalidParameter(format!("B must be >= 0, got {}", self.budget))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub theta: f64,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn default_cap() -> usize {
    DEFAULT_SAMPLE_CAP
}

impl ThresholdPolicy {
    pub fn new(theta: f64) -> Result<Self> {
        let p = ThresholdPolicy { theta, cap: DEFAULT_SAMPLE_CAP };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.theta > 0.0 && self.theta < 0.5, || {
            Error::InvalidParameter(format!("theta must lie in (0, 1/2), got {}", self.theta))
        })
    }

    /// Whether the policy takes another sample at posterior `p`.
    pub fn samples_at(&self, p: f64) -> bool {
        p >= self.theta && p <= 1.0 - self.theta
    }
}

/// One-round prior update under the flip process.
pub fn drift(p: f64, eps: f64) -> f64 {
    p * (1.0 - eps) + (1.0 - p) * eps
}

/// Posterior after observing `bit` with accuracy `½ + delta_sig`.
pub fn bayes_update(p: f64, bit: bool, delta_sig: f64) -> f64 {
    let (hi, lo) = (0.5 + delta_sig, 0.5 - delta_sig);
    let (l1, l0) = if bit { (hi, lo) } else { (lo, hi) };
    let num = p * l1;
    let den = num + (1.0 - p) * l0;
    if den == 0.0 {
        p
    } else {
        num / den
    }
}

/// Binary entropy in bits.
pub fn posterior_entropy(p: f64) -> f64 {
    let h = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.log2() };
    h(p) + h(1.0 - p)
}

/// Guess `1` iff the posterior favours it; ties go to `1`.
pub fn guess(p: f64) -> bool {
    p >= 0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryRound {
    pub t: usize,
    pub x: bool,
    pub p_before: f64,
    pub samples: usize,
    pub p_after: f64,
    pub guess: bool,
    pub correct: bool,
    pub cap_hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySummary {
    pub rounds: usize,
    pub accuracy: f64,
    pub mean_samples: f64,
    pub median_samples: f64,
    pub histogram: BTreeMap<usize, usize>,
    pub cap_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryTrace {
    pub records: Vec<BinaryRound>,
    pub summary: BinarySummary,
}

/// Options for [`run_threshold_with`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunOptions {
    /// Hidden state of round 1; `None` draws it uniformly.
    pub initial_state: Option<bool>,
    /// Enforce the budget ex post: idle for `⌈√T⌉` rounds, then sample only
    /// while a whole sample is banked.
    pub ex_post_budget: bool,
}

/// Random stream of round `t`, so runs with different thresholds see the
/// same hidden path and the same per-round uniforms.
fn round_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    rng
}

pub fn run_threshold(model: &BinaryModel, policy: &ThresholdPolicy, horizon: usize, seed: u64) -> Result<BinaryTrace> {
    run_threshold_with(model, policy, horizon, seed, RunOptions::default())
}

pub fn run_threshold_with(
    model: &BinaryModel,
    policy: &ThresholdPolicy,
    horizon: usize,
    seed: u64,
    opts: RunOptions,
) -> Result<BinaryTrace> {
    model.validate()?;
    policy.validate()?;
    ensure(horizon >= 1, || Error::InvalidParameter("horizon must be >= 1".into()))?;
    let mut records = Vec::with_capacity(horizon);
    let delay = (horizon as f64).sqrt().ceil() as usize;
    let mut bank = 0.0;
    let mut x = false;
    let mut p = 0.5;
    for t in 1..=horizon {
        let mut rng = round_rng(seed, t);
        let u: f64 = rng.random();
        if t == 1 {
            x = opts.initial_state.unwrap_or(u < 0.5);
        } else if u < model.eps {
            x = !x;
        }
        let p_before = if t == 1 { p } else { drift(p, model.eps) };
        p = p_before;
        let mut samples = 0usize;
        let mut cap = policy.cap;
        if opts.ex_post_budget {
            bank += model.budget;
            cap = if t <= delay { 0 } else { cap.min(bank.floor() as usize) };
        }
        while samples < cap && policy.samples_at(p) {
            let correct: bool = rng.random::<f64>() < 0.5 + model.delta_sig;
            let bit = if correct { x } else { !x };
            p = bayes_update(p, bit, model.delta_sig);
            samples += 1;
        }
        if opts.ex_post_budget {
            bank -= samples as f64;
        }
        let cap_hit = samples == policy.cap && policy.samples_at(p);
        let g = guess(p);
        records.push(BinaryRound { t, x, p_before, samples, p_after: p, guess: g, correct: g == x, cap_hit });
    }
    let summary = summarize(&records);
    Ok(BinaryTrace { records, summary })
}

fn summarize(records: &[BinaryRound]) -> BinarySummary {
    let n = records.len();
    let mut histogram = BTreeMap::new();
    for r in records {
        *histogram.entry(r.samples).or_insert(0) += 1;
    }
    let mut counts: Vec<usize> = records.iter().map(|r| r.samples).collect();
    counts.sort_unstable();
    let median = if n % 2 == 1 { counts[n / 2] as f64 } else { 0.5 * (counts[n / 2 - 1] + counts[n / 2]) as f64 };
    BinarySummary {
        rounds: n,
        accuracy: records.iter().filter(|r| r.correct).count() as f64 / n as f64,
        mean_samples: counts.iter().sum::<usize>() as f64 / n as f64,
        median_samples: median,
        histogram,
        cap_hits: records.iter().filter(|r| r.cap_hit).count(),
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Long-run sampling rate of a threshold policy, with a batch-means standard error.
pub fn expected_samples_per_round(model: &BinaryModel, theta: f64, mc_rounds: usize, seed: u64) -> Result<Estimate> {
    let policy = ThresholdPolicy::new(theta)?;
    ensure(mc_rounds >= 100, || Error::InvalidParameter("mc_rounds must be >= 100".into()))?;
    let trace = run_threshold(model, &policy, mc_rounds, seed)?;
    let counts: Vec<f64> = trace.records.iter().map(|r| r.samples as f64).collect();
    Ok(batch_means(&counts, 50))
}

pub(crate) fn batch_means(xs: &[f64], batches: usize) -> Estimate {
    let size = xs.len() / batches;
    let means: Vec<f64> =
        (0..batches).map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let bm = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - bm) * (m - bm)).sum::<f64>() / (batches - 1) as f64;
    Estimate { mean, stderr: (var / batches as f64).sqrt() }
}

/// Mean samples per round over `horizon` rounds from the uniform prior,
/// estimated from `reps` independent runs.
pub fn mc_samples_per_round(
    model: &BinaryModel,
    theta: f64,
    horizon: usize,
    reps: usize,
    seed: u64,
) -> Result<Estimate> {
    let policy = ThresholdPolicy::new(theta)?;
    ensure(reps >= 2, || Error::InvalidParameter("need at least two replications".into()))?;
    let mut per_run = Vec::with_capacity(reps);
    for r in 0..reps {
        let tr = run_threshold(model, &policy, horizon, seed.wrapping_mul(1_000_003).wrapping_add(r as u64))?;
        per_run.push(tr.summary.mean_samples);
    }
    let mean = per_run.iter().sum::<f64>() / reps as f64;
    let var = per_run.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (reps - 1) as f64;
    Ok(Estimate { mean, stderr: (var / reps as f64).sqrt() })
}

/// Expected samples per round over a short horizon, computed exactly.
///
/// Hidden paths are enumerated. Within a round the log-odds move on a lattice
/// of step `ln((½+δ)/(½−δ))` until they leave the band, which is a gambler's
/// ruin chain solved in closed form for its expected length and exit side.
/// The sample cap is ignored.
pub fn exact_samples_per_round(model: &BinaryModel, theta: f64, horizon: usize) -> Result<f64> {
    model.validate()?;
    ThresholdPolicy::new(theta)?;
    ensure((1..=10).contains(&horizon), || {
        Error::InvalidParameter("exact enumeration supports horizons 1..=10".into())
    })?;
    let step = ((0.5 + model.delta_sig) / (0.5 - model.delta_sig)).ln();
    let edge = ((1.0 - theta) / theta).ln();
    // (probability, hidden state, posterior log-odds)
    let mut states: Vec<(f64, bool, f64)> = vec![(0.5, false, 0.0), (0.5, true, 0.0)];
    let mut total = 0.0;
    for t in 1..=horizon {
        let mut next = Vec::with_capacity(states.len() * 4);
        for &(w, x, lo) in &states {
            let branches: Vec<(f64, bool)> =
                if t == 1 { vec![(1.0, x)] } else { vec![(1.0 - model.eps, x), (model.eps, !x)] };
            let lo = if t == 1 { lo } else { logit(drift(sigmoid(lo), model.eps)) };
            for (pw, xs) in branches {
                let weight = w * pw;
                if weight == 0.0 {
                    continue;
                }
                let up = if xs { 0.5 + model.delta_sig } else { 0.5 - model.delta_sig };
                let ruin = ruin(lo, step, edge, up);
                total += weight * ruin.expected_steps;
                for (pe, end) in [(ruin.p_top, ruin.top), (1.0 - ruin.p_top, ruin.bottom)] {
                    if pe > 0.0 {
                        next.push((weight * pe, xs, end));
                    }
                }
            }
        }
        states = next;
    }
    Ok(total / horizon as f64)
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

struct Ruin {
    expected_steps: f64,
    p_top: f64,
    top: f64,
    bottom: f64,
}

/// Walk from `start` by `±step` (up with probability `up`) while inside `[−edge, edge]`.
fn ruin(start: f64, step: f64, edge: f64, up: f64) -> Ruin {
    if start.abs() > edge {
        return Ruin { expected_steps: 0.0, p_top: if start > 0.0 { 1.0 } else { 0.0 }, top: start, bottom: start };
    }
    // interior positions start + j·step for j in lo..=hi
    let lo = -(((start + edge) / step).floor() as i64);
    let hi = ((edge - start) / step).floor() as i64;
    let n = (hi - lo + 1) as usize;
    let q = 1.0 - up;
    // solve E_j = 1 + up E_{j+1} + q E_{j-1}, A_j = up A_{j+1} + q A_{j-1}
    let solve = |rhs: &dyn Fn(usize) -> f64, top_boundary: f64| -> Vec<f64> {
        // tridiagonal: -q x_{j-1} + x_j - up x_{j+1} = r_j
        let mut cp = vec![0.0; n];
        let mut dp = vec![0.0; n];
        for j in 0..n {
            let mut r = rhs(j);
            if j == n - 1 {
                r += up * top_boundary;
            }
            let a = if j == 0 { 0.0 } else { -q };
            let denom = 1.0 - a * if j == 0 { 0.0 } else { cp[j - 1] };
            cp[j] = -up / denom;
            dp[j] = (r - a * if j == 0 { 0.0 } else { dp[j - 1] }) / denom;
        }
        let mut x = vec![0.0; n];
        for j in (0..n).rev() {
            x[j] = dp[j] - cp[j] * if j + 1 < n { x[j + 1] } else { 0.0 };
        }
        x
    };
    let e = solve(&|_| 1.0, 0.0);
    let a = solve(&|_| 0.0, 1.0);
    let idx = (-lo) as usize;
    Ruin {
        expected_steps: e[idx],
        p_top: a[idx],
        top: start + (hi + 1) as f64 * step,
        bottom: start + (lo - 1) as f64 * step,
    }
}

/// Result of [`tune_theta`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedPolicy {
    pub policy: ThresholdPolicy,
    pub rate: Estimate,
    pub iterations: usize,
    pub notes: Vec<String>,
}

/// Settings for [`tune_theta_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneOptions {
    pub mc_rounds: usize,
    pub theta_floor: f64,
    pub max_iter: usize,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions { mc_rounds: 100_000, theta_floor: DEFAULT_THETA_FLOOR, max_iter: 60 }
    }
}

/// Lowest threshold whose sampling rate stays within the budget, by bisection
/// with common random numbers.
pub fn tune_theta(model: &BinaryModel, budget: f64, tol: f64, seed: u64) -> Result<TunedPolicy> {
    tune_theta_with(model, budget, tol, seed, TuneOptions::default())
}

pub fn tune_theta_with(
    model: &BinaryModel,
    budget: f64,
    tol: f64,
    seed: u64,
    opts: TuneOptions,
) -> Result<TunedPolicy> {
    model.validate()?;
    ensure(budget > 0.0, || Error::InvalidParameter("B must be > 0".into()))?;
    ensure(tol > 0.0, || Error::InvalidParameter("tol must be > 0".into()))?;
    let rate = |theta: f64| expected_samples_per_round(model, theta, opts.mc_rounds, seed);
    let floor = opts.theta_floor;
    let at_floor = rate(floor)?;
    if at_floor.mean <= budget {
        return Ok(TunedPolicy {
            policy: ThresholdPolicy::new(floor)?,
            rate: at_floor,
            iterations: 1,
            notes: vec![format!("budget {budget} exceeds the rate {:.4} at the threshold floor", at_floor.mean)],
        });
    }
    let (mut lo, mut hi) = (floor, 0.5);
    let mut best: Option<(f64, Estimate)> = None;
    let mut iterations = 1;
    for _ in 0..opts.max_iter {
        let mid = 0.5 * (lo + hi);
        let r = rate(mid)?;
        iterations += 1;
        if r.mean > budget {
            lo = mid;
        } else {
            hi = mid;
            best = Some((mid, r));
            if r.mean >= budget - tol {
                break;
            }
        }
    }
    let (theta, est) = match best {
        Some(b) => b,
        None => (hi, rate(hi.min(0.5 - 1e-12))?),
    };
    let mut notes = Vec::new();
    if est.mean < budget - tol {
        notes.push(format!("rate {:.4} could not be brought within {tol} of the budget", est.mean));
    }
    Ok(TunedPolicy { policy: ThresholdPolicy::new(theta.min(0.5 - 1e-12))?, rate: est, iterations, notes })
}

/// Exact forward filter by enumerating hidden paths: `P(x_t = 1 | signals)`
/// after each round. `signals[t]` lists round `t + 1`'s observed bits.
pub fn enumerate_filter(model: &BinaryModel, signals: &[Vec<bool>]) -> Vec<f64> {
    let h = signals.len();
    let (hi, lo) = (0.5 + model.delta_sig, 0.5 - model.delta_sig);
    let mut out = Vec::with_capacity(h);
    for t in 1..=h {
        let mut num = 0.0;
        let mut den = 0.0;
        for path in 0u32..(1 << t) {
            let state = |i: usize| (path >> i) & 1 == 1;
            let mut w = 0.5;
            for (i, sig) in signals.iter().enumerate().take(t) {
                if i > 0 {
                    w *= if state(i) == state(i - 1) { 1.0 - model.eps } else { model.eps };
                }
                for &b in sig {
                    w *= if b == state(i) { hi } else { lo };
                }
            }
            den += w;
            if state(t - 1) {
                num += w;
            }
        }
        out.push(num / den);
    }
    out
}

/// The same posteriors by iterating [`drift`] and [`bayes_update`].
pub fn recursive_filter(model: &BinaryModel, signals: &[Vec<bool>]) -> Vec<f64> {
    let mut p = 0.5;
    let mut out = Vec::with_capacity(signals.len());
    for (i, round) in signals.iter().enumerate() {
        if i > 0 {
            p = drift(p, model.eps);
        }
        for &b in round {
            p = bayes_update(p, b, model.delta_sig);
        }
        out.push(p);
    }
    out
}
