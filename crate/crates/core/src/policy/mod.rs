//! Discrete policies: schedules, simulation, steady states, budget checks and
//! the schedule transformations used by the approximation arguments.

mod render;
mod schedule;
mod transform;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::model::{step_unchecked, ModelParams, VarianceTrace};

pub use render::{render_lazy, render_onoff, LazyPolicy, OnOffPolicy};
pub use schedule::{SamplingSchedule, ScheduleDocument};
pub use transform::{canonicalize_save_spend, rebatch};

/// Relative slack allowed when comparing spend against banked budget, so that
/// schedules spending exactly `B` per round are not rejected for rounding.
pub const BUDGET_TOL: f64 = 1e-9;

/// Slack on the laziness test `ṽ ≥ c`.
pub const LAZY_TOL: f64 = 1e-9;

/// Round update used by simulation. [`Kalman`] is the model's recursion; the
/// trait exists so verification code can be pointed at a different kernel.
pub trait VarianceKernel: Sync {
    /// Posterior variance after a round that starts at `v` and takes `s > 0` samples.
    fn step(&self, v: f64, s: f64, params: &ModelParams) -> f64;
}

/// The model's variance recursion.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kalman;

impl VarianceKernel for Kalman {
    fn step(&self, v: f64, s: f64, params: &ModelParams) -> f64 {
        step_unchecked(v, s, params)
    }
}

/// Runs the schedule's stored rounds from prior variance `v0`.
pub fn simulate(schedule: &SamplingSchedule, params: &ModelParams, v0: f64) -> Result<VarianceTrace> {
    simulate_with(&Kalman, schedule.samples(), params, v0)
}

/// [`simulate`] over raw counts with an explicit kernel.
pub fn simulate_with(
    kernel: &dyn VarianceKernel,
    samples: &[f64],
    params: &ModelParams,
    v0: f64,
) -> Result<VarianceTrace> {
    params.validate()?;
    ensure(v0.is_finite() && v0 >= 0.0, || Error::InvalidParameter(format!("v0 must be >= 0, got {v0}")))?;
    for (i, &s) in samples.iter().enumerate() {
        params.check_samples(s).map_err(|e| Error::InvalidSchedule(format!("round {}: {e}", i + 1)))?;
    }
    Ok(VarianceTrace::build(params, v0, samples, |v, s| kernel.step(v, s, params)))
}

/// End-of-period variance starting from `x`: the map whose fixed point is the
/// periodic steady state.
pub fn period_map(kernel: &dyn VarianceKernel, period: &[f64], params: &ModelParams, x: f64) -> f64 {
    period.iter().fold(x, |v, &s| if s > 0.0 { kernel.step(v, s, params) } else { v + params.rho })
}

/// Settings for [`steady_state`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Starting point of the iteration; `None` starts at `c`.
    pub start: Option<f64>,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        SteadyStateOptions { tol: 1e-12, max_iter: 1_000_000, start: None }
    }
}

/// One-period trace of a periodic schedule at its periodic fixed point.
pub fn steady_state(
    schedule: &SamplingSchedule,
    params: &ModelParams,
    opts: SteadyStateOptions,
) -> Result<VarianceTrace> {
    steady_state_with(&Kalman, schedule, params, opts)
}

/// [`steady_state`] with an explicit kernel.
pub fn steady_state_with(
    kernel: &dyn VarianceKernel,
    schedule: &SamplingSchedule,
    params: &ModelParams,
    opts: SteadyStateOptions,
) -> Result<VarianceTrace> {
    let period = schedule
        .period_samples()
        .ok_or_else(|| Error::InvalidSchedule("steady state needs a periodic schedule".into()))?;
    schedule.check_for(params)?;
    ensure(period.iter().any(|&s| s > 0.0), || {
        Error::NoFixedPoint("a period without samples lets the variance grow without bound".into())
    })?;
    let mut x = opts.start.unwrap_or(params.c);
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let next = period_map(kernel, period, params, x);
        residual = (next - x).abs();
        x = next;
        if residual <= opts.tol {
            return simulate_with(kernel, period, params, x);
        }
    }
    Err(Error::NotConverged { iterations: opts.max_iter, residual })
}

/// Periodic fixed point computed in closed form.
///
/// Each round acts on the variance as a linear-fractional map, so the period
/// map is one as well and its fixed point solves a quadratic. Used by the
/// optimizers where thousands of periods are evaluated.
pub fn periodic_fixed_point(period: &[f64], params: &ModelParams) -> Result<f64> {
    ensure(period.iter().any(|&s| s > 0.0), || {
        Error::NoFixedPoint("a period without samples lets the variance grow without bound".into())
    })?;
    // v -> (a v + b) / (c v + d)
    let mut m = [1.0_f64, 0.0, 0.0, 1.0];
    for &s in period {
        m = mobius_mul(round_matrix(s, params), m);
    }
    Ok(mobius_fixed_point(m))
}

/// Matrix `[[a, b], [c, d]]` of the map `v ↦ (a v + b)/(c v + d)` for one
/// round taking `s` samples.
pub(crate) fn round_matrix(s: f64, params: &ModelParams) -> [f64; 4] {
    let k = s / params.sigma;
    [1.0, params.rho, k, 1.0 + k * params.rho]
}

/// `x ∘ y` (apply `y` first), rescaled to unit max-norm.
pub(crate) fn mobius_mul(x: [f64; 4], y: [f64; 4]) -> [f64; 4] {
    let r =
        [x[0] * y[0] + x[1] * y[2], x[0] * y[1] + x[1] * y[3], x[2] * y[0] + x[3] * y[2], x[2] * y[1] + x[3] * y[3]];
    let scale = r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    [r[0] / scale, r[1] / scale, r[2] / scale, r[3] / scale]
}

/// Non-negative fixed point of a contracting map with `c > 0`.
pub(crate) fn mobius_fixed_point(m: [f64; 4]) -> f64 {
    let [a, b, c, d] = m;
    // c x^2 + (d - a) x - b = 0, positive root, evaluated without cancellation
    let disc = ((d - a) * (d - a) + 4.0 * b * c).sqrt();
    if a - d >= 0.0 {
        (a - d + disc) / (2.0 * c)
    } else {
        2.0 * b / (d - a + disc)
    }
}

/// Long-run average value of a periodic schedule (closed-form fixed point).
pub fn periodic_value(period: &[f64], params: &ModelParams) -> Result<f64> {
    let x = periodic_fixed_point(period, params)?;
    let mut v = x;
    let mut total = 0.0;
    for &s in period {
        v = if s > 0.0 { step_unchecked(v, s, params) } else { v + params.rho };
        total += (params.c - v).max(0.0);
    }
    Ok(total / period.len() as f64)
}

/// Outcome of a budget check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub valid: bool,
    /// First round whose prefix overspends.
    pub first_violation: Option<usize>,
    /// Per-round spend `s + z·1[s > 0]`.
    pub spend: Vec<f64>,
    /// Banked budget `B·t − Σ spend` after each round.
    pub balance: Vec<f64>,
}

/// Checks every prefix of the stored rounds against the accrued budget.
///
/// For a periodic schedule the stored rounds suffice: later periods start
/// with at least as much banked budget as the first.
pub fn validate_budget(schedule: &SamplingSchedule, params: &ModelParams) -> BudgetReport {
    validate_spend(schedule.samples(), params)
}

pub(crate) fn validate_spend(samples: &[f64], params: &ModelParams) -> BudgetReport {
    let mut spend = Vec::with_capacity(samples.len());
    let mut balance = Vec::with_capacity(samples.len());
    let mut first_violation = None;
    let mut spent = 0.0;
    for (i, &s) in samples.iter().enumerate() {
        let t = i + 1;
        let cost = params.cost(s);
        spent += cost;
        let accrued = params.budget * t as f64;
        let bal = accrued - spent;
        if first_violation.is_none() && bal < -BUDGET_TOL * accrued.max(1.0) {
            first_violation = Some(t);
        }
        spend.push(cost);
        balance.push(bal);
    }
    BudgetReport { valid: first_violation.is_none(), first_violation, spend, balance }
}

/// True iff every sampling round starts from innovation variance at least `c`.
pub fn is_lazy(schedule: &SamplingSchedule, params: &ModelParams, v0: f64) -> Result<bool> {
    let trace = simulate(schedule, params, v0)?;
    Ok(trace.records.iter().all(|r| r.s == 0.0 || r.v_pre >= params.c - LAZY_TOL))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(c: f64) -> ModelParams {
        ModelParams::new(1.0, 1.0, c, 1.0).unwrap()
    }

    #[test]
    fn zero_schedule_grows_linearly() {
        let p = unit(0.75);
        let t = simulate(&SamplingSchedule::zeros(5), &p, 0.0).unwrap();
        for r in &t.records {
            assert_eq!(r.v_post, r.t as f64);
        }
    }

    #[test]
    fn steady_state_rejects_all_zero_and_finite() {
        let p = unit(0.75);
        let z = SamplingSchedule::periodic(vec![0.0, 0.0]).unwrap();
        assert!(matches!(steady_state(&z, &p, Default::default()), Err(Error::NoFixedPoint(_))));
        let f = SamplingSchedule::new(vec![1.0]).unwrap();
        assert!(steady_state(&f, &p, Default::default()).is_err());
    }

    #[test]
    fn steady_state_reports_non_convergence() {
        let p = unit(0.75);
        let s = SamplingSchedule::periodic(vec![1.0]).unwrap();
        let opts = SteadyStateOptions { tol: 0.0, max_iter: 3, start: Some(10.0) };
        assert!(matches!(steady_state(&s, &p, opts), Err(Error::NotConverged { .. })));
    }

    #[test]
    fn budget_examples() {
        let p = unit(0.75);
        assert!(validate_budget(&SamplingSchedule::new(vec![1.0; 10]).unwrap(), &p).valid);
        let r = validate_budget(&SamplingSchedule::new(vec![2.0]).unwrap(), &p);
        assert_eq!(r.first_violation, Some(1));
        assert!(validate_budget(&SamplingSchedule::new(vec![0.0, 2.0]).unwrap(), &p).valid);
        let zp = p.with_fixed_cost(0.5).unwrap();
        let r = validate_budget(&SamplingSchedule::new(vec![1.0, 1.0]).unwrap(), &zp);
        assert_eq!(r.first_violation, Some(1));
        assert_eq!(r.spend, vec![1.5, 1.5]);
    }

    #[test]
    fn laziness_examples() {
        let p = unit(0.75);
        assert!(is_lazy(&SamplingSchedule::zeros(4), &p, 1.0).unwrap());
        // v0 = 0 gives innovation 1 >= 0.75, then 0.5 + 1 = 1.5 >= 0.75
        assert!(is_lazy(&SamplingSchedule::new(vec![1.0, 1.0]).unwrap(), &p, 0.0).unwrap());
        let high_c = unit(3.0);
        assert!(!is_lazy(&SamplingSchedule::new(vec![1.0]).unwrap(), &high_c, 0.0).unwrap());
    }
}
