use serde::{Deserialize, Serialize};

use super::schedule::SamplingSchedule;
use super::{BUDGET_TOL, LAZY_TOL};
use crate::error::{ensure, Error, Result};
use crate::model::{samples_to_reach, ModelParams};

/// Period-`period` policy: an off interval, then sampling at `rate` per round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnOffPolicy {
    pub period: usize,
    pub rate: f64,
}

impl OnOffPolicy {
    pub fn new(period: usize, rate: f64) -> Result<Self> {
        ensure(period >= 1, || Error::InvalidParameter("on-off period must be >= 1".into()))?;
        ensure(rate.is_finite() && rate > 0.0, || {
            Error::InvalidParameter(format!("on-off rate must be > 0, got {rate}"))
        })?;
        Ok(OnOffPolicy { period, rate })
    }

    /// On-fraction `min(B/S, 1)`.
    pub fn alpha(&self, params: &ModelParams) -> f64 {
        (params.budget / self.rate).min(1.0)
    }

    /// Number of leading zero rounds in each period.
    pub fn off_len(&self, params: &ModelParams) -> usize {
        let t = self.period;
        let raw = (1.0 - self.alpha(params)) * t as f64;
        let off = (raw - 1e-9).ceil().max(0.0) as usize;
        off.min(t - 1)
    }

    /// Sample counts of one period.
    ///
    /// When the rate exceeds the budget, the first on-round absorbs whatever
    /// the remaining on-rounds leave of `B·T`, so every period spends exactly
    /// its accrued budget. A rate at or below the budget samples at that rate
    /// every round.
    pub fn period_samples(&self, params: &ModelParams) -> Result<Vec<f64>> {
        let (off, first) = self.layout(params)?;
        let mut out = vec![0.0; self.period];
        out[off] = first;
        for s in out.iter_mut().skip(off + 1) {
            *s = self.rate;
        }
        Ok(out)
    }

    /// Off-length and first on-round count; the remaining on-rounds sample `rate`.
    pub(crate) fn layout(&self, params: &ModelParams) -> Result<(usize, f64)> {
        let t = self.period;
        if !params.fractional_samples {
            ensure(self.rate.fract() == 0.0, || {
                Error::InvalidParameter(format!("integer mode needs a whole on-rate, got {}", self.rate))
            })?;
        }
        if self.rate <= params.budget {
            return Ok((0, self.rate));
        }
        let off = self.off_len(params);
        let on = t - off;
        let mut first = params.budget * t as f64 - (on - 1) as f64 * self.rate;
        if !params.fractional_samples {
            first = (first + 1e-9).floor();
        }
        Ok((off, first))
    }

    /// Periodic schedule for this policy.
    pub fn schedule(&self, params: &ModelParams) -> Result<SamplingSchedule> {
        SamplingSchedule::periodic(self.period_samples(params)?)
    }
}

/// Repeats the on-off period over `horizon` rounds.
pub fn render_onoff(policy: &OnOffPolicy, params: &ModelParams, horizon: usize) -> Result<SamplingSchedule> {
    let period = policy.period_samples(params)?;
    SamplingSchedule::new((0..horizon).map(|i| period[i % period.len()]).collect())
}

/// Lazy policy: whenever it samples, it brings the variance down to `target`
/// and then waits `spacing` rounds until the innovation variance is back
/// above `c`.
///
/// With `burst = None` events repeat every `spacing` rounds indefinitely,
/// which requires `samples + z ≤ B·spacing`. With `burst = Some(k)` the policy
/// saves, runs `k` events back to back, and saves again.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LazyPolicy {
    pub target: f64,
    pub spacing: usize,
    pub samples: f64,
    pub burst: Option<usize>,
    /// Saving rounds before the first event when starting from the model's `v0`.
    pub warmup: usize,
}

impl LazyPolicy {
    pub fn new(params: &ModelParams, target: f64, spacing: usize, burst: Option<usize>) -> Result<Self> {
        ensure(target.is_finite() && target > 0.0, || {
            Error::InvalidParameter(format!("lazy target variance must be > 0, got {target}"))
        })?;
        ensure(spacing >= 1, || Error::InvalidParameter("lazy spacing must be >= 1".into()))?;
        ensure(target + spacing as f64 * params.rho >= params.c - LAZY_TOL, || {
            Error::InvalidParameter(format!(
                "target {target} with spacing {spacing} would sample below the threshold c = {}",
                params.c
            ))
        })?;
        ensure(burst != Some(0), || Error::InvalidParameter("burst must hold at least one event".into()))?;
        let samples = samples_to_reach(target + spacing as f64 * params.rho, target, params.sigma)?;
        let mut p = LazyPolicy { target, spacing, samples, burst, warmup: 0 };
        p.warmup = p.first_wait(params, params.v0, 0.0, usize::MAX)?.unwrap_or(usize::MAX);
        Ok(p)
    }

    /// Spend per regular event.
    pub fn event_cost(&self, params: &ModelParams) -> f64 {
        whole(self.samples, params) + params.z
    }

    /// Whether regular events can run back to back forever without saving.
    pub fn self_financing(&self, params: &ModelParams) -> bool {
        self.event_cost(params) <= params.budget * self.spacing as f64 * (1.0 + BUDGET_TOL)
    }

    fn first_event_samples(&self, params: &ModelParams, v_pre: f64) -> f64 {
        if v_pre > self.target {
            whole(samples_to_reach(v_pre, self.target, params.sigma).unwrap_or(0.0), params)
        } else {
            0.0
        }
    }

    /// Smallest number of idle rounds after a state with variance `v` and
    /// banked budget `bank` such that the next burst is affordable at every
    /// prefix and starts at or above `c`. `None` if it exceeds `limit`.
    fn first_wait(&self, params: &ModelParams, v: f64, bank: f64, limit: usize) -> Result<Option<usize>> {
        let events = match self.burst {
            Some(k) => k,
            None => {
                ensure(self.self_financing(params), || {
                    Error::Infeasible(format!(
                        "events cost {} but only {} accrues between them; a burst size is required",
                        self.event_cost(params),
                        params.budget * self.spacing as f64
                    ))
                })?;
                1
            }
        };
        let deficit = (self.event_cost(params) - params.budget * self.spacing as f64).max(0.0);
        let lazy_min = ((params.c - v) / params.rho - 1.0 - 1e-12).ceil().max(0.0) as usize;
        let mut w = lazy_min;
        loop {
            if w > limit {
                return Ok(None);
            }
            let v_pre = v + (w + 1) as f64 * params.rho;
            let first = self.first_event_samples(params, v_pre);
            let first_cost = if first > 0.0 { first + params.z } else { 0.0 };
            let need = first_cost + (events - 1) as f64 * deficit;
            let have = bank + params.budget * (w + 1) as f64;
            if have >= need - BUDGET_TOL * have.max(1.0) {
                return Ok(Some(w));
            }
            // jump ahead close to the answer; the accrual is linear in w
            let short = need - have;
            let jump = ((short / params.budget).floor() as usize).saturating_sub(1);
            w += jump.max(1);
        }
    }
}

/// Rounds a sample count up to a whole number in integer mode.
fn whole(x: f64, params: &ModelParams) -> f64 {
    if params.fractional_samples {
        x
    } else {
        (x - 1e-9).ceil().max(0.0)
    }
}

/// Schedule of `horizon` rounds realising a lazy policy from the model's `v0`.
pub fn render_lazy(policy: &LazyPolicy, params: &ModelParams, horizon: usize) -> Result<SamplingSchedule> {
    let mut out = vec![0.0; horizon];
    let mut t = 0usize; // rounds already decided
    let mut v = params.v0;
    let mut bank = 0.0;
    let mut first_burst = true;
    while t < horizon {
        let limit = horizon - t - 1;
        let wait = match policy.first_wait(params, v, bank, limit)? {
            Some(w) => w,
            None if first_burst => {
                return Err(Error::Infeasible(format!("the first event cannot be afforded within {horizon} rounds")))
            }
            None => break,
        };
        first_burst = false;
        // idle rounds
        let start = t + wait + 1;
        bank += params.budget * (wait + 1) as f64;
        let v_pre = v + (wait + 1) as f64 * params.rho;
        let first = policy.first_event_samples(params, v_pre);
        let s0 = first;
        out[start - 1] = s0;
        bank -= params.cost(s0);
        v = v_pre / (1.0 + s0 / params.sigma * v_pre);
        t = start;
        let mut done = 1usize;
        let limit_events = policy.burst.unwrap_or(usize::MAX);
        while done < limit_events && t + policy.spacing <= horizon {
            let next = t + policy.spacing;
            let v_pre = v + policy.spacing as f64 * params.rho;
            let s = policy.first_event_samples(params, v_pre);
            out[next - 1] = s;
            bank += params.budget * policy.spacing as f64 - params.cost(s);
            v = v_pre / (1.0 + s / params.sigma * v_pre);
            t = next;
            done += 1;
        }
        if policy.burst.is_none() {
            break;
        }
    }
    SamplingSchedule::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{is_lazy, simulate, validate_budget};

    fn unit(c: f64, b: f64) -> ModelParams {
        ModelParams::new(1.0, 1.0, c, b).unwrap()
    }

    #[test]
    fn onoff_two_two() {
        let p = unit(0.75, 1.0);
        let pol = OnOffPolicy::new(2, 2.0).unwrap();
        assert_eq!(pol.alpha(&p), 0.5);
        assert_eq!(pol.period_samples(&p).unwrap(), vec![0.0, 2.0]);
    }

    #[test]
    fn onoff_rate_equal_budget_is_constant() {
        let p = unit(0.75, 1.0);
        assert_eq!(OnOffPolicy::new(1, 1.0).unwrap().period_samples(&p).unwrap(), vec![1.0]);
        assert_eq!(OnOffPolicy::new(3, 1.0).unwrap().period_samples(&p).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn onoff_balances_budget() {
        let p = unit(0.75, 1.0);
        let pol = OnOffPolicy::new(7, 2.6).unwrap();
        let s = pol.period_samples(&p).unwrap();
        assert!((s.iter().sum::<f64>() - 7.0).abs() < 1e-12);
        assert!(validate_budget(&pol.schedule(&p).unwrap(), &p).valid);
    }

    #[test]
    fn lazy_render_is_lazy_and_valid() {
        let p = unit(0.75, 1.0);
        let pol = LazyPolicy::new(&p, 0.62, 1, None).unwrap();
        let s = render_lazy(&pol, &p, 50).unwrap();
        assert!(is_lazy(&s, &p, p.v0).unwrap());
        assert!(validate_budget(&s, &p).valid);
        let tr = simulate(&s, &p, p.v0).unwrap();
        assert!((tr.final_variance() - 0.62).abs() < 1e-12);
    }

    #[test]
    fn lazy_regular_needs_affordable_events() {
        let p = unit(0.75, 0.1);
        let pol = LazyPolicy::new(&p, 0.3, 1, None);
        assert!(matches!(pol, Err(Error::Infeasible(_))));
        let burst = LazyPolicy::new(&p, 0.3, 1, Some(4)).unwrap();
        let s = render_lazy(&burst, &p, 400).unwrap();
        assert!(validate_budget(&s, &p).valid);
        assert!(is_lazy(&s, &p, p.v0).unwrap());
    }
}
