use serde::{Deserialize, Serialize};

use super::{Binding, ChosenPolicy, Diagnostics, OptResult};
use crate::error::{ensure, Error, Result};
use crate::model::ModelParams;
use crate::policy::{mobius_fixed_point, mobius_mul, round_matrix, OnOffPolicy, SamplingSchedule};
use crate::search::scan_then_golden;

/// Periods up to this length search every on-round count.
const EXHAUSTIVE_PERIOD: usize = 512;
/// On-round counts examined on each side of the asymptotic optimum for longer periods.
const WINDOW: usize = 32;
/// Periods whose rendered schedule is stored in the result.
const RENDER_LIMIT: usize = 1 << 16;

fn require_no_fixed_cost(params: &ModelParams) -> Result<()> {
    params.validate()?;
    ensure(params.z == 0.0, || {
        Error::Unsupported(format!(
            "on-off optimization is defined for z = 0 (got z = {}); use optimal_lazy_discrete for instances with a fixed cost",
            params.z
        ))
    })
}

/// Steady-state variance of sampling `rate` every round.
fn constant_rate_fixed_point(params: &ModelParams, rate: f64) -> f64 {
    let k = rate / params.sigma;
    // positive root of k v² + kρ v − ρ = 0
    2.0 / (k * (1.0 + (1.0 + 4.0 / (k * params.rho)).sqrt()))
}

/// Long-period limit of on-off values: `max_S min(B/S, 1)·(c − v_S)⁺` where
/// `v_S` is the steady state of sampling `S` every round. Returns `(S, value)`.
pub fn onoff_limit(params: &ModelParams) -> (f64, f64) {
    let f = |u: f64| {
        let s = u.exp();
        (params.budget / s).min(1.0) * (params.c - constant_rate_fixed_point(params, s)).max(0.0)
    };
    let lo = params.budget.ln();
    let (u, val, _) = scan_then_golden(f, lo, lo + 40.0, 400, 1e-12);
    (u.exp(), val)
}

struct PeriodBest {
    policy: OnOffPolicy,
    value: f64,
    evaluations: usize,
}

/// Steady-state value of an on-off policy in `O(log period)` time plus the
/// rounds needed for the on-interval to settle.
pub(crate) fn onoff_value(params: &ModelParams, period: usize, rate: f64) -> f64 {
    let pol = OnOffPolicy { period, rate };
    let Ok((off, first)) = pol.layout(params) else {
        return f64::NEG_INFINITY;
    };
    let c = params.c;
    let rho = params.rho;
    if off == 0 && first == rate {
        return (c - constant_rate_fixed_point(params, rate)).max(0.0);
    }
    let on_rest = period - off - 1;
    let mut m = [1.0, off as f64 * rho, 0.0, 1.0];
    m = mobius_mul(round_matrix(first, params), m);
    let mut power = round_matrix(rate, params);
    let mut e = on_rest;
    while e > 0 {
        if e & 1 == 1 {
            m = mobius_mul(power, m);
        }
        power = mobius_mul(power, power);
        e >>= 1;
    }
    if m[2] == 0.0 {
        return f64::NEG_INFINITY;
    }
    let x = mobius_fixed_point(m);
    // off rounds: x + iρ for i = 1..=off, value while below c
    let below = (((c - x) / rho).ceil().max(0.0) as usize).min(off + 1).saturating_sub(1).min(off);
    let n = below as f64;
    let mut total = n * (c - x) - rho * n * (n + 1.0) / 2.0;
    let step = |v: f64, s: f64| (v + rho) / (1.0 + s / params.sigma * (v + rho));
    let mut v = step(x + off as f64 * rho, first);
    total += (c - v).max(0.0);
    let settle = constant_rate_fixed_point(params, rate);
    let tail = (c - settle).max(0.0);
    for i in 0..on_rest {
        v = step(v, rate);
        if (v - settle).abs() <= 1e-14 * settle.max(1e-300) {
            total += tail * (on_rest - i) as f64;
            break;
        }
        total += (c - v).max(0.0);
    }
    total / period as f64
}

fn best_for_period(params: &ModelParams, period: usize) -> Result<PeriodBest> {
    if !params.fractional_samples {
        return best_for_period_integer(params, period);
    }
    let bt = params.budget * period as f64;
    let mut evaluations = 1;
    // all rounds on: rate B
    let mut best = (params.budget, onoff_value(params, period, params.budget));
    let consider = |rate: f64, value: f64, best: &mut (f64, f64)| {
        if value > best.1 + 1e-15 {
            *best = (rate, value);
        }
    };
    let on_counts: Vec<usize> = if period <= EXHAUSTIVE_PERIOD {
        (1..period).collect()
    } else {
        let (s_lim, _) = onoff_limit(params);
        let centre = (bt / s_lim).round() as usize;
        let lo = centre.saturating_sub(WINDOW).max(1);
        let hi = (centre + WINDOW).min(period - 1);
        let mut v: Vec<usize> = (lo..=hi).collect();
        v.extend(1..=4.min(period - 1));
        v.sort_unstable();
        v.dedup();
        v
    };
    // endpoint S = BT/L of each family: the on-rounds sample evenly
    let mut endpoints: Vec<(usize, f64)> = Vec::with_capacity(on_counts.len());
    for &l in &on_counts {
        let rate = bt / l as f64;
        let val = onoff_value(params, period, rate);
        evaluations += 1;
        endpoints.push((l, val));
        consider(rate, val, &mut best);
    }
    let refine: Vec<usize> = if period <= EXHAUSTIVE_PERIOD {
        on_counts.clone()
    } else {
        let mut e = endpoints.clone();
        e.sort_by(|a, b| b.1.total_cmp(&a.1));
        e.iter().take(6).map(|x| x.0).collect()
    };
    for l in refine {
        if l <= 1 {
            continue; // one on-round: every rate in the family gives the same schedule
        }
        let hi = bt / l as f64;
        let lo = bt / (l + 1) as f64;
        let lo = lo + (hi - lo) * 1e-9;
        let (x, fx, e) = scan_then_golden(|s| onoff_value(params, period, s), lo, hi, 6, 1e-10);
        evaluations += e;
        let at_hi = endpoints.iter().find(|p| p.0 == l).map_or(f64::NEG_INFINITY, |p| p.1);
        if fx > at_hi + 1e-12 {
            consider(x, fx, &mut best);
        }
    }
    Ok(PeriodBest { policy: OnOffPolicy::new(period, best.0)?, value: best.1, evaluations })
}

fn best_for_period_integer(params: &ModelParams, period: usize) -> Result<PeriodBest> {
    let bt = params.budget * period as f64;
    let top = (bt + 1e-9).floor();
    ensure(top >= 1.0, || {
        Error::Infeasible(format!("a period of {period} rounds accrues less than one whole sample"))
    })?;
    let max_rate = top as usize;
    let stride = (max_rate / 20_000).max(1);
    let mut best: Option<(f64, f64)> = None;
    let mut evaluations = 0;
    let mut rate = 1usize;
    while rate <= max_rate {
        let val = onoff_value(params, period, rate as f64);
        evaluations += 1;
        if best.is_none_or(|b| val > b.1 + 1e-15) {
            best = Some((rate as f64, val));
        }
        rate += stride;
    }
    let (rate, value) = best.expect("at least one rate");
    Ok(PeriodBest { policy: OnOffPolicy::new(period, rate)?, value, evaluations })
}

/// Best on-off policy of period `period`.
pub fn optimal_onoff_for_period(params: &ModelParams, period: usize) -> Result<OptResult> {
    require_no_fixed_cost(params)?;
    ensure(period >= 1, || Error::InvalidParameter("period must be >= 1".into()))?;
    let best = best_for_period(params, period)?;
    Ok(onoff_result(params, &best, 1))
}

fn onoff_result(params: &ModelParams, best: &PeriodBest, iterations: usize) -> OptResult {
    let policy = best.policy;
    let binding = if policy.rate > params.budget * (1.0 + 1e-12) { Binding::Budget } else { Binding::Time };
    let mut diag = Diagnostics::new(binding);
    diag.iterations = iterations;
    diag.evaluations = best.evaluations;
    diag.metrics.insert("period".into(), policy.period as f64);
    diag.metrics.insert("rate".into(), policy.rate);
    diag.metrics.insert("alpha".into(), policy.alpha(params));
    let mut out = OptResult::new(ChosenPolicy::OnOff(policy), best.value, params.c, diag);
    if policy.period <= RENDER_LIMIT {
        out.rendered = policy.period_samples(params).ok().and_then(|s| SamplingSchedule::periodic(s).ok());
    } else {
        out.diagnostics.notes.push(format!("period {} too long to store the rendered schedule", policy.period));
    }
    out
}

/// Settings for [`vstar_estimate_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VStarOptions {
    /// Stop once the best on-off value is within this of the long-period limit.
    pub tol: f64,
    /// Doubling continues at least up to this period.
    pub min_period: usize,
    pub max_period: usize,
}

impl Default for VStarOptions {
    fn default() -> Self {
        VStarOptions { tol: 1e-6, min_period: 16, max_period: 1 << 22 }
    }
}

/// Estimates the supremum of on-off values by doubling the period.
pub fn vstar_estimate(params: &ModelParams, tol: f64) -> Result<OptResult> {
    vstar_estimate_with(params, VStarOptions { tol, ..Default::default() })
}

/// The on-off value is nondecreasing along doubling periods and tends to
/// [`onoff_limit`], but it can sit flat for several doublings before rising,
/// so the stopping test compares against the limit rather than the last gain.
/// The returned value is that of a concrete policy, never the limit itself.
pub fn vstar_estimate_with(params: &ModelParams, opts: VStarOptions) -> Result<OptResult> {
    require_no_fixed_cost(params)?;
    ensure(opts.tol > 0.0, || Error::InvalidParameter("tol must be > 0".into()))?;
    let (s_lim, v_lim) = onoff_limit(params);
    let mut period = 1usize;
    let mut best = best_for_period(params, 1)?;
    let mut evaluations = best.evaluations;
    let mut iterations = 1;
    let mut last_increment = f64::INFINITY;
    let done = |period: usize, value: f64| period >= opts.min_period && v_lim - value <= opts.tol;
    let mut converged = done(period, best.value);
    while !converged && period < opts.max_period {
        period *= 2;
        let cur = best_for_period(params, period)?;
        evaluations += cur.evaluations;
        iterations += 1;
        last_increment = (cur.value - best.value).max(0.0);
        if cur.value > best.value {
            best = cur;
        }
        converged = done(period, best.value);
    }
    best.evaluations = evaluations;
    let mut out = onoff_result(params, &best, iterations);
    let m = &mut out.diagnostics.metrics;
    m.insert("last_period".into(), period as f64);
    m.insert("last_increment".into(), last_increment);
    m.insert("limit_value".into(), v_lim);
    m.insert("limit_rate".into(), s_lim);
    m.insert("limit_gap".into(), v_lim - out.value);
    if !converged {
        out.diagnostics.notes.push(format!(
            "stopped at the period cap {} with the value {:.3e} below the limit",
            opts.max_period,
            v_lim - out.value
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> ModelParams {
        ModelParams::new(1.0, 1.0, 0.75, 1.0).unwrap()
    }

    #[test]
    fn period_two_samples_twice_every_other_round() {
        let r = optimal_onoff_for_period(&example(), 2).unwrap();
        let ChosenPolicy::OnOff(p) = r.policy else { panic!() };
        assert!((p.rate - 2.0).abs() < 1e-9, "rate {}", p.rate);
        let expect = 0.75 - (0.75 + 2f64.sqrt() - 1.0) / 2.0;
        assert!((r.value - expect).abs() < 1e-9);
        assert!((r.value + r.cost - 0.75).abs() < 1e-15);
    }

    #[test]
    fn period_one_is_constant_budget() {
        let r = optimal_onoff_for_period(&example(), 1).unwrap();
        let ChosenPolicy::OnOff(p) = r.policy else { panic!() };
        assert_eq!(p.rate, 1.0);
    }

    #[test]
    fn fast_value_matches_periodic_value() {
        use crate::policy::periodic_value;
        for (rho, sigma, c, b) in [(1.0, 1.0, 0.75, 1.0), (0.3, 2.0, 1.7, 0.4), (2.0, 0.5, 0.9, 3.0)] {
            let p = ModelParams::new(rho, sigma, c, b).unwrap();
            for period in [1usize, 2, 3, 7, 40, 129] {
                for rate in [0.5 * b, b, 1.3 * b, 2.9 * b, 11.0 * b] {
                    let s = OnOffPolicy { period, rate }.period_samples(&p).unwrap();
                    let slow = periodic_value(&s, &p).unwrap();
                    let fast = onoff_value(&p, period, rate);
                    assert!((slow - fast).abs() < 1e-12, "{period} {rate}: {slow} vs {fast}");
                }
            }
        }
    }

    #[test]
    fn fixed_cost_rejected() {
        let p = example().with_fixed_cost(0.1).unwrap();
        assert!(matches!(optimal_onoff_for_period(&p, 2), Err(Error::Unsupported(_))));
        assert!(vstar_estimate(&p, 1e-6).is_err());
    }

    #[test]
    fn vstar_beats_worked_example() {
        let r = vstar_estimate(&example(), 1e-6).unwrap();
        assert!(r.value >= 0.75 - 0.5766, "{}", r.value);
        assert!(r.value <= r.diagnostics.metrics["limit_value"] + 1e-9);
    }
}
