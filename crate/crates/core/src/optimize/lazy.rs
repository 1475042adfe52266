use serde::{Deserialize, Serialize};

use super::{Binding, ChosenPolicy, Diagnostics, OptResult};
use crate::error::Result;
use crate::model::ModelParams;
use crate::policy::{render_lazy, LazyPolicy, SamplingSchedule};
use crate::search::scan_then_golden;

/// Settings for [`optimal_lazy_discrete_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LazyOptions {
    /// Events needing more than this many rounds of accrual are treated as unaffordable.
    pub max_saving_rounds: f64,
    /// Target relative shortfall of a burst cycle against the long-run value.
    pub burst_tolerance: f64,
    pub max_burst: usize,
    /// Rendered schedules longer than this are not stored.
    pub render_limit: usize,
}

impl Default for LazyOptions {
    fn default() -> Self {
        LazyOptions { max_saving_rounds: 1e6, burst_tolerance: 1e-4, max_burst: 1_000_000, render_limit: 100_000 }
    }
}

/// Value summed over the `spacing` rounds after an event that reaches `target`.
fn event_value(params: &ModelParams, target: f64, spacing: usize) -> f64 {
    (0..spacing).map(|i| (params.c - target - i as f64 * params.rho).max(0.0)).sum()
}

fn event_samples(params: &ModelParams, target: f64, spacing: usize) -> f64 {
    let d = spacing as f64 * params.rho;
    params.sigma * d / (target * (target + d))
}

/// Target variance reached by `s` samples from `target + spacing·ρ`.
fn target_for_samples(params: &ModelParams, s: f64, spacing: usize) -> f64 {
    let d = spacing as f64 * params.rho;
    let disc = (d * d + 4.0 * params.sigma * d / s).sqrt();
    // (−d + disc)/2 without cancellation
    2.0 * params.sigma * d / s / (d + disc)
}

/// Long-run average value of a lazy policy; zero when unaffordable.
fn lazy_average(params: &ModelParams, target: f64, spacing: usize, samples: f64, opts: &LazyOptions) -> f64 {
    let cost = samples + params.z;
    let rounds = cost / params.budget;
    if rounds.is_nan() || rounds > opts.max_saving_rounds {
        return 0.0;
    }
    event_value(params, target, spacing) / rounds.max(spacing as f64)
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    spacing: usize,
    target: f64,
    samples: f64,
    value: f64,
}

/// Best lazy policy for a discrete instance.
pub fn optimal_lazy_discrete(params: &ModelParams) -> Result<OptResult> {
    optimal_lazy_discrete_with(params, LazyOptions::default())
}

pub fn optimal_lazy_discrete_with(params: &ModelParams, opts: LazyOptions) -> Result<OptResult> {
    params.validate()?;
    let (c, rho) = (params.c, params.rho);
    let max_spacing = ((c / rho) - 1e-12).ceil().max(1.0) as usize;
    let mut best: Option<Candidate> = None;
    let mut evaluations = 0;
    for spacing in 1..=max_spacing {
        let d = spacing as f64 * rho;
        let lo = (c - d).max(c * 1e-12);
        let hi = c;
        let density = |v: f64| event_value(params, v, spacing) / (event_samples(params, v, spacing) + params.z);
        let average = |v: f64| lazy_average(params, v, spacing, event_samples(params, v, spacing), &opts);
        let mut targets = vec![lo];
        let (vd, _, e) = scan_then_golden(density, lo, hi, 32, 1e-13);
        evaluations += e;
        targets.push(vd);
        let (va, _, e) = scan_then_golden(average, lo, hi, 32, 1e-13);
        evaluations += e;
        targets.push(va);
        let per_event = params.budget * spacing as f64 - params.z;
        if per_event > 0.0 {
            let vb = target_for_samples(params, per_event, spacing);
            if vb >= lo && vb < hi {
                targets.push(vb);
            }
        }
        for v in targets {
            let s = event_samples(params, v, spacing);
            let options: Vec<(f64, f64)> = if params.fractional_samples {
                vec![(v, s)]
            } else {
                [s.floor(), s.ceil()]
                    .into_iter()
                    .filter(|&k| k >= 1.0)
                    .map(|k| (target_for_samples(params, k, spacing), k))
                    .filter(|&(t, _)| t >= lo - 1e-12 && t < hi)
                    .collect()
            };
            for (t, k) in options {
                let value = lazy_average(params, t, spacing, k, &opts);
                evaluations += 1;
                if value > 0.0 && best.is_none_or(|b| value > b.value + 1e-15) {
                    best = Some(Candidate { spacing, target: t, samples: k, value });
                }
            }
        }
    }
    let Some(best) = best else {
        let mut diag = Diagnostics::new(Binding::None);
        diag.evaluations = evaluations;
        diag.notes.push("no lazy event is affordable; returning the null policy".into());
        let mut out = OptResult::new(ChosenPolicy::Null, 0.0, c, diag);
        out.rendered = Some(SamplingSchedule::zeros(1));
        return Ok(out);
    };
    let cost = best.samples + params.z;
    let self_financing = cost <= params.budget * best.spacing as f64 * (1.0 + 1e-12);
    let burst = if self_financing {
        None
    } else {
        // the burst's first event may cost up to σ/target; amortise it
        let first = params.sigma / best.target + params.z;
        let k = (first / (opts.burst_tolerance * cost)).ceil() as usize;
        Some(k.clamp(1, opts.max_burst))
    };
    let policy = LazyPolicy::new(params, best.target, best.spacing, burst)?;
    let mut diag = Diagnostics::new(if self_financing { Binding::Time } else { Binding::Budget });
    diag.evaluations = evaluations;
    diag.iterations = max_spacing;
    diag.metrics.insert("spacing".into(), best.spacing as f64);
    diag.metrics.insert("target".into(), best.target);
    diag.metrics.insert("samples".into(), best.samples);
    diag.metrics.insert("warmup".into(), policy.warmup as f64);
    let mut out = OptResult::new(ChosenPolicy::Lazy(policy), best.value, c, diag);
    let events = burst.unwrap_or(64);
    let horizon = policy.warmup.saturating_add((events + 1).saturating_mul(best.spacing));
    if horizon <= opts.render_limit {
        out.rendered = Some(render_lazy(&policy, params, horizon)?);
    } else {
        out.diagnostics.notes.push(format!("first burst ends after {horizon} rounds; rendered schedule not stored"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{is_lazy, validate_budget};

    #[test]
    fn tiny_budget_gives_null() {
        let p = ModelParams::new(1.0, 1.0, 0.75, 1e-9).unwrap();
        let r = optimal_lazy_discrete(&p).unwrap();
        assert_eq!(r.policy, ChosenPolicy::Null);
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn worked_example_lazy_is_valid() {
        let p = ModelParams::new(1.0, 1.0, 0.75, 1.0).unwrap();
        let r = optimal_lazy_discrete(&p).unwrap();
        assert!(r.value > 0.0 && r.value <= 0.75 / 2.0 + 0.5);
        let s = r.rendered.unwrap();
        assert!(validate_budget(&s, &p).valid);
        assert!(is_lazy(&s, &p, p.v0).unwrap());
    }

    #[test]
    fn integer_mode_uses_whole_samples() {
        let p = ModelParams::new(0.3, 1.0, 2.0, 0.5).unwrap().with_fixed_cost(0.4).unwrap().with_fractional(false);
        let r = optimal_lazy_discrete(&p).unwrap();
        assert_eq!(r.diagnostics.metrics["samples"].fract(), 0.0);
        if let Some(s) = r.rendered {
            assert!(s.samples().iter().all(|x| x.fract() == 0.0));
            assert!(validate_budget(&s, &p).valid);
            assert!(is_lazy(&s, &p, p.v0).unwrap());
        }
    }

    #[test]
    fn inverse_target() {
        let p = ModelParams::new(0.7, 2.0, 1.0, 1.0).unwrap();
        let s = event_samples(&p, 0.4, 3);
        assert!((target_for_samples(&p, s, 3) - 0.4).abs() < 1e-14);
    }
}
