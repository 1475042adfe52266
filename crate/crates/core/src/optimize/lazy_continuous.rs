use serde::{Deserialize, Serialize};

use super::{Binding, ChosenPolicy, Diagnostics, OptResult};
use crate::continuous::{Atom, AtomTrain, ContinuousParams, ContinuousPolicy};
use crate::error::{Error, Result};
use crate::search::{bisect, scan_then_golden};

/// Relative shortfall the rendered train may have against the long-run value.
const RENDER_PRECISION: f64 = 1e-7;
const MAX_TRAIN: usize = 20_000_000;

/// Lazy continuous policy: atoms of mass `atom_mass` that bring the variance
/// from `c` down to `target = c − gap`, one every `gap` time units while
/// budget lasts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousLazyPolicy {
    pub atom_mass: f64,
    pub gap: f64,
    pub target: f64,
}

fn gap(c: f64, s: f64) -> f64 {
    s * c * c / (1.0 + s * c)
}

/// Spend per atom: its mass plus the flow cost of the following gap.
fn event_cost(p: &ContinuousParams, s: f64) -> f64 {
    s + p.f * gap(p.c, s).min(1.0)
}

fn average(p: &ContinuousParams, s: f64) -> f64 {
    let g = gap(p.c, s);
    0.5 * g * g * (1.0 / g).min(p.budget / event_cost(p, s))
}

/// Best lazy policy in the continuous model.
pub fn optimal_lazy_continuous(params: &ContinuousParams) -> Result<OptResult> {
    params.validate()?;
    let c = params.c;
    let density = |u: f64| {
        let s = u.exp();
        let g = gap(c, s);
        0.5 * g * g / event_cost(params, s)
    };
    // log-scale search around 1/c; the density is quasiconcave in s
    let centre = (1.0 / c).ln();
    let (u_d, _, mut evaluations) = scan_then_golden(density, centre - 30.0, centre + 30.0, 600, 1e-14);
    let mut s = u_d.exp();
    let surplus = |s: f64| params.budget * gap(c, s) - event_cost(params, s);
    let mut binding = Binding::Budget;
    let mut value = average(params, s);
    if surplus(s) > 0.0 {
        // density optimum under-spends: take the largest atom the budget sustains
        binding = Binding::Time;
        let mut lo = s;
        let mut hi = s * 2.0;
        let mut guard = 0;
        while surplus(hi) > 0.0 && guard < 400 {
            lo = hi;
            hi *= 2.0;
            guard += 1;
        }
        // scan for the last sign change between lo and hi
        let n = 200;
        let mut a = lo;
        for i in 1..=n {
            let x = lo + (hi - lo) * i as f64 / n as f64;
            evaluations += 1;
            if surplus(x) > 0.0 {
                a = x;
            }
        }
        let b = (a + (hi - lo) / n as f64).min(hi);
        let root = bisect(surplus, a, b, 1e-15)
            .ok_or_else(|| Error::Internal("budget-binding atom size not bracketed".into()))?;
        s = root;
        value = 0.5 * gap(c, s);
    }
    let g = gap(c, s);
    let policy = ContinuousLazyPolicy { atom_mass: s, gap: g, target: c / (1.0 + s * c) };
    let mut diag = Diagnostics::new(binding);
    diag.evaluations = evaluations;
    diag.metrics.insert("atom_mass".into(), s);
    diag.metrics.insert("gap".into(), g);
    diag.metrics.insert("density".into(), density(s.ln()));
    let mut out = OptResult::new(ChosenPolicy::LazyContinuous(policy), value, c, diag);
    match render_continuous_lazy(&policy, params) {
        Ok(p) => out.continuous = Some(p),
        Err(e) => out.diagnostics.notes.push(format!("policy not rendered: {e}")),
    }
    Ok(out)
}

/// Saves, then runs one long train of atoms whose first atom brings the
/// variance to `target`. The horizon ends when the variance returns to `c`.
pub(crate) fn render_continuous_lazy(
    policy: &ContinuousLazyPolicy,
    params: &ContinuousParams,
) -> Result<ContinuousPolicy> {
    let (c, b, f) = (params.c, params.budget, params.f);
    let s = policy.atom_mass;
    let g = policy.gap;
    let e = s + f * g.min(1.0);
    let first_cost = 1.0 / policy.target + f + g * b;
    let k = ((first_cost / (RENDER_PRECISION * e)).ceil() as usize).clamp(2, MAX_TRAIN);
    let deficit = ((k - 1) as f64 * (e - b * g)).max(0.0);
    let need = |w: f64| {
        let pre = params.v0 + w;
        let a1 = 1.0 / policy.target - 1.0 / pre;
        b * w - (a1 + f + deficit) * (1.0 + 1e-12)
    };
    let w_min = (c - params.v0).max(0.0);
    let w = if need(w_min) >= 0.0 {
        w_min
    } else {
        let mut hi = w_min.max(1.0);
        while need(hi) < 0.0 {
            hi *= 2.0;
        }
        let root = bisect(need, w_min, hi, 1e-15).ok_or_else(|| Error::Internal("saving time not bracketed".into()))?;
        // step to the affordable side of the root
        let mut w = root;
        while need(w) < 0.0 {
            w += (1e-12 * w).max(1e-15);
        }
        w
    };
    let a1 = 1.0 / policy.target - 1.0 / (params.v0 + w);
    let horizon = w + k as f64 * g;
    ContinuousPolicy::new(
        vec![],
        vec![Atom { t: w, mass: a1 }],
        vec![AtomTrain { start: w + g, spacing: g, count: k - 1, mass: s }],
        horizon,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_small_budget() {
        let p = ContinuousParams::new(1.0, 1.0, 0.0).unwrap();
        let r = optimal_lazy_continuous(&p).unwrap();
        assert!((r.diagnostics.metrics["atom_mass"] - 1.0).abs() < 1e-6);
        assert!((r.value - 0.125).abs() < 1e-9);
    }

    #[test]
    fn closed_form_large_budget() {
        let (c, b) = (1.5, 3.0);
        let p = ContinuousParams::new(c, b, 0.0).unwrap();
        let r = optimal_lazy_continuous(&p).unwrap();
        assert!((r.value - 0.5 * (c - 1.0 / (b * c))).abs() < 1e-9, "{}", r.value);
        assert_eq!(r.diagnostics.binding, Binding::Time);
    }

    #[test]
    fn expensive_flow_tends_to_zero() {
        let p = ContinuousParams::new(1.0, 1.0, 1e9).unwrap();
        assert!(optimal_lazy_continuous(&p).unwrap().value < 1e-6);
    }
}
