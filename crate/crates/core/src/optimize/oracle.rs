use serde::{Deserialize, Serialize};

use super::{Binding, Bracket, ChosenPolicy, Diagnostics, OptResult};
use crate::error::{ensure, Error, Result};
use crate::model::{trace_value, ModelParams};
use crate::policy::{simulate, validate_budget, SamplingSchedule};
use crate::search::golden_max;

/// Settings for [`dp_oracle`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleOptions {
    pub horizon: usize,
    /// Variance grid size of the upper-bound program.
    pub variance_points: usize,
    /// Variance grid size of the lower-bound program.
    pub lower_variance_points: usize,
    /// Budget units per round in the lower-bound program.
    pub budget_units: usize,
    /// Rounds of accrual the lower-bound program may bank.
    pub bank_rounds: usize,
    /// Prior variance; `None` uses the model's `v0`. Infinity is allowed and
    /// is written as the string `"inf"`.
    #[serde(default, with = "start_serde")]
    pub start_variance: Option<f64>,
    /// Slack above which the result carries a coarse-grid note.
    pub tolerance: Option<f64>,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            horizon: 100,
            variance_points: 400,
            lower_variance_points: 200,
            budget_units: 6,
            bank_rounds: 30,
            start_variance: None,
            tolerance: None,
        }
    }
}

mod start_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Start {
        Finite(f64),
        Named(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(x) if x.is_infinite() => s.serialize_some("inf"),
            Some(x) => s.serialize_some(x),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Start>::deserialize(d)? {
            None => Ok(None),
            Some(Start::Finite(x)) => Ok(Some(x)),
            Some(Start::Named(n)) if n == "inf" => Ok(Some(f64::INFINITY)),
            Some(Start::Named(n)) => Err(serde::de::Error::custom(format!("unknown start variance {n:?}"))),
        }
    }
}

/// Average value over `horizon` rounds of never sampling.
pub fn null_value(params: &ModelParams, v0: f64, horizon: usize) -> f64 {
    if horizon == 0 {
        return 0.0;
    }
    let total: f64 = (1..=horizon).map(|t| (params.c - v0 - t as f64 * params.rho).max(0.0)).sum();
    total / horizon as f64
}

/// Grid: three quarters uniform on `[0, c]`, the rest uniform in precision
/// between `c` and `top`, then `+∞`.
fn variance_grid(c: f64, n: usize, top: f64) -> Vec<f64> {
    let n = n.max(8);
    let n_low = (n * 3 / 4).max(2);
    let n_high = n - n_low;
    let mut g: Vec<f64> = (0..n_low).map(|i| c * i as f64 / (n_low - 1) as f64).collect();
    let (p_hi, p_lo) = (1.0 / c, 1.0 / top);
    for j in 1..=n_high {
        let p = p_hi - (p_hi - p_lo) * j as f64 / n_high as f64;
        g.push(1.0 / p);
    }
    g.push(f64::INFINITY);
    g.dedup();
    g
}

/// Index of the largest grid point `≤ v`.
fn down(grid: &[f64], v: f64) -> usize {
    grid.partition_point(|&g| g <= v).saturating_sub(1)
}

/// Index of the smallest grid point `≥ v`.
fn up(grid: &[f64], v: f64) -> usize {
    grid.partition_point(|&g| g < v).min(grid.len() - 1)
}

fn after_samples(pre: f64, s: f64, sigma: f64) -> f64 {
    if pre.is_infinite() {
        sigma / s
    } else {
        pre / (1.0 + s / sigma * pre)
    }
}

/// Brackets the best average value over `horizon` rounds.
///
/// The upper bound relaxes the prefix budget constraints to a single total
/// constraint priced by a multiplier, solves the priced problem on a grid
/// with variances rounded down and sample costs rounded in the policy's
/// favour, and minimises over the multiplier. The lower bound solves the
/// problem exactly constrained on a grid with variances rounded up, budget
/// counted in whole units and banking capped, then simulates the extracted
/// schedule exactly.
pub fn dp_oracle(params: &ModelParams, opts: &OracleOptions) -> Result<OptResult> {
    params.validate()?;
    let t_len = opts.horizon;
    ensure(t_len >= 1, || Error::InvalidParameter("oracle horizon must be >= 1".into()))?;
    ensure(opts.variance_points >= 8 && opts.lower_variance_points >= 8, || {
        Error::InvalidParameter("variance grids need at least 8 points".into())
    })?;
    ensure(opts.budget_units >= 1 && opts.bank_rounds >= 1, || {
        Error::InvalidParameter("budget grid needs at least one unit and one banked round".into())
    })?;
    ensure(opts.budget_units * opts.bank_rounds <= u16::MAX as usize, || {
        Error::InvalidParameter("budget grid too large".into())
    })?;
    let v0 = opts.start_variance.unwrap_or(params.v0);
    ensure(v0 >= 0.0 && !v0.is_nan(), || Error::InvalidParameter(format!("start variance must be >= 0, got {v0}")))?;
    let c = params.c;
    let truncation = if v0.is_infinite() {
        0.0
    } else {
        let r = ((params.sigma / v0.max(1e-300) + params.z) / params.budget).ceil();
        (c * r / t_len as f64).min(c)
    };
    let mut diag = Diagnostics::new(Binding::None);
    diag.grid.insert("variance".into(), opts.variance_points);
    diag.grid.insert("lower_variance".into(), opts.lower_variance_points);
    diag.grid.insert("budget_units".into(), opts.budget_units);
    diag.grid.insert("bank_rounds".into(), opts.bank_rounds);
    diag.metrics.insert("horizon".into(), t_len as f64);

    let total_budget = params.budget * t_len as f64;
    if params.z >= total_budget {
        let val = if v0.is_infinite() { 0.0 } else { null_value(params, v0, t_len) };
        diag.bracket = Some(Bracket { lower: val, upper: val, truncation });
        diag.notes.push("the fixed cost exceeds the whole budget; only the null schedule is feasible".into());
        let mut out = OptResult::new(ChosenPolicy::Schedule(SamplingSchedule::zeros(t_len)), val, c, diag);
        out.rendered = Some(SamplingSchedule::zeros(t_len));
        return Ok(out);
    }

    let top = if v0.is_finite() { v0 } else { c } + (t_len as f64 + 1.0) * params.rho + c;
    let (upper, lambda, evals) = upper_bound(params, v0, t_len, variance_grid(c, opts.variance_points, top));
    diag.evaluations = evals;
    diag.metrics.insert("multiplier".into(), lambda);

    let (schedule, dp_lower) = lower_bound(params, v0, t_len, opts, variance_grid(c, opts.lower_variance_points, top))?;
    let lower = if v0.is_infinite() {
        infinite_start_value(&schedule, params)?
    } else {
        trace_value(&simulate(&schedule, params, v0)?)?
    };
    ensure(validate_budget(&schedule, params).valid, || {
        Error::Internal("oracle lower-bound schedule overspends".into())
    })?;
    diag.metrics.insert("grid_lower".into(), dp_lower);
    let upper = upper.max(lower);
    let bracket = Bracket { lower, upper, truncation };
    diag.bracket = Some(bracket);
    diag.iterations = t_len;
    if let Some(tol) = opts.tolerance {
        if bracket.slack() > tol {
            diag.notes.push(format!("grid too coarse: slack {:.3e} exceeds the requested {tol:.3e}", bracket.slack()));
        }
    }
    let mut out = OptResult::new(ChosenPolicy::Schedule(schedule.clone()), lower, c, diag);
    out.rendered = Some(schedule);
    Ok(out)
}

/// Value of a schedule started with no information about the state.
fn infinite_start_value(schedule: &SamplingSchedule, params: &ModelParams) -> Result<f64> {
    let mut v = f64::INFINITY;
    let mut total = 0.0;
    for &s in schedule.samples() {
        v = if s > 0.0 { after_samples(v + params.rho, s, params.sigma) } else { v + params.rho };
        total += (params.c - v).max(0.0);
    }
    Ok(total / schedule.len() as f64)
}

fn upper_bound(params: &ModelParams, v0: f64, t_len: usize, grid: Vec<f64>) -> (f64, f64, usize) {
    let n = grid.len();
    let (c, sigma, z) = (params.c, params.sigma, params.z);
    let reward: Vec<f64> = grid.iter().map(|&g| (c - g).max(0.0)).collect();
    // reachable targets and optimistic costs per state
    let mut actions: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    for &g in &grid {
        let pre = g + params.rho;
        let j0 = down(&grid, pre);
        let mut acts = Vec::with_capacity(j0 + 1);
        acts.push((j0, 0.0));
        for j in 0..j0 {
            let next = grid[j + 1];
            let mut cost = (sigma * (1.0 / next - 1.0 / pre)).max(0.0);
            if next < pre {
                cost += z;
            }
            acts.push((j, cost));
        }
        actions.push(acts);
    }
    let start = down(&grid, v0);
    let total_budget = params.budget * t_len as f64;
    let mut evals = 0usize;
    let mut priced = |lambda: f64| -> f64 {
        evals += 1;
        let mut w_next = vec![0.0; n];
        let mut w = vec![0.0; n];
        for _ in 0..t_len {
            for (i, acts) in actions.iter().enumerate() {
                let mut best = f64::NEG_INFINITY;
                for &(j, cost) in acts {
                    let val = reward[j] - lambda * cost + w_next[j];
                    if val > best {
                        best = val;
                    }
                }
                w[i] = best;
            }
            std::mem::swap(&mut w, &mut w_next);
        }
        (w_next[start] + lambda * total_budget) / t_len as f64
    };
    // convex in the multiplier; find a bracket where it starts increasing
    let mut hi = 1.0;
    let mut f_hi = priced(hi);
    loop {
        let f2 = priced(2.0 * hi);
        if f2 >= f_hi || hi > 1e12 {
            hi *= 2.0;
            break;
        }
        hi *= 2.0;
        f_hi = f2;
    }
    let (lambda, neg, _) = golden_max(|l| -priced(l), 0.0, hi, 1e-10);
    (-neg, lambda, evals)
}

fn lower_bound(
    params: &ModelParams,
    v0: f64,
    t_len: usize,
    opts: &OracleOptions,
    grid: Vec<f64>,
) -> Result<(SamplingSchedule, f64)> {
    let n = grid.len();
    let m = opts.budget_units;
    let cap = m * opts.bank_rounds.min(t_len.max(1));
    let unit = params.budget / m as f64;
    let reward: Vec<f64> = grid.iter().map(|&g| (params.c - g).max(0.0)).collect();
    let samples_for = |k: usize| -> f64 {
        let s = k as f64 * unit - params.z;
        if params.fractional_samples {
            s
        } else {
            (s + 1e-9).floor()
        }
    };
    // next[i * (cap + 1) + k]: state after spending k units from state i
    const NONE: u32 = u32::MAX;
    let mut next = vec![NONE; n * (cap + 1)];
    for (i, &g) in grid.iter().enumerate() {
        let pre = g + params.rho;
        next[i * (cap + 1)] = up(&grid, pre) as u32;
        for k in 1..=cap {
            let s = samples_for(k);
            if s > 0.0 {
                next[i * (cap + 1) + k] = up(&grid, after_samples(pre, s, params.sigma)) as u32;
            }
        }
    }
    let width = cap + 1;
    let mut choice = vec![0u16; t_len * n * width];
    let mut w_next = vec![0.0f64; n * width];
    let mut w = vec![0.0f64; n * width];
    for t in (0..t_len).rev() {
        for i in 0..n {
            let row = &next[i * width..(i + 1) * width];
            for b in 0..=cap {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0u16;
                for (k, &j) in row.iter().enumerate().take(b + 1) {
                    if j == NONE {
                        continue;
                    }
                    let j = j as usize;
                    let nb = (b - k + m).min(cap);
                    let val = reward[j] + w_next[j * width + nb];
                    if val > best {
                        best = val;
                        arg = k as u16;
                    }
                }
                w[i * width + b] = best;
                choice[(t * n + i) * width + b] = arg;
            }
        }
        std::mem::swap(&mut w, &mut w_next);
    }
    let mut i = up(&grid, v0);
    let mut b = m.min(cap);
    let dp_value = w_next[i * width + b] / t_len as f64;
    let mut samples = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let k = choice[(t * n + i) * width + b] as usize;
        samples.push(if k == 0 { 0.0 } else { samples_for(k) });
        i = next[i * width + k] as usize;
        b = (b - k + m).min(cap);
    }
    Ok((SamplingSchedule::new(samples)?, dp_value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_cost_above_budget_is_null() {
        let p = ModelParams::new(1.0, 1.0, 3.0, 0.1).unwrap().with_fixed_cost(100.0).unwrap().with_v0(0.0).unwrap();
        let r = dp_oracle(&p, &OracleOptions { horizon: 10, ..Default::default() }).unwrap();
        let b = r.diagnostics.bracket.unwrap();
        assert_eq!(b.lower, b.upper);
        assert!((b.lower - null_value(&p, 0.0, 10)).abs() < 1e-15);
    }

    #[test]
    fn bracket_is_ordered_and_covers_hand_policy() {
        let p = ModelParams::new(1.0, 1.0, 0.75, 1.0).unwrap();
        let opts =
            OracleOptions { horizon: 60, variance_points: 200, lower_variance_points: 100, ..Default::default() };
        let r = dp_oracle(&p, &opts).unwrap();
        let b = r.diagnostics.bracket.unwrap();
        assert!(b.lower <= b.upper + 1e-12);
        let hand: Vec<f64> = (0..60).map(|t| [0.0, 0.0, 2.0, 2.0][t % 4]).collect();
        let hv = trace_value(&simulate(&SamplingSchedule::new(hand).unwrap(), &p, p.v0).unwrap()).unwrap();
        assert!(b.upper >= hv - 1e-12, "upper {} hand {hv}", b.upper);
    }

    #[test]
    fn grid_rounding() {
        let g = variance_grid(1.0, 16, 10.0);
        assert_eq!(g[0], 0.0);
        assert!(g.last().unwrap().is_infinite());
        assert_eq!(down(&g, 0.5), up(&g, 0.5).min(down(&g, 0.5)));
        assert!(g[up(&g, 0.55)] >= 0.55 && g[down(&g, 0.55)] <= 0.55);
        assert_eq!(up(&g, 1e9), g.len() - 1);
    }
}
