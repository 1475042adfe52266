//! Continuous-time model with unit drift rate and unit sample noise:
//! `v' = 1 − s(t) v²` under a sampling density, downward jumps at atoms, and a
//! fixed cost `f` metered as a measure over sampling time.

mod ode;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::model::ModelParams;
use crate::policy::{SamplingSchedule, BUDGET_TOL};

pub use ode::{apply_atom, evolve, EQUILIBRIUM_TOL};
pub(crate) use ode::{evolve_raw, integral_loss};

/// Parameters of a continuous instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousParams {
    pub c: f64,
    #[serde(rename = "B")]
    pub budget: f64,
    /// Flow cost rate, the continuous counterpart of the fixed cost `z`.
    #[serde(default)]
    pub f: f64,
    #[serde(default = "default_v0")]
    pub v0: f64,
}

fn default_v0() -> f64 {
    1.0
}

impl ContinuousParams {
    pub fn new(c: f64, budget: f64, f: f64) -> Result<Self> {
        let p = ContinuousParams { c, budget, f, v0: default_v0() };
        p.validate()?;
        Ok(p)
    }

    pub fn with_v0(mut self, v0: f64) -> Result<Self> {
        self.v0 = v0;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite();
        ensure(ok(self.c) && self.c > 0.0, || Error::InvalidParameter(format!("c must be > 0, got {}", self.c)))?;
        ensure(ok(self.budget) && self.budget > 0.0, || {
            Error::InvalidParameter(format!("B must be > 0, got {}", self.budget))
        })?;
        ensure(ok(self.f) && self.f >= 0.0, || Error::InvalidParameter(format!("f must be >= 0, got {}", self.f)))?;
        ensure(ok(self.v0) && self.v0 >= 0.0, || Error::InvalidParameter(format!("v0 must be >= 0, got {}", self.v0)))
    }
}

/// Sampling density `rate` from `start` until the next breakpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSegment {
    pub start: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub t: f64,
    pub mass: f64,
}

/// `count` atoms of equal `mass` at `start, start + spacing, …`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomTrain {
    pub start: f64,
    pub spacing: f64,
    pub count: usize,
    pub mass: f64,
}

impl AtomTrain {
    fn time(&self, i: usize) -> f64 {
        self.start + self.spacing * i as f64
    }
}

/// Piecewise-constant density plus atoms on `[0, horizon]`.
///
/// The density before the first breakpoint is zero. Atoms may be listed
/// individually or as arithmetic trains; coincident atoms add their masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousPolicy {
    #[serde(default)]
    pub flow: Vec<FlowSegment>,
    #[serde(default)]
    pub atoms: Vec<Atom>,
    #[serde(default)]
    pub trains: Vec<AtomTrain>,
    pub horizon: f64,
}

impl ContinuousPolicy {
    pub fn new(flow: Vec<FlowSegment>, atoms: Vec<Atom>, trains: Vec<AtomTrain>, horizon: f64) -> Result<Self> {
        let p = ContinuousPolicy { flow, atoms, trains, horizon };
        p.validate()?;
        Ok(p)
    }

    /// Never samples.
    pub fn null(horizon: f64) -> Result<Self> {
        Self::new(vec![], vec![], vec![], horizon)
    }

    /// Constant density over the whole horizon.
    pub fn constant(rate: f64, horizon: f64) -> Result<Self> {
        Self::new(vec![FlowSegment { start: 0.0, rate }], vec![], vec![], horizon)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSchedule(m));
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad(format!("horizon must be > 0, got {}", self.horizon));
        }
        for w in self.flow.windows(2) {
            if w[1].start <= w[0].start {
                return bad("flow breakpoints must be strictly increasing".into());
            }
        }
        for seg in &self.flow {
            if !(seg.start >= 0.0 && seg.start.is_finite() && seg.rate >= 0.0 && seg.rate.is_finite()) {
                return bad(format!("invalid flow segment {seg:?}"));
            }
        }
        for w in self.atoms.windows(2) {
            if w[1].t <= w[0].t {
                return bad("atom times must be strictly increasing".into());
            }
        }
        for a in &self.atoms {
            if !(a.t >= 0.0 && a.t <= self.horizon && a.mass >= 0.0 && a.mass.is_finite()) {
                return bad(format!("invalid atom {a:?}"));
            }
        }
        for tr in &self.trains {
            if !(tr.start >= 0.0 && tr.spacing > 0.0 && tr.spacing.is_finite() && tr.mass >= 0.0 && tr.mass.is_finite())
            {
                return bad(format!("invalid atom train {tr:?}"));
            }
            if tr.count > 0 && tr.time(tr.count - 1) > self.horizon * (1.0 + 1e-12) {
                return bad(format!("atom train {tr:?} runs past the horizon"));
            }
        }
        Ok(())
    }

    fn atom_stream(&self) -> AtomStream<'_> {
        AtomStream { policy: self, list_pos: 0, train_pos: vec![0; self.trains.len()] }
    }

    fn rate_at(&self, idx: Option<usize>) -> f64 {
        idx.map_or(0.0, |i| self.flow[i].rate)
    }
}

/// Merges the atom list and the trains in time order.
struct AtomStream<'a> {
    policy: &'a ContinuousPolicy,
    list_pos: usize,
    train_pos: Vec<usize>,
}

impl AtomStream<'_> {
    fn peek_time(&self) -> Option<f64> {
        let mut best = self.policy.atoms.get(self.list_pos).map(|a| a.t);
        for (tr, &i) in self.policy.trains.iter().zip(&self.train_pos) {
            if i < tr.count {
                let t = tr.time(i);
                best = Some(best.map_or(t, |b: f64| b.min(t)));
            }
        }
        best
    }

    /// Total mass of all atoms at exactly time `t`, consuming them.
    fn take_at(&mut self, t: f64) -> f64 {
        let mut mass = 0.0;
        while let Some(a) = self.policy.atoms.get(self.list_pos) {
            if a.t != t {
                break;
            }
            mass += a.mass;
            self.list_pos += 1;
        }
        for (tr, i) in self.policy.trains.iter().zip(self.train_pos.iter_mut()) {
            while *i < tr.count && tr.time(*i) == t {
                mass += tr.mass;
                *i += 1;
            }
        }
        mass
    }
}

/// Flow-cost measure: densities over intervals plus point masses.
///
/// Sampling time (positive-density intervals and atom instants) pays density
/// `f`. A gap without sampling pays density `f` if it lasts at most one time
/// unit; otherwise it is free and resuming pays a point mass `f`. The first
/// sampling instant also pays a point mass `f`. Gaps after the last sampling
/// are free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowCostMeter {
    /// `(start, end, rate)` intervals.
    pub densities: Vec<(f64, f64, f64)>,
    /// `(t, mass)` point masses.
    pub masses: Vec<(f64, f64)>,
}

impl FlowCostMeter {
    pub fn from_policy(policy: &ContinuousPolicy, f: f64) -> Result<Self> {
        policy.validate()?;
        let mut meter = FlowCostMeter { densities: vec![], masses: vec![] };
        if f == 0.0 {
            return Ok(meter);
        }
        let h = policy.horizon;
        // sampling components as closed intervals, atoms being degenerate
        let mut comps: Vec<(f64, f64)> = Vec::new();
        for (i, seg) in policy.flow.iter().enumerate() {
            let end = policy.flow.get(i + 1).map_or(h, |n| n.start).min(h);
            if seg.rate > 0.0 && end > seg.start {
                comps.push((seg.start, end));
            }
        }
        let mut stream = policy.atom_stream();
        while let Some(t) = stream.peek_time() {
            if stream.take_at(t) > 0.0 {
                comps.push((t, t));
            }
        }
        comps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (a, b) in comps {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        for (i, &(a, b)) in merged.iter().enumerate() {
            if i == 0 {
                meter.masses.push((a, f));
            } else {
                let prev_end = merged[i - 1].1;
                if a - prev_end <= 1.0 {
                    meter.densities.push((prev_end, a, f));
                } else {
                    meter.masses.push((a, f));
                }
            }
            if b > a {
                meter.densities.push((a, b, f));
            }
        }
        Ok(meter)
    }

    pub fn total(&self) -> f64 {
        self.cumulative(f64::INFINITY)
    }

    /// `φ([0, t])`.
    pub fn cumulative(&self, t: f64) -> f64 {
        let d: f64 = self.densities.iter().map(|&(a, b, r)| r * (b.min(t) - a).max(0.0)).sum();
        let m: f64 = self.masses.iter().filter(|&&(s, _)| s <= t).map(|&(_, m)| m).sum();
        d + m
    }
}

/// Options for [`simulate_continuous`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSimOptions {
    /// Spacing of dense `(t, v)` output; `None` records only event times.
    pub output_step: Option<f64>,
    /// Keep one record per atom. Disable for very long atom trains.
    pub record_atoms: bool,
}

impl Default for ContinuousSimOptions {
    fn default() -> Self {
        ContinuousSimOptions { output_step: Some(0.01), record_atoms: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    pub v: f64,
    /// Cumulative spend `∫s + Σa + φ` up to `t`.
    pub spend: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomRecord {
    pub t: f64,
    /// Left limit `ṽ(t)`.
    pub v_left: f64,
    pub v_right: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousTrace {
    pub c: f64,
    pub horizon: f64,
    pub points: Vec<TracePoint>,
    pub atoms: Vec<AtomRecord>,
    pub atom_count: usize,
    /// `∫ s + Σ a`.
    pub samples: f64,
    /// `φ([0, T])`.
    pub flow_cost: f64,
    /// Time-average of `min(v, c)`.
    pub average_cost: f64,
    /// Time-average of `max(c − v, 0)`.
    pub average_value: f64,
    pub budget_valid: bool,
    pub first_violation: Option<f64>,
    /// Smallest banked budget `B t − spend(t)` observed.
    pub min_balance: f64,
    pub final_variance: f64,
}

impl ContinuousTrace {
    pub fn total_spend(&self) -> f64 {
        self.samples + self.flow_cost
    }
}

/// Exact simulation of a continuous policy from prior variance `v0`.
pub fn simulate_continuous(
    policy: &ContinuousPolicy,
    params: &ContinuousParams,
    v0: f64,
    opts: ContinuousSimOptions,
) -> Result<ContinuousTrace> {
    policy.validate()?;
    params.validate()?;
    ensure(v0.is_finite() && v0 >= 0.0, || Error::InvalidParameter(format!("v0 must be >= 0, got {v0}")))?;
    if let Some(step) = opts.output_step {
        ensure(step > 0.0 && step.is_finite(), || Error::InvalidParameter("output step must be > 0".into()))?;
    }
    let (c, f, b, h) = (params.c, params.f, params.budget, policy.horizon);
    let mut sim = Sim {
        budget: b,
        v: v0,
        spend: 0.0,
        samples: 0.0,
        phi: 0.0,
        loss: 0.0,
        min_balance: f64::INFINITY,
        first_violation: None,
        points: Vec::new(),
        atoms: Vec::new(),
        atom_count: 0,
    };
    sim.check(0.0);
    let mut out_k: usize = 0;
    let mut emit =
        |sim: &mut Sim, t_end: f64, rate_total: f64, density: f64, t0: f64, v_start: f64, spend_start: f64| {
            if let Some(step) = opts.output_step {
                loop {
                    let t = out_k as f64 * step;
                    if t >= t_end {
                        break;
                    }
                    let v = evolve_raw(v_start, density, t - t0);
                    sim.points.push(TracePoint { t, v, spend: spend_start + rate_total * (t - t0) });
                    out_k += 1;
                }
            }
        };

    let mut stream = policy.atom_stream();
    let mut flow_idx: Option<usize> = None;
    let mut next_flow = 0usize;
    let mut last_sampling: Option<f64> = None;
    let mut t = 0.0_f64;
    loop {
        while next_flow < policy.flow.len() && policy.flow[next_flow].start <= t {
            flow_idx = Some(next_flow);
            next_flow += 1;
        }
        // atoms at t
        if stream.peek_time() == Some(t) {
            let mass = stream.take_at(t);
            if mass > 0.0 {
                if f > 0.0 {
                    match last_sampling {
                        None => sim.add_phi(f),
                        Some(prev) if t - prev > 1.0 => sim.add_phi(f),
                        _ => {}
                    }
                }
                let left = sim.v;
                sim.v = apply_atom(sim.v, mass);
                sim.samples += mass;
                sim.spend += mass;
                sim.atom_count += 1;
                if opts.record_atoms {
                    sim.atoms.push(AtomRecord { t, v_left: left, v_right: sim.v, mass });
                }
                last_sampling = Some(t);
                sim.check(t);
            }
        }
        if t >= h {
            break;
        }
        let rate = policy.rate_at(flow_idx);
        let mut t_end = h;
        if let Some(seg) = policy.flow.get(next_flow) {
            t_end = t_end.min(seg.start);
        }
        if let Some(ta) = stream.peek_time() {
            t_end = t_end.min(ta);
        }
        let dt = t_end - t;
        if dt <= 0.0 {
            t = t_end;
            continue;
        }
        let mut phi_rate = 0.0;
        if f > 0.0 {
            if rate > 0.0 {
                match last_sampling {
                    None => sim.add_phi(f),
                    Some(prev) if t - prev > 1.0 => sim.add_phi(f),
                    _ => {}
                }
                phi_rate = f;
            } else if let Some(prev) = last_sampling {
                let resume = next_sampling(policy, &stream, next_flow);
                if resume.is_some_and(|r| r - prev <= 1.0) {
                    phi_rate = f;
                }
            }
        }
        let (v_start, spend_start) = (sim.v, sim.spend);
        emit(&mut sim, t_end, rate + phi_rate, rate, t, v_start, spend_start);
        sim.loss += integral_loss(sim.v, rate, c, dt);
        sim.v = evolve_raw(sim.v, rate, dt);
        sim.samples += rate * dt;
        sim.phi += phi_rate * dt;
        sim.spend += (rate + phi_rate) * dt;
        if rate > 0.0 {
            last_sampling = Some(t_end);
        }
        sim.check(t_end);
        t = t_end;
    }
    // any output points exactly at the horizon not yet emitted
    if let Some(step) = opts.output_step {
        while out_k as f64 * step <= h {
            let tt = out_k as f64 * step;
            sim.points.push(TracePoint { t: tt, v: sim.v, spend: sim.spend });
            out_k += 1;
        }
    }
    let average_cost = sim.loss / h;
    Ok(ContinuousTrace {
        c,
        horizon: h,
        points: sim.points,
        atoms: sim.atoms,
        atom_count: sim.atom_count,
        samples: sim.samples,
        flow_cost: sim.phi,
        average_cost,
        average_value: c - average_cost,
        budget_valid: sim.first_violation.is_none(),
        first_violation: sim.first_violation,
        min_balance: sim.min_balance,
        final_variance: sim.v,
    })
}

struct Sim {
    budget: f64,
    v: f64,
    spend: f64,
    samples: f64,
    phi: f64,
    loss: f64,
    min_balance: f64,
    first_violation: Option<f64>,
    points: Vec<TracePoint>,
    atoms: Vec<AtomRecord>,
    atom_count: usize,
}

impl Sim {
    fn add_phi(&mut self, m: f64) {
        self.phi += m;
        self.spend += m;
    }

    fn check(&mut self, t: f64) {
        let accrued = self.budget * t;
        let bal = accrued - self.spend;
        self.min_balance = self.min_balance.min(bal);
        if self.first_violation.is_none() && bal < -BUDGET_TOL * accrued.max(1.0) {
            self.first_violation = Some(t);
        }
    }
}

/// Next time sampling resumes: the next atom or the next positive-density breakpoint.
fn next_sampling(policy: &ContinuousPolicy, stream: &AtomStream<'_>, next_flow: usize) -> Option<f64> {
    let flow = policy.flow[next_flow.min(policy.flow.len())..].iter().find(|s| s.rate > 0.0).map(|s| s.start);
    match (flow, stream.peek_time()) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

/// Discrete instance approximating a continuous policy on an `ε` grid.
///
/// Round `i` covers `((i−1)ε, iε]` and takes the policy's samples in that
/// interval (atoms at time 0 fall into round 1). The instance has drift `ε`
/// per round, unit noise, budget `Bε` per round and fixed cost `fε`.
pub fn discretize(
    policy: &ContinuousPolicy,
    params: &ContinuousParams,
    eps: f64,
) -> Result<(SamplingSchedule, ModelParams)> {
    policy.validate()?;
    params.validate()?;
    ensure(eps > 0.0 && eps.is_finite(), || Error::InvalidParameter(format!("eps must be > 0, got {eps}")))?;
    let ratio = policy.horizon / eps;
    let n = ratio.round();
    ensure(n >= 1.0 && (ratio - n).abs() <= 1e-9 * ratio.max(1.0), || {
        Error::InvalidParameter(format!("eps = {eps} does not divide the horizon {}", policy.horizon))
    })?;
    let n = n as usize;
    let mut out = vec![0.0; n];
    let round_of = |t: f64| -> usize { ((t / eps - 1e-9).ceil().max(1.0) as usize).min(n) - 1 };
    // flow: integrate the density over each round
    for (i, seg) in policy.flow.iter().enumerate() {
        let end = policy.flow.get(i + 1).map_or(policy.horizon, |s| s.start).min(policy.horizon);
        if seg.rate == 0.0 || end <= seg.start {
            continue;
        }
        let first = ((seg.start / eps).floor() as usize).min(n - 1);
        for (r, slot) in out.iter_mut().enumerate().skip(first) {
            let (a, b) = (r as f64 * eps, (r + 1) as f64 * eps);
            if a >= end {
                break;
            }
            let overlap = b.min(end) - a.max(seg.start);
            if overlap > 0.0 {
                *slot += seg.rate * overlap;
            }
        }
    }
    let mut stream = policy.atom_stream();
    while let Some(t) = stream.peek_time() {
        let m = stream.take_at(t);
        out[round_of(t)] += m;
    }
    let model = ModelParams::new(eps, 1.0, params.c, params.budget * eps)?
        .with_fixed_cost(params.f * eps)?
        .with_v0(params.v0)?;
    Ok((SamplingSchedule::new(out)?, model))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ContinuousParams {
        ContinuousParams::new(1.0, 1.0, 0.0).unwrap()
    }

    #[test]
    fn null_policy_value() {
        let p = params().with_v0(2.0).unwrap();
        let tr = simulate_continuous(&ContinuousPolicy::null(5.0).unwrap(), &p, 2.0, Default::default()).unwrap();
        assert_eq!(tr.average_value, 0.0);
        assert_eq!(tr.average_cost, 1.0);
        assert_eq!(tr.final_variance, 7.0);
    }

    #[test]
    fn single_atom_discontinuity() {
        let pol = ContinuousPolicy::new(vec![], vec![Atom { t: 1.0, mass: 2.0 }], vec![], 2.0).unwrap();
        let tr = simulate_continuous(&pol, &params(), 0.5, Default::default()).unwrap();
        assert_eq!(tr.atoms.len(), 1);
        let a = tr.atoms[0];
        assert!((a.v_left - 1.5).abs() < 1e-15);
        assert!((a.v_right - apply_atom(1.5, 2.0)).abs() < 1e-15);
        assert!((tr.final_variance - (a.v_right + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn meter_matches_simulation() {
        let pol = ContinuousPolicy::new(
            vec![
                FlowSegment { start: 0.5, rate: 1.0 },
                FlowSegment { start: 1.0, rate: 0.0 },
                FlowSegment { start: 1.5, rate: 2.0 },
                FlowSegment { start: 2.0, rate: 0.0 },
            ],
            vec![Atom { t: 4.0, mass: 1.0 }, Atom { t: 4.5, mass: 1.0 }],
            vec![],
            6.0,
        )
        .unwrap();
        let p = ContinuousParams::new(1.0, 5.0, 0.3).unwrap();
        let meter = FlowCostMeter::from_policy(&pol, p.f).unwrap();
        let tr = simulate_continuous(&pol, &p, 1.0, Default::default()).unwrap();
        assert!((meter.total() - tr.flow_cost).abs() < 1e-12);
        // first point mass, density on [0.5,1] and gap [1,1.5] and [1.5,2],
        // point mass at 4 (gap 2), density on gap [4,4.5]
        let expect = 0.3 + 0.3 * 1.5 + 0.3 + 0.3 * 0.5;
        assert!((meter.total() - expect).abs() < 1e-12);
    }

    #[test]
    fn discretize_single_round() {
        let pol = ContinuousPolicy::new(
            vec![FlowSegment { start: 0.0, rate: 2.0 }],
            vec![Atom { t: 0.5, mass: 1.0 }],
            vec![],
            1.0,
        )
        .unwrap();
        let (s, m) = discretize(&pol, &params(), 1.0).unwrap();
        assert_eq!(s.samples(), &[3.0]);
        assert_eq!(m.rho, 1.0);
        assert!(discretize(&pol, &params(), 0.3).is_err());
    }
}
