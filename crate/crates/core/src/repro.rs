//! Worked-example numbers and plot data: a two-rate flow trace, a lazy
//! covering of a reference flow, and a tuned threshold run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::binary::{run_threshold, tune_theta, BinaryModel};
use crate::continuous::{
    simulate_continuous, Atom, ContinuousParams, ContinuousPolicy, ContinuousSimOptions, ContinuousTrace, FlowSegment,
};
use crate::error::Result;
use crate::export::{to_file, write_binary_csv, write_continuous_csv};
use crate::model::{trace_cost, ModelParams};
use crate::optimize::vstar_estimate;
use crate::policy::{steady_state, SamplingSchedule};

pub const FIG3_SEED: u64 = 3;
pub const FIG3_ROUNDS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproValue {
    pub label: String,
    pub period: Vec<f64>,
    pub cost: f64,
    /// Three decimals, truncated, as quoted in the reference.
    pub printed: String,
}

/// One square of the lazy covering: an atom at `t` bringing the variance to `c − side`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Square {
    pub t: f64,
    pub side: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproReport {
    pub values: Vec<ReproValue>,
    /// Best on-off value on the worked example and its cost.
    pub vstar_value: f64,
    pub vstar_cost: f64,
    pub fig1_v0: f64,
    pub fig2_squares: Vec<Square>,
    pub fig2_reference_value: f64,
    pub fig2_lazy_value: f64,
    pub fig3_theta: f64,
    pub fig3_mean_samples: f64,
    pub fig3_median_samples: f64,
    pub fig3_accuracy: f64,
    pub files: Vec<PathBuf>,
}

fn truncated(x: f64) -> String {
    format!("{:.3}", (x * 1000.0).floor() / 1000.0)
}

/// Steady costs of one sample per round, two every other round, and
/// `(0, 0, 2, 2)` on `ρ = σ = B = 1`, `c = 0.75`.
pub fn worked_example_values() -> Result<Vec<ReproValue>> {
    let p = ModelParams::new(1.0, 1.0, 0.75, 1.0)?;
    [
        ("one sample per round", vec![1.0]),
        ("two every other round", vec![0.0, 2.0]),
        ("save two, spend two", vec![0.0, 0.0, 2.0, 2.0]),
    ]
    .into_iter()
    .map(|(label, period)| {
        let tr = steady_state(&SamplingSchedule::periodic(period.clone())?, &p, Default::default())?;
        let cost = trace_cost(&tr)?;
        Ok(ReproValue { label: label.into(), period, cost, printed: truncated(cost) })
    })
    .collect()
}

fn dense(step: f64) -> ContinuousSimOptions {
    ContinuousSimOptions { output_step: Some(step), record_atoms: true }
}

/// Two-rate periodic flow started at its periodic variance.
pub fn fig1_policy() -> Result<(ContinuousPolicy, ContinuousParams)> {
    let seg = |start, rate| FlowSegment { start, rate };
    let flow = (0..5).flat_map(|k| [seg(2.0 * k as f64, 0.5), seg(2.0 * k as f64 + 1.0, 3.0)]).collect();
    let policy = ContinuousPolicy::new(flow, vec![], vec![], 10.0)?;
    let one = ContinuousPolicy::new(vec![seg(0.0, 0.5), seg(1.0, 3.0)], vec![], vec![], 2.0)?;
    let base = ContinuousParams::new(0.6, 2.0, 0.0)?;
    let none = ContinuousSimOptions { output_step: None, record_atoms: false };
    let mut v = base.c;
    for _ in 0..200 {
        let next = simulate_continuous(&one, &base, v, none)?.final_variance;
        let done = (next - v).abs() <= 1e-14;
        v = next;
        if done {
            break;
        }
    }
    Ok((policy, base.with_v0(v)?))
}

/// Reference flow policy whose value the lazy squares cover.
pub fn fig2_reference() -> Result<(ContinuousPolicy, ContinuousParams)> {
    let seg = |start, rate| FlowSegment { start, rate };
    let flow = vec![seg(0.0, 0.0), seg(1.0, 2.5), seg(3.0, 0.3), seg(5.0, 4.0), seg(6.5, 0.0)];
    Ok((ContinuousPolicy::new(flow, vec![], vec![], 9.0)?, ContinuousParams::new(1.0, 2.0, 0.0)?.with_v0(1.5)?))
}

/// Covers the region between the trace and `c` with squares hanging from
/// the `c` line, left to right, each just large enough that the trace stays
/// above its bottom edge. Intervals where the trace is within `margin` of
/// `c` are skipped.
pub fn cover_with_squares(trace: &ContinuousTrace, margin: f64) -> Vec<Square> {
    let c = trace.c;
    let pts = &trace.points;
    let mut out = Vec::new();
    let mut i = 0;
    while let Some(k) = (i..pts.len()).find(|&k| pts[k].v < c - margin) {
        let t0 = pts[k].t;
        let mut side = c - pts[k].v;
        loop {
            let low = pts[k..].iter().take_while(|p| p.t <= t0 + side).map(|p| p.v).fold(f64::INFINITY, f64::min);
            if low >= c - side {
                break;
            }
            side = c - low;
        }
        out.push(Square { t: t0, side });
        i = pts.partition_point(|p| p.t < t0 + side);
    }
    out
}

/// The lazy policy whose atoms sit at the squares' left edges.
pub fn lazy_from_squares(squares: &[Square], params: &ContinuousParams, horizon: f64) -> Result<ContinuousPolicy> {
    let c = params.c;
    let mut atoms = Vec::with_capacity(squares.len());
    let mut v = params.v0;
    let mut t_prev = 0.0;
    for sq in squares {
        let left = v + (sq.t - t_prev);
        let target = c - sq.side;
        atoms.push(Atom { t: sq.t, mass: (1.0 / target - 1.0 / left).max(0.0) });
        v = target;
        t_prev = sq.t;
    }
    ContinuousPolicy::new(vec![], atoms, vec![], horizon)
}

/// Computes the reference numbers; with `out_dir` also writes the figure data.
pub fn run_repro(out_dir: Option<&Path>) -> Result<ReproReport> {
    let values = worked_example_values()?;
    let example = ModelParams::new(1.0, 1.0, 0.75, 1.0)?;
    let vstar = vstar_estimate(&example, 1e-6)?;

    let (p1, c1) = fig1_policy()?;
    let fig1 = simulate_continuous(&p1, &c1, c1.v0, dense(0.01))?;

    let (p2, c2) = fig2_reference()?;
    let reference = simulate_continuous(&p2, &c2, c2.v0, dense(0.001))?;
    let squares = cover_with_squares(&reference, 0.01);
    let lazy = lazy_from_squares(&squares, &c2, p2.horizon)?;
    let lazy_trace = simulate_continuous(&lazy, &c2, c2.v0, dense(0.001))?;

    let model = BinaryModel::new(0.01, 0.2, 6.0)?;
    let tuned = tune_theta(&model, 6.0, 0.05, FIG3_SEED)?;
    let fig3 = run_threshold(&model, &tuned.policy, FIG3_ROUNDS, FIG3_SEED)?;

    let mut files = Vec::new();
    if let Some(dir) = out_dir {
        let mut put = |name: &str, f: &mut dyn FnMut(&mut dyn std::io::Write) -> Result<()>| -> Result<()> {
            let path = dir.join(name);
            to_file(&path, |w| f(w))?;
            files.push(path);
            Ok(())
        };
        put("fig1.csv", &mut |w| write_continuous_csv(&fig1, w))?;
        put("fig2_reference.csv", &mut |w| write_continuous_csv(&reference, w))?;
        put("fig2_lazy.csv", &mut |w| write_continuous_csv(&lazy_trace, w))?;
        put("fig2_squares.csv", &mut |w| {
            let mut csv = csv::Writer::from_writer(w);
            for sq in &squares {
                csv.serialize(sq)?;
            }
            csv.flush()?;
            Ok(())
        })?;
        put("fig3.csv", &mut |w| write_binary_csv(&fig3, w))?;
    }
    Ok(ReproReport {
        values,
        vstar_value: vstar.value,
        vstar_cost: vstar.cost,
        fig1_v0: c1.v0,
        fig2_squares: squares,
        fig2_reference_value: reference.average_value,
        fig2_lazy_value: lazy_trace.average_value,
        fig3_theta: tuned.policy.theta,
        fig3_mean_samples: fig3.summary.mean_samples,
        fig3_median_samples: fig3.summary.median_samples,
        fig3_accuracy: fig3.summary.accuracy,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn squares_cover_reference() {
        let (p, c) = fig2_reference().unwrap();
        let tr = simulate_continuous(&p, &c, c.v0, dense(0.001)).unwrap();
        let sq = cover_with_squares(&tr, 0.01);
        assert!(!sq.is_empty());
        for w in sq.windows(2) {
            assert!(w[0].t + w[0].side <= w[1].t + 1e-12);
        }
    }
}
