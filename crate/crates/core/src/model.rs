//! Gaussian drift model: parameters, the per-round variance recursion and
//! trace accounting.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Parameters of a Gaussian drift instance.
///
/// `rho` is the drift variance added every round, `sigma` the noise variance
/// of one sample, `c` the loss of the outside option, `budget` the sample
/// budget accrued per round and `z` the fixed cost charged in any round that
/// takes samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsDoc", into = "ParamsDoc")]
pub struct ModelParams {
    pub rho: f64,
    pub sigma: f64,
    pub c: f64,
    pub budget: f64,
    pub z: f64,
    pub v0: f64,
    pub fractional_samples: bool,
}

#[derive(Serialize, Deserialize)]
struct ParamsDoc {
    rho: f64,
    sigma: f64,
    c: f64,
    #[serde(rename = "B")]
    budget: f64,
    #[serde(default)]
    z: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v0: Option<f64>,
    #[serde(default = "default_fractional")]
    fractional_samples: bool,
}

fn default_fractional() -> bool {
    true
}

impl TryFrom<ParamsDoc> for ModelParams {
    type Error = Error;
    fn try_from(d: ParamsDoc) -> Result<Self> {
        let p = ModelParams {
            rho: d.rho,
            sigma: d.sigma,
            c: d.c,
            budget: d.budget,
            z: d.z,
            v0: d.v0.unwrap_or(d.rho),
            fractional_samples: d.fractional_samples,
        };
        p.validate()?;
        Ok(p)
    }
}

impl From<ModelParams> for ParamsDoc {
    fn from(p: ModelParams) -> Self {
        ParamsDoc {
            rho: p.rho,
            sigma: p.sigma,
            c: p.c,
            budget: p.budget,
            z: p.z,
            v0: Some(p.v0),
            fractional_samples: p.fractional_samples,
        }
    }
}

impl ModelParams {
    /// Instance with no fixed cost, `v0 = rho` and fractional samples enabled.
    pub fn new(rho: f64, sigma: f64, c: f64, budget: f64) -> Result<Self> {
        let p = ModelParams { rho, sigma, c, budget, z: 0.0, v0: rho, fractional_samples: true };
        p.validate()?;
        Ok(p)
    }

    pub fn with_fixed_cost(mut self, z: f64) -> Result<Self> {
        self.z = z;
        self.validate()?;
        Ok(self)
    }

    pub fn with_v0(mut self, v0: f64) -> Result<Self> {
        self.v0 = v0;
        self.validate()?;
        Ok(self)
    }

    pub fn with_fractional(mut self, fractional: bool) -> Self {
        self.fractional_samples = fractional;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("rho", self.rho), ("sigma", self.sigma), ("c", self.c), ("B", self.budget)];
        for (name, x) in positive {
            ensure(x.is_finite() && x > 0.0, || {
                Error::InvalidParameter(format!("{name} must be finite and > 0, got {x}"))
            })?;
        }
        for (name, x) in [("z", self.z), ("v0", self.v0)] {
            ensure(x.is_finite() && x >= 0.0, || {
                Error::InvalidParameter(format!("{name} must be finite and >= 0, got {x}"))
            })?;
        }
        Ok(())
    }

    /// Per-round spend `s + z·1[s > 0]`.
    pub fn cost(&self, s: f64) -> f64 {
        if s > 0.0 {
            s + self.z
        } else {
            0.0
        }
    }

    /// Rejects negative, non-finite and (in integer mode) fractional counts.
    pub fn check_samples(&self, s: f64) -> Result<()> {
        ensure(s.is_finite() && s >= 0.0, || {
            Error::InvalidParameter(format!("sample count must be finite and >= 0, got {s}"))
        })?;
        ensure(self.fractional_samples || s.fract() == 0.0, || {
            Error::InvalidParameter(format!("integer mode requires whole sample counts, got {s}"))
        })
    }
}

/// Variance after the round's drift, before any samples.
pub fn innovation(v: f64, params: &ModelParams) -> f64 {
    v + params.rho
}

/// Posterior variance after `s` samples with no drift in between.
pub fn observe(v: f64, s: f64, sigma: f64) -> f64 {
    v / (1.0 + (s / sigma) * v)
}

/// One round of the variance recursion: drift, then `s` samples.
pub fn kalman_step(v: f64, s: f64, params: &ModelParams) -> Result<f64> {
    ensure(v.is_finite() && v >= 0.0, || {
        Error::InvalidParameter(format!("variance must be finite and >= 0, got {v}"))
    })?;
    params.check_samples(s)?;
    Ok(step_unchecked(v, s, params))
}

#[inline]
pub(crate) fn step_unchecked(v: f64, s: f64, params: &ModelParams) -> f64 {
    let vt = v + params.rho;
    vt / (1.0 + (s / params.sigma) * vt)
}

/// Samples needed to bring variance `v_from` down to `v_target` without drift.
pub fn samples_to_reach(v_from: f64, v_target: f64, sigma: f64) -> Result<f64> {
    ensure(v_target > 0.0 && v_target <= v_from, || {
        Error::InvalidParameter(format!(
            "target variance must satisfy 0 < target <= from, got target {v_target}, from {v_from}"
        ))
    })?;
    if v_from.is_infinite() {
        return Ok(sigma / v_target);
    }
    Ok((sigma * (1.0 / v_target - 1.0 / v_from)).max(0.0))
}

/// One round of a variance trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub v_pre: f64,
    pub s: f64,
    pub v_post: f64,
    pub loss: f64,
    pub value: f64,
    /// Banked budget `B·t − Σ C(s)` after this round.
    pub balance: f64,
}

/// Per-round posterior variances with loss and value accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceTrace {
    pub c: f64,
    pub v0: f64,
    pub records: Vec<RoundRecord>,
}

impl VarianceTrace {
    pub(crate) fn build(params: &ModelParams, v0: f64, samples: &[f64], step: impl Fn(f64, f64) -> f64) -> Self {
        let mut records = Vec::with_capacity(samples.len());
        let mut v = v0;
        let mut spent = 0.0;
        for (i, &s) in samples.iter().enumerate() {
            let t = i + 1;
            let v_pre = innovation(v, params);
            let v_post = if s > 0.0 { step(v, s) } else { v_pre };
            spent += params.cost(s);
            records.push(RoundRecord {
                t,
                v_pre,
                s,
                v_post,
                loss: v_post.min(params.c),
                value: (params.c - v_post).max(0.0),
                balance: params.budget * t as f64 - spent,
            });
            v = v_post;
        }
        VarianceTrace { c: params.c, v0, records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Posterior variance after the last round (or `v0` when empty).
    pub fn final_variance(&self) -> f64 {
        self.records.last().map_or(self.v0, |r| r.v_post)
    }

    pub fn posteriors(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.v_post).collect()
    }
}

/// Mean per-round loss `min(v, c)`.
pub fn trace_cost(trace: &VarianceTrace) -> Result<f64> {
    ensure(!trace.is_empty(), || Error::EmptyTrace)?;
    Ok(trace.records.iter().map(|r| r.loss).sum::<f64>() / trace.len() as f64)
}

/// Mean per-round value `max(c − v, 0)`.
pub fn trace_value(trace: &VarianceTrace) -> Result<f64> {
    ensure(!trace.is_empty(), || Error::EmptyTrace)?;
    Ok(trace.records.iter().map(|r| r.value).sum::<f64>() / trace.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> ModelParams {
        ModelParams::new(1.0, 1.0, 0.75, 1.0).unwrap()
    }

    #[test]
    fn innovation_adds_drift() {
        assert_eq!(innovation(1.0, &unit()), 2.0);
        let p = ModelParams::new(0.5, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(innovation(0.0, &p), 0.5);
    }

    #[test]
    fn kalman_step_zero_samples_is_innovation() {
        assert_eq!(kalman_step(1.0, 0.0, &unit()).unwrap(), 2.0);
    }

    #[test]
    fn negative_and_fractional_counts() {
        assert!(kalman_step(1.0, -1.0, &unit()).is_err());
        let int = unit().with_fractional(false);
        assert!(kalman_step(1.0, 0.5, &int).is_err());
        assert!(kalman_step(1.0, 2.0, &int).is_ok());
    }

    #[test]
    fn samples_to_reach_examples() {
        assert_eq!(samples_to_reach(2.0, 2.0, 1.0).unwrap(), 0.0);
        assert!((samples_to_reach(1.0, 0.5, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(samples_to_reach(1.0, 0.0, 1.0).is_err());
        assert!(samples_to_reach(1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn params_reject_bad_values() {
        assert!(ModelParams::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 1.0, 1.0, -1.0).is_err());
        assert!(unit().with_fixed_cost(-0.1).is_err());
    }

    #[test]
    fn params_json_defaults_v0_to_rho() {
        let p: ModelParams = serde_json::from_str(r#"{"rho":2,"sigma":1,"c":1,"B":1}"#).unwrap();
        assert_eq!(p.v0, 2.0);
        assert_eq!(p.z, 0.0);
        let back: ModelParams = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn empty_trace_rejected() {
        let t = VarianceTrace { c: 1.0, v0: 0.0, records: vec![] };
        assert_eq!(trace_cost(&t), Err(Error::EmptyTrace));
        assert_eq!(trace_value(&t), Err(Error::EmptyTrace));
    }
}
