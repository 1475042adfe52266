//! Versioned JSON experiment configuration shared by the CLI and tests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::binary::{BinaryModel, ThresholdPolicy, TuneOptions};
use crate::continuous::{ContinuousParams, ContinuousPolicy, ContinuousSimOptions};
use crate::error::{ensure, Error, Result};
use crate::model::ModelParams;
use crate::optimize::{LazyOptions, OracleOptions, VStarOptions};
use crate::policy::{render_lazy, LazyPolicy, OnOffPolicy, SamplingSchedule};

pub const SCHEMA_VERSION: u32 = 1;

/// Model family and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Discrete(ModelParams),
    Continuous(ContinuousParams),
    Binary(BinaryModel),
}

impl ModelSpec {
    pub fn family(&self) -> &'static str {
        match self {
            ModelSpec::Discrete(_) => "discrete",
            ModelSpec::Continuous(_) => "continuous",
            ModelSpec::Binary(_) => "binary",
        }
    }
}

/// Policy to simulate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    /// Explicit per-round counts; `periodic` repeats them forever.
    Schedule {
        samples: Vec<f64>,
        #[serde(default)]
        periodic: bool,
    },
    OnOff {
        period: usize,
        rate: f64,
    },
    Lazy {
        target: f64,
        spacing: usize,
        #[serde(default)]
        burst: Option<usize>,
    },
    Continuous(ContinuousPolicy),
    Threshold(ThresholdPolicy),
    /// Threshold tuned so the expected sampling rate meets the budget.
    TunedThreshold {
        #[serde(default = "default_tune_tol")]
        tol: f64,
        #[serde(default)]
        options: TuneOptions,
    },
    Null,
}

fn default_tune_tol() -> f64 {
    0.05
}

/// Optimizer request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OptimizerSpec {
    Onoff {
        period: usize,
    },
    Vstar {
        #[serde(default)]
        options: VStarOptions,
    },
    LazyDiscrete {
        #[serde(default)]
        options: LazyOptions,
    },
    LazyContinuous,
}

/// Settings for the `verify` suites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifySpec {
    /// Criteria to run; empty runs all of them.
    pub criteria: Vec<u32>,
    /// Scales the number of random instances; 1.0 is the full suite.
    pub scale: f64,
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec { criteria: Vec::new(), scale: 1.0 }
    }
}

/// One experiment: exactly one model family plus what to do with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySpec>,
    /// Rounds (discrete, binary) or time units (continuous) to simulate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuous_output: Option<ContinuousSimOptions>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(model: ModelSpec) -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            name: None,
            model,
            policy: None,
            optimizer: None,
            oracle: None,
            verify: None,
            horizon: None,
            continuous_output: None,
            seed: 0,
            output_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks the schema version and that the policy and optimizer fit the model family.
    pub fn validate(&self) -> Result<()> {
        ensure(self.schema_version == SCHEMA_VERSION, || {
            Error::Config(format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", self.schema_version))
        })?;
        match &self.model {
            ModelSpec::Discrete(p) => p.validate()?,
            ModelSpec::Continuous(p) => p.validate()?,
            ModelSpec::Binary(m) => m.validate()?,
        }
        if let Some(h) = self.horizon {
            ensure(h.is_finite() && h > 0.0, || Error::Config(format!("horizon must be > 0, got {h}")))?;
            if !matches!(self.model, ModelSpec::Continuous(_)) {
                ensure(h.fract() == 0.0, || {
                    Error::Config(format!("horizon must be a whole number of rounds, got {h}"))
                })?;
            }
        }
        if let Some(policy) = &self.policy {
            let ok = matches!(
                (&self.model, policy),
                (_, PolicySpec::Null)
                    | (
                        ModelSpec::Discrete(_),
                        PolicySpec::Schedule { .. } | PolicySpec::OnOff { .. } | PolicySpec::Lazy { .. }
                    )
                    | (ModelSpec::Continuous(_), PolicySpec::Continuous(_))
                    | (ModelSpec::Binary(_), PolicySpec::Threshold(_) | PolicySpec::TunedThreshold { .. })
            );
            ensure(ok, || Error::Config(format!("policy kind does not apply to the {} model", self.model.family())))?;
        }
        if let Some(opt) = &self.optimizer {
            let ok = matches!(
                (&self.model, opt),
                (
                    ModelSpec::Discrete(_),
                    OptimizerSpec::Onoff { .. } | OptimizerSpec::Vstar { .. } | OptimizerSpec::LazyDiscrete { .. }
                ) | (ModelSpec::Continuous(_), OptimizerSpec::LazyContinuous)
            );
            ensure(ok, || {
                Error::Config(format!("optimizer kind does not apply to the {} model", self.model.family()))
            })?;
        }
        if self.oracle.is_some() {
            ensure(matches!(self.model, ModelSpec::Discrete(_)), || {
                Error::Config("the oracle needs a discrete model".into())
            })?;
        }
        Ok(())
    }

    /// Horizon in whole rounds, with a fallback.
    pub fn rounds(&self, default: usize) -> usize {
        self.horizon.map_or(default, |h| h as usize)
    }
}

/// Builds the discrete schedule a policy spec describes.
pub fn discrete_schedule(policy: &PolicySpec, params: &ModelParams, horizon: usize) -> Result<SamplingSchedule> {
    let s = match policy {
        PolicySpec::Schedule { samples, periodic } => {
            if *periodic {
                SamplingSchedule::periodic(samples.clone())?
            } else {
                SamplingSchedule::new(samples.clone())?
            }
        }
        PolicySpec::OnOff { period, rate } => OnOffPolicy::new(*period, *rate)?.schedule(params)?,
        PolicySpec::Lazy { target, spacing, burst } => {
            render_lazy(&LazyPolicy::new(params, *target, *spacing, *burst)?, params, horizon)?
        }
        PolicySpec::Null => SamplingSchedule::zeros(horizon),
        _ => return Err(Error::Config("not a discrete policy".into())),
    };
    s.check_for(params)?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut cfg = ExperimentConfig::new(ModelSpec::Discrete(ModelParams::new(1.0, 1.0, 0.75, 1.0).unwrap()));
        cfg.policy = Some(PolicySpec::Schedule { samples: vec![0.0, 0.0, 2.0, 2.0], periodic: true });
        cfg.oracle = Some(OracleOptions { start_variance: Some(f64::INFINITY), ..Default::default() });
        let text = cfg.to_json().unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn rejects_mismatched_policy() {
        let mut cfg = ExperimentConfig::new(ModelSpec::Binary(BinaryModel::new(0.01, 0.2, 6.0).unwrap()));
        cfg.policy = Some(PolicySpec::OnOff { period: 2, rate: 2.0 });
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_unknown_version() {
        let text = r#"{"schema_version": 9, "model": {"family": "binary", "eps": 0.01, "delta_sig": 0.2, "B": 6}}"#;
        assert!(matches!(ExperimentConfig::from_json(text), Err(Error::Config(_))));
    }
}
