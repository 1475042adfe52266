use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::model::ModelParams;

/// Explicit per-round sample counts, optionally periodic.
///
/// When `period` is set, the stored samples hold a whole number of periods and
/// round `t` of the infinite schedule uses `samples[(t - 1) % period]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSchedule {
    samples: Vec<f64>,
    period: Option<usize>,
}

impl SamplingSchedule {
    /// Finite schedule.
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        check_entries(&samples)?;
        Ok(SamplingSchedule { samples, period: None })
    }

    /// Periodic schedule whose period is the whole stored sequence.
    pub fn periodic(samples: Vec<f64>) -> Result<Self> {
        let r = samples.len();
        Self::with_period(samples, r)
    }

    /// Periodic schedule with period `r`; `r` must divide the stored length and
    /// the stored entries must repeat with that period.
    pub fn with_period(samples: Vec<f64>, r: usize) -> Result<Self> {
        check_entries(&samples)?;
        ensure(r >= 1 && !samples.is_empty() && samples.len().is_multiple_of(r), || {
            Error::InvalidSchedule(format!("period {r} must divide stored length {}", samples.len()))
        })?;
        ensure(samples.iter().enumerate().all(|(i, &s)| s == samples[i % r]), || {
            Error::InvalidSchedule("stored entries do not repeat with the declared period".into())
        })?;
        Ok(SamplingSchedule { samples, period: Some(r) })
    }

    pub fn zeros(len: usize) -> Self {
        SamplingSchedule { samples: vec![0.0; len], period: None }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn period(&self) -> Option<usize> {
        self.period
    }

    pub fn is_periodic(&self) -> bool {
        self.period.is_some()
    }

    /// One period of a periodic schedule.
    pub fn period_samples(&self) -> Option<&[f64]> {
        self.period.map(|r| &self.samples[..r])
    }

    /// Sample count of round `t` (1-based). Periodic schedules repeat; finite
    /// schedules take no samples past their end.
    pub fn at(&self, t: usize) -> f64 {
        assert!(t >= 1, "rounds are 1-based");
        match self.period {
            Some(r) => self.samples[(t - 1) % r],
            None => self.samples.get(t - 1).copied().unwrap_or(0.0),
        }
    }

    /// The first `horizon` rounds as a plain vector.
    pub fn rounds(&self, horizon: usize) -> Vec<f64> {
        (1..=horizon).map(|t| self.at(t)).collect()
    }

    /// Checks the integer-mode requirement against `params`.
    pub fn check_for(&self, params: &ModelParams) -> Result<()> {
        for (i, &s) in self.samples.iter().enumerate() {
            params.check_samples(s).map_err(|e| Error::InvalidSchedule(format!("round {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn total_samples(&self) -> f64 {
        self.samples.iter().sum()
    }

    pub fn is_null(&self) -> bool {
        self.samples.iter().all(|&s| s == 0.0)
    }
}

fn check_entries(samples: &[f64]) -> Result<()> {
    for (i, &s) in samples.iter().enumerate() {
        ensure(s.is_finite() && s >= 0.0, || {
            Error::InvalidSchedule(format!("round {} has invalid sample count {s}", i + 1))
        })?;
    }
    Ok(())
}

/// JSON document pairing a schedule with its model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleDocument {
    #[serde(flatten)]
    pub params: ModelParams,
    pub samples: Vec<f64>,
    #[serde(default)]
    pub periodic: bool,
}

impl ScheduleDocument {
    pub fn new(params: ModelParams, schedule: &SamplingSchedule) -> Self {
        let samples = match schedule.period_samples() {
            Some(p) => p.to_vec(),
            None => schedule.samples().to_vec(),
        };
        ScheduleDocument { params, samples, periodic: schedule.is_periodic() }
    }

    pub fn schedule(&self) -> Result<SamplingSchedule> {
        let s = if self.periodic {
            SamplingSchedule::periodic(self.samples.clone())?
        } else {
            SamplingSchedule::new(self.samples.clone())?
        };
        s.check_for(&self.params)?;
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_lookup_cycles() {
        let s = SamplingSchedule::periodic(vec![0.0, 2.0]).unwrap();
        assert_eq!(s.rounds(5), vec![0.0, 2.0, 0.0, 2.0, 0.0]);
        let f = SamplingSchedule::new(vec![1.0]).unwrap();
        assert_eq!(f.rounds(3), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn period_must_divide_and_repeat() {
        assert!(SamplingSchedule::with_period(vec![1.0, 2.0, 1.0], 2).is_err());
        assert!(SamplingSchedule::with_period(vec![1.0, 2.0, 1.0, 3.0], 2).is_err());
        assert!(SamplingSchedule::with_period(vec![1.0, 2.0, 1.0, 2.0], 2).is_ok());
    }

    #[test]
    fn rejects_negative_entries() {
        assert!(SamplingSchedule::new(vec![1.0, -0.5]).is_err());
        assert!(SamplingSchedule::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn document_round_trip() {
        let text = r#"{"rho":1,"sigma":1,"c":0.75,"B":1,"z":0,"samples":[0,2],"periodic":true}"#;
        let doc = ScheduleDocument::from_json(text).unwrap();
        assert_eq!(doc.schedule().unwrap().period(), Some(2));
        let again = ScheduleDocument::from_json(&doc.to_json().unwrap()).unwrap();
        assert_eq!(again, doc);
    }
}
