//! Optimizers for on-off and lazy policies, the on-off limit estimate and a
//! finite-horizon dynamic-programming oracle that brackets the optimum.

mod lazy;
mod lazy_continuous;
mod onoff;
mod oracle;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::continuous::ContinuousPolicy;
use crate::policy::{LazyPolicy, OnOffPolicy, SamplingSchedule};

pub use lazy::{optimal_lazy_discrete, optimal_lazy_discrete_with, LazyOptions};
pub use lazy_continuous::{optimal_lazy_continuous, ContinuousLazyPolicy};
pub use onoff::{onoff_limit, optimal_onoff_for_period, vstar_estimate, vstar_estimate_with, VStarOptions};
pub use oracle::{dp_oracle, null_value, OracleOptions};

/// The policy an optimizer selected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChosenPolicy {
    OnOff(OnOffPolicy),
    Lazy(LazyPolicy),
    LazyContinuous(ContinuousLazyPolicy),
    Schedule(SamplingSchedule),
    Null,
}

/// Which constraint limits the chosen policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    /// Spends its whole accrual; more budget would raise the value.
    Budget,
    /// Spends less than it accrues; limited by how often it may sample.
    Time,
    None,
}

/// Bounds on the finite-horizon optimum produced by the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
    /// Extra allowance for comparing a horizon-`T` optimum with long-run values.
    pub truncation: f64,
}

impl Bracket {
    /// `upper − lower + truncation`.
    pub fn slack(&self) -> f64 {
        self.upper - self.lower + self.truncation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub evaluations: usize,
    /// Grid sizes used, e.g. `variance` and `budget` points.
    pub grid: BTreeMap<String, usize>,
    pub binding: Binding,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bracket: Option<Bracket>,
    pub metrics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl Diagnostics {
    pub(crate) fn new(binding: Binding) -> Self {
        Diagnostics {
            iterations: 0,
            evaluations: 0,
            grid: BTreeMap::new(),
            binding,
            bracket: None,
            metrics: BTreeMap::new(),
            notes: Vec::new(),
        }
    }
}

/// Optimizer output. `value + cost = c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub policy: ChosenPolicy,
    pub value: f64,
    pub cost: f64,
    pub c: f64,
    /// Explicit schedule realising the policy, when small enough to store.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rendered: Option<SamplingSchedule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub continuous: Option<ContinuousPolicy>,
    pub diagnostics: Diagnostics,
}

impl OptResult {
    pub(crate) fn new(policy: ChosenPolicy, value: f64, c: f64, diagnostics: Diagnostics) -> Self {
        OptResult { policy, value, cost: c - value, c, rendered: None, continuous: None, diagnostics }
    }
}
