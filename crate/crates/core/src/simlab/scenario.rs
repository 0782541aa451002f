//! Scenario documents: seed, fault schedule and physical constants.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_HOLD_TICKS: u64 = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// The instrument never answers; the handler times out.
    TaringTimeout,
    /// The robot or instrument reports a dropped or misplaced vial.
    MisplaceVial,
    /// The device enters safety stop for `hold_ticks`.
    SafetyStop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Trigger {
    /// The device's n-th operation (1-based), counted from the outcomes it has
    /// recorded so far.
    Nth(u32),
    /// Each request independently, from the request's seeded stream.
    Probability(f64),
    AtTick(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub device: String,
    pub kind: FaultKind,
    pub trigger: Trigger,
    /// Restricts the fault to one run of a batch (0-based).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<u32>,
    #[serde(default = "default_hold")]
    pub hold_ticks: u64,
}

fn default_hold() -> u64 {
    DEFAULT_HOLD_TICKS
}

impl FaultSpec {
    pub fn applies_to_run(&self, run: u32) -> bool {
        self.run.is_none_or(|r| r == run)
    }

    /// Safety-stop window, if this is a timed stop.
    pub fn stop_window(&self) -> Option<(u64, u64)> {
        match (self.kind, self.trigger) {
            (FaultKind::SafetyStop, Trigger::AtTick(at)) => Some((at, at + self.hold_ticks)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    /// Per device type: the parameter block its plugin receives.
    #[serde(default)]
    pub physics: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid fault: {0}")]
    InvalidFault(String),
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let scenario: Scenario = crate::from_yaml(text).map_err(ScenarioError::Parse)?;
        scenario.check()?;
        Ok(scenario)
    }

    pub fn check(&self) -> Result<(), ScenarioError> {
        for f in &self.faults {
            match (f.kind, f.trigger) {
                (FaultKind::SafetyStop, Trigger::AtTick(_)) => {}
                (FaultKind::SafetyStop, _) => {
                    return Err(ScenarioError::InvalidFault(format!(
                        "safety_stop on '{}' needs an at_tick trigger",
                        f.device
                    )))
                }
                (_, Trigger::AtTick(_)) => {
                    return Err(ScenarioError::InvalidFault(format!(
                        "{:?} on '{}' is per request; use nth or probability",
                        f.kind, f.device
                    )))
                }
                (_, Trigger::Nth(0)) => {
                    return Err(ScenarioError::InvalidFault("nth is 1-based".into()));
                }
                (_, Trigger::Probability(p)) if !(0.0..=1.0).contains(&p) => {
                    return Err(ScenarioError::InvalidFault(format!("probability {p} outside [0, 1]")));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn physics_for(&self, type_name: &str) -> serde_json::Value {
        self.physics.get(type_name).cloned().unwrap_or(serde_json::Value::Null)
    }
}
