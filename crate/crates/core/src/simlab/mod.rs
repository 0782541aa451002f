//! Simulated lab: device models behind an in-process request/reply bus.
//!
//! Devices hold no mutable state. What a vial physically contains is derived
//! from the workflow state and the readings already recorded in its history,
//! so a device's reply depends only on the state it is shown, the request and
//! the request's seeded RNG.

mod bus;
mod devices;
mod rng;
mod scenario;
pub mod world;

use std::collections::BTreeMap;
use std::sync::Arc;

use indexmap::IndexMap;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::recipe::{PropertyValue, Unit};
use crate::state::{Plugin, Reading, RobotJob, SampleId, WorkflowState};

pub use bus::{Bus, BusError, DispatchError, Health, Poll};
pub use devices::{
    BalanceParams, HotplateParams, PumpParams, QuantosParams, RobotParams, BALANCE, FRANKA_PANDA, HOTPLATE_STIRRER,
    KUKA_KMR, PERISTALTIC_PUMP, QUANTOS,
};
pub use rng::request_rng;
pub use scenario::{FaultKind, FaultSpec, Scenario, ScenarioError, Trigger, DEFAULT_HOLD_TICKS};

/// A command for one device, identified by an idempotency key: the same key
/// always denotes the same physical action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationRequest {
    pub key: String,
    pub device: String,
    pub sample: SampleId,
    pub op: String,
    pub params: IndexMap<String, PropertyValue>,
    /// Flow node, for station operations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<String>,
    /// The job, for robot operations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub job: Option<RobotJob>,
}

impl OperationRequest {
    /// Numeric value of a quantity parameter, converted to `unit`.
    pub fn quantity(&self, name: &str, unit: Unit) -> Result<f64, String> {
        match self.params.get(name) {
            Some(PropertyValue::Quantity(q)) => q
                .convert_to(unit)
                .map(|q| q.value)
                .map_err(|e| format!("parameter '{name}': {e}")),
            Some(other) => Err(format!("parameter '{name}' is not a quantity: {other:?}")),
            None => Err(format!("missing parameter '{name}'")),
        }
    }

    pub fn optional_quantity(&self, name: &str, unit: Unit) -> Result<Option<f64>, String> {
        if self.params.contains_key(name) {
            self.quantity(name, unit).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn text(&self, name: &str) -> Result<&str, String> {
        match self.params.get(name) {
            Some(PropertyValue::Text(t)) => Ok(t),
            _ => Err(format!("missing text parameter '{name}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceReply {
    pub success: bool,
    pub readings: BTreeMap<String, Reading>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Simulated seconds the operation occupies the device.
    pub service_ticks: u64,
}

impl DeviceReply {
    pub fn ok(service_ticks: u64) -> Self {
        Self {
            success: true,
            readings: BTreeMap::new(),
            reason: None,
            service_ticks,
        }
    }

    pub fn failed(reason: impl Into<String>, service_ticks: u64) -> Self {
        Self {
            success: false,
            readings: BTreeMap::new(),
            reason: Some(reason.into()),
            service_ticks,
        }
    }

    pub fn reading(mut self, name: &str, value: f64, unit: Unit) -> Self {
        self.readings.insert(name.to_string(), Reading::new(value, unit));
        self
    }
}

pub struct DeviceCtx<'a> {
    /// State as of dispatch; the target sample is held by this device.
    pub state: &'a WorkflowState,
    /// Seeded from (scenario seed, device, request key).
    pub rng: ChaCha8Rng,
    pub tick: u64,
}

pub trait Device: Send + Sync {
    fn execute(&self, req: &OperationRequest, ctx: &mut DeviceCtx<'_>) -> DeviceReply;
}

/// The instruments and robots shipped with the simulator.
pub fn builtin_plugins() -> Vec<Arc<dyn Plugin>> {
    devices::plugins()
}

/// Rounds to a multiple of `step`, as an instrument display would.
pub fn quantize(value: f64, step: f64) -> f64 {
    let q = (value / step).round() * step;
    // drop representation noise such as 15.000000000000002
    let digits = (-step.log10()).ceil().max(0.0) as i32 + 2;
    let scale = 10f64.powi(digits);
    (q * scale).round() / scale
}
