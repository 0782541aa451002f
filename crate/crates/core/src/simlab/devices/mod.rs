//! Built-in instrument and robot models.

mod balance;
mod hotplate;
mod pump;
mod quantos;
mod robot;

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::de::DeserializeOwned;

use super::world::{self, Vial};
use super::{Device, DeviceCtx, DeviceReply, OperationRequest};
use crate::state::{OperationDescriptor, Plugin, PluginError, TargetKind};

pub use balance::BalanceParams;
pub use hotplate::HotplateParams;
pub use pump::PumpParams;
pub use quantos::QuantosParams;
pub use robot::RobotParams;

pub const QUANTOS: &str = "quantos";
pub const PERISTALTIC_PUMP: &str = "peristaltic_pump";
pub const BALANCE: &str = "balance";
pub const HOTPLATE_STIRRER: &str = "hotplate_stirrer";
pub const KUKA_KMR: &str = "kuka_kmr";
pub const FRANKA_PANDA: &str = "franka_panda";

type Build = fn(&str, &serde_json::Value) -> Result<Box<dyn Device>, PluginError>;

struct Builtin {
    type_name: &'static str,
    kind: TargetKind,
    operations: fn() -> Vec<OperationDescriptor>,
    build: Build,
}

impl Plugin for Builtin {
    fn type_name(&self) -> &str {
        self.type_name
    }

    fn kind(&self) -> TargetKind {
        self.kind
    }

    fn operations(&self) -> Vec<OperationDescriptor> {
        (self.operations)()
    }

    fn build_device(&self, id: &str, params: &serde_json::Value) -> Result<Box<dyn Device>, PluginError> {
        (self.build)(id, params)
    }
}

pub(super) fn plugins() -> Vec<Arc<dyn Plugin>> {
    let station = |type_name, operations, build| -> Arc<dyn Plugin> {
        Arc::new(Builtin {
            type_name,
            kind: TargetKind::Station,
            operations,
            build,
        })
    };
    let robot = |type_name, build| -> Arc<dyn Plugin> {
        Arc::new(Builtin {
            type_name,
            kind: TargetKind::Robot,
            operations: robot::operations,
            build,
        })
    };
    vec![
        station(QUANTOS, quantos::operations, quantos::build),
        station(PERISTALTIC_PUMP, pump::operations, pump::build),
        station(BALANCE, balance::operations, balance::build),
        station(HOTPLATE_STIRRER, hotplate::operations, hotplate::build),
        robot(KUKA_KMR, robot::build_kmr),
        robot(FRANKA_PANDA, robot::build_panda),
    ]
}

/// Plugin parameters from a physics block; `null` means all defaults.
pub(crate) fn parse_params<T: DeserializeOwned + Default>(device: &str, value: &serde_json::Value) -> Result<T, PluginError> {
    if value.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(value.clone()).map_err(|e| PluginError::InvalidParams {
        device: device.to_string(),
        message: e.to_string(),
    })
}

/// The vial a station request refers to, if it is actually at the station.
fn vial_at_station(req: &OperationRequest, ctx: &DeviceCtx<'_>) -> Option<Vial> {
    let station = ctx.state.stations.get(&req.device)?;
    let sample = ctx.state.samples.get(&req.sample)?;
    if sample.location != station.location {
        return None;
    }
    world::vial(ctx.state, req.sample)
}

/// One draw of N(0, sigma); a zero sigma consumes no randomness.
fn gaussian<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
}

fn bad_request(message: String) -> DeviceReply {
    DeviceReply::failed(format!("bad_request: {message}"), 1)
}

fn unsupported(req: &OperationRequest) -> DeviceReply {
    DeviceReply::failed(format!("unsupported operation '{}'", req.op), 1)
}
