//! Top-pan balance.

use serde::{Deserialize, Serialize};

use super::{gaussian, parse_params, unsupported, vial_at_station};
use crate::recipe::Unit;
use crate::simlab::world::DEFAULT_TARE_G;
use crate::simlab::{quantize, Device, DeviceCtx, DeviceReply, OperationRequest};
use crate::state::{OperationDescriptor, PluginError, ReadingEffect};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalanceParams {
    pub tare_g: f64,
    pub sigma_g: f64,
    pub resolution_g: f64,
    pub service_ticks: u64,
}

impl Default for BalanceParams {
    fn default() -> Self {
        Self {
            tare_g: DEFAULT_TARE_G,
            sigma_g: 0.001,
            resolution_g: 1e-4,
            service_ticks: 10,
        }
    }
}

pub(super) fn operations() -> Vec<OperationDescriptor> {
    ["record_mass", "check_mass"]
        .into_iter()
        .map(|op| OperationDescriptor::new(op).reading("mass", Unit::Gram, ReadingEffect::Measurement))
        .collect()
}

pub(super) fn build(id: &str, params: &serde_json::Value) -> Result<Box<dyn Device>, PluginError> {
    Ok(Box::new(Balance(parse_params(id, params)?)))
}

struct Balance(BalanceParams);

impl Device for Balance {
    fn execute(&self, req: &OperationRequest, ctx: &mut DeviceCtx<'_>) -> DeviceReply {
        if !matches!(req.op.as_str(), "record_mass" | "check_mass") {
            return unsupported(req);
        }
        let p = &self.0;
        let Some(vial) = vial_at_station(req, ctx) else {
            return DeviceReply::failed("no_vial", p.service_ticks);
        };
        let mass = p.tare_g + vial.contents_g() + gaussian(&mut ctx.rng, p.sigma_g);
        DeviceReply::ok(p.service_ticks).reading("mass", quantize(mass, p.resolution_g), Unit::Gram)
    }
}
