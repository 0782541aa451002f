//! Gravimetric solid dispenser.

use serde::{Deserialize, Serialize};

use super::{bad_request, gaussian, parse_params, unsupported, vial_at_station};
use crate::recipe::{Dimension, Unit};
use crate::simlab::{quantize, Device, DeviceCtx, DeviceReply, OperationRequest};
use crate::state::{OperationDescriptor, ParamKind, Phase, PluginError, ReadingEffect};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantosParams {
    /// Relative dosing error.
    pub sigma: f64,
    pub resolution_mg: f64,
    pub service_ticks: u64,
}

impl Default for QuantosParams {
    fn default() -> Self {
        Self {
            sigma: 0.01,
            resolution_mg: 0.001,
            service_ticks: 30,
        }
    }
}

pub(super) fn operations() -> Vec<OperationDescriptor> {
    vec![OperationDescriptor::new("dispense_solid")
        .param("solid", ParamKind::Material { phase: Phase::Solid }, true)
        .param("mass", ParamKind::Quantity { dimension: Dimension::Mass }, true)
        .reading(
            "final_weight",
            Unit::Milligram,
            ReadingEffect::AddsMaterial { param: "solid".into() },
        )]
}

pub(super) fn build(id: &str, params: &serde_json::Value) -> Result<Box<dyn Device>, PluginError> {
    Ok(Box::new(Quantos(parse_params(id, params)?)))
}

struct Quantos(QuantosParams);

impl Device for Quantos {
    fn execute(&self, req: &OperationRequest, ctx: &mut DeviceCtx<'_>) -> DeviceReply {
        if req.op != "dispense_solid" {
            return unsupported(req);
        }
        let p = &self.0;
        let (solid, target) = match (req.text("solid"), req.quantity("mass", Unit::Milligram)) {
            (Ok(s), Ok(m)) => (s, m),
            (Err(e), _) | (_, Err(e)) => return bad_request(e),
        };
        if vial_at_station(req, ctx).is_none() {
            return DeviceReply::failed("no_vial", p.service_ticks);
        }
        let dispensed = quantize((target * (1.0 + gaussian(&mut ctx.rng, p.sigma))).max(0.0), p.resolution_mg);
        let stock = ctx.state.materials.get(solid).map_or(0.0, |m| m.remaining.to_units());
        if stock < dispensed {
            return DeviceReply::failed("insufficient_stock", p.service_ticks);
        }
        DeviceReply::ok(p.service_ticks).reading("final_weight", dispensed, Unit::Milligram)
    }
}
