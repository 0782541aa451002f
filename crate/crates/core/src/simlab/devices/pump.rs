//! Peristaltic pump dosing by weight: pulses until the balance under the
//! needle reads the target mass within tolerance.

use serde::{Deserialize, Serialize};

use super::{bad_request, gaussian, parse_params, unsupported, vial_at_station};
use crate::recipe::{Dimension, Unit};
use crate::simlab::{quantize, Device, DeviceCtx, DeviceReply, OperationRequest};
use crate::state::{OperationDescriptor, ParamKind, Phase, PluginError, ReadingEffect};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PumpParams {
    /// Relative error of one pulse.
    pub sigma: f64,
    pub max_pulse_ml: f64,
    /// Relative shortfall accepted when the loop stops.
    pub tolerance: f64,
    pub resolution_ml: f64,
    pub base_ticks: u64,
    pub ticks_per_pulse: u64,
    /// Safety bound on the feedback loop.
    pub max_pulses: u32,
}

impl Default for PumpParams {
    fn default() -> Self {
        Self {
            sigma: 0.02,
            max_pulse_ml: 0.5,
            tolerance: 0.01,
            resolution_ml: 0.001,
            base_ticks: 10,
            ticks_per_pulse: 5,
            max_pulses: 200,
        }
    }
}

pub(super) fn operations() -> Vec<OperationDescriptor> {
    vec![OperationDescriptor::new("dispense_liquid")
        .param("liquid", ParamKind::Material { phase: Phase::Liquid }, true)
        .param("volume", ParamKind::Quantity { dimension: Dimension::Volume }, true)
        .reading(
            "dispensed_volume",
            Unit::Millilitre,
            ReadingEffect::AddsMaterial { param: "liquid".into() },
        )
        .reading("pulses", Unit::Count, ReadingEffect::Measurement)]
}

pub(super) fn build(id: &str, params: &serde_json::Value) -> Result<Box<dyn Device>, PluginError> {
    Ok(Box::new(Pump(parse_params(id, params)?)))
}

struct Pump(PumpParams);

impl Device for Pump {
    fn execute(&self, req: &OperationRequest, ctx: &mut DeviceCtx<'_>) -> DeviceReply {
        if req.op != "dispense_liquid" {
            return unsupported(req);
        }
        let p = &self.0;
        let (liquid, target_ml) = match (req.text("liquid"), req.quantity("volume", Unit::Millilitre)) {
            (Ok(l), Ok(v)) => (l, v),
            (Err(e), _) | (_, Err(e)) => return bad_request(e),
        };
        if vial_at_station(req, ctx).is_none() {
            return DeviceReply::failed("no_vial", p.base_ticks);
        }
        let Some(material) = ctx.state.materials.get(liquid) else {
            return bad_request(format!("unknown liquid '{liquid}'"));
        };
        let stock = material.remaining.to_units();
        if stock < target_ml {
            return DeviceReply::failed("insufficient_stock", p.base_ticks);
        }
        let density = material.density.unwrap_or(1.0);

        // the loop works in grams, as the balance under the needle does
        let target_g = target_ml * density;
        let mut dispensed_g = 0.0;
        let mut pulses = 0u32;
        while dispensed_g < target_g * (1.0 - p.tolerance) && pulses < p.max_pulses {
            let nominal = (target_g - dispensed_g).min(p.max_pulse_ml * density);
            dispensed_g += (nominal * (1.0 + gaussian(&mut ctx.rng, p.sigma))).max(0.0);
            pulses += 1;
        }
        let volume = quantize(dispensed_g / density, p.resolution_ml).min(stock);
        DeviceReply::ok(p.base_ticks + p.ticks_per_pulse * u64::from(pulses))
            .reading("dispensed_volume", volume, Unit::Millilitre)
            .reading("pulses", f64::from(pulses), Unit::Count)
    }
}
