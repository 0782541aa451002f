//! Hotplate stirrer with the camera mounted over it.
//!
//! Stirring relaxes the undissolved solid towards its saturation excess,
//! `u(t) = eq + (u0 - eq)·exp(-d·rpm·t)`. Heating above the threshold
//! evaporates solvent at `k·(T - threshold)/(reference - threshold)` g/s.
//! The camera reports the undissolved fraction as turbidity.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{bad_request, parse_params, unsupported, vial_at_station};
use crate::recipe::{Dimension, Unit};
use crate::simlab::world::Vial;
use crate::simlab::{quantize, Device, DeviceCtx, DeviceReply, OperationRequest};
use crate::state::{OperationDescriptor, ParamKind, PluginError, ReadingEffect};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HotplateParams {
    /// g/s at the reference temperature.
    pub evaporation_rate: f64,
    pub reference_c: f64,
    pub threshold_c: f64,
    /// Per rpm·s.
    pub dissolution_rate: f64,
    pub solubility_mg_per_ml: BTreeMap<String, f64>,
    pub observe_ticks: u64,
}

impl Default for HotplateParams {
    fn default() -> Self {
        Self {
            evaporation_rate: 0.0003,
            reference_c: 60.0,
            threshold_c: 40.0,
            dissolution_rate: 0.02,
            solubility_mg_per_ml: BTreeMap::from([("NaCl".to_string(), 360.0)]),
            observe_ticks: 5,
        }
    }
}

impl HotplateParams {
    pub fn evaporation_per_s(&self, temperature: f64) -> f64 {
        if temperature <= self.threshold_c {
            0.0
        } else {
            self.evaporation_rate * (temperature - self.threshold_c) / (self.reference_c - self.threshold_c)
        }
    }

    /// Solid that cannot dissolve in the vial's solvent, mg.
    pub fn saturation_excess(&self, vial: &Vial) -> f64 {
        let solvent = vial.liquid_ml();
        vial.solids
            .iter()
            .map(|(name, mg)| {
                let solubility = self.solubility_mg_per_ml.get(name).copied().unwrap_or(0.0);
                (mg - solubility * solvent).max(0.0)
            })
            .sum()
    }

    pub fn undissolved_after(&self, vial: &Vial, rpm: f64, seconds: f64) -> f64 {
        let eq = self.saturation_excess(vial);
        let u0 = vial.undissolved_mg;
        if u0 <= eq {
            return u0;
        }
        eq + (u0 - eq) * (-self.dissolution_rate * rpm * seconds).exp()
    }
}

pub(super) fn operations() -> Vec<OperationDescriptor> {
    let rate = ParamKind::Quantity { dimension: Dimension::Rate };
    let time = ParamKind::Quantity { dimension: Dimension::Time };
    vec![
        OperationDescriptor::new("stir")
            .param("stir_speed", rate.clone(), true)
            .param("duration", time.clone(), true)
            .reading("undissolved", Unit::Milligram, ReadingEffect::SetsUndissolved),
        OperationDescriptor::new("heat")
            .param(
                "temperature",
                ParamKind::Quantity {
                    dimension: Dimension::Temperature,
                },
                true,
            )
            .param("duration", time, true)
            .param("stir_speed", rate, false)
            .reading("evaporated", Unit::Gram, ReadingEffect::Evaporates)
            .reading("undissolved", Unit::Milligram, ReadingEffect::SetsUndissolved),
        OperationDescriptor::new("observe").reading("turbidity", Unit::Ntu, ReadingEffect::Measurement),
    ]
}

pub(super) fn build(id: &str, params: &serde_json::Value) -> Result<Box<dyn Device>, PluginError> {
    let params: HotplateParams = parse_params(id, params)?;
    if params.reference_c <= params.threshold_c {
        return Err(PluginError::InvalidParams {
            device: id.to_string(),
            message: "reference_c must exceed threshold_c".into(),
        });
    }
    Ok(Box::new(Hotplate(params)))
}

struct Hotplate(HotplateParams);

fn ticks(seconds: f64) -> u64 {
    seconds.ceil().max(1.0) as u64
}

impl Device for Hotplate {
    fn execute(&self, req: &OperationRequest, ctx: &mut DeviceCtx<'_>) -> DeviceReply {
        let p = &self.0;
        let Some(vial) = vial_at_station(req, ctx) else {
            return DeviceReply::failed("no_vial", 1);
        };
        match req.op.as_str() {
            "stir" => {
                let (rpm, secs) = match (req.quantity("stir_speed", Unit::Rpm), req.quantity("duration", Unit::Second)) {
                    (Ok(r), Ok(s)) => (r, s),
                    (Err(e), _) | (_, Err(e)) => return bad_request(e),
                };
                let u = p.undissolved_after(&vial, rpm, secs);
                DeviceReply::ok(ticks(secs)).reading("undissolved", quantize(u, 1e-6), Unit::Milligram)
            }
            "heat" => {
                let (temp, secs) = match (req.quantity("temperature", Unit::Celsius), req.quantity("duration", Unit::Second)) {
                    (Ok(t), Ok(s)) => (t, s),
                    (Err(e), _) | (_, Err(e)) => return bad_request(e),
                };
                let rpm = match req.optional_quantity("stir_speed", Unit::Rpm) {
                    Ok(r) => r.unwrap_or(0.0),
                    Err(e) => return bad_request(e),
                };
                let evaporated = (p.evaporation_per_s(temp) * secs).min(vial.liquid_g);
                let u = p.undissolved_after(&vial, rpm, secs);
                DeviceReply::ok(ticks(secs))
                    .reading("evaporated", quantize(evaporated, 1e-6), Unit::Gram)
                    .reading("undissolved", quantize(u, 1e-6), Unit::Milligram)
            }
            "observe" => DeviceReply::ok(p.observe_ticks).reading(
                "turbidity",
                quantize(vial.undissolved_fraction(), 1e-6),
                Unit::Ntu,
            ),
            _ => unsupported(req),
        }
    }
}
