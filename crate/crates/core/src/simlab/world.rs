//! Physical view of a vial, rebuilt from the workflow state.

use std::collections::BTreeMap;

use crate::recipe::{Quantity, Unit};
use crate::state::{Phase, ReadingEffect, SampleId, WorkflowState};

/// Empty crimp-top vial.
pub const DEFAULT_TARE_G: f64 = 10.0;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vial {
    /// mg of each solid dispensed into the vial.
    pub solids: BTreeMap<String, f64>,
    /// mL of each liquid currently in the vial.
    pub liquids: BTreeMap<String, f64>,
    pub liquid_g: f64,
    /// Solid mass not yet in solution, as last reported by the stirrer.
    pub undissolved_mg: f64,
}

impl Vial {
    pub fn solids_mg(&self) -> f64 {
        self.solids.values().sum()
    }

    pub fn liquid_ml(&self) -> f64 {
        self.liquids.values().sum()
    }

    /// Contents only, without the vial.
    pub fn contents_g(&self) -> f64 {
        self.solids_mg() / 1000.0 + self.liquid_g
    }

    /// Undissolved share of the solids, 0 when there are none.
    pub fn undissolved_fraction(&self) -> f64 {
        let total = self.solids_mg();
        if total <= 0.0 {
            0.0
        } else {
            (self.undissolved_mg / total).clamp(0.0, 1.0)
        }
    }
}

pub fn vial(state: &WorkflowState, sample: SampleId) -> Option<Vial> {
    let s = state.samples.get(&sample)?;
    let mut v = Vial::default();
    for (name, amount) in &s.contents {
        let Some(m) = state.materials.get(name) else { continue };
        let units = amount.to_units();
        match m.phase {
            Phase::Solid => {
                v.solids.insert(name.clone(), units);
            }
            Phase::Liquid => {
                v.liquids.insert(name.clone(), units);
                v.liquid_g += units * m.density.unwrap_or(1.0);
            }
        }
    }
    // dispensed solid starts undissolved; the stirrer reports what remains
    for outcome in s.station_outcomes().filter(|o| o.success) {
        let Some(descriptor) = state.stations.get(&outcome.actor).and_then(|st| st.descriptor(&outcome.op)) else {
            continue;
        };
        for spec in &descriptor.readings {
            let Some(reading) = outcome.readings.get(&spec.name) else { continue };
            let mg = Quantity::new(reading.value, reading.unit).convert_to(Unit::Milligram).ok();
            match (&spec.effect, mg) {
                (ReadingEffect::AddsMaterial { .. }, Some(q)) => v.undissolved_mg += q.value,
                (ReadingEffect::SetsUndissolved, Some(q)) => v.undissolved_mg = q.value,
                _ => {}
            }
        }
    }
    v.undissolved_mg = v.undissolved_mg.clamp(0.0, v.solids_mg());
    Some(v)
}
