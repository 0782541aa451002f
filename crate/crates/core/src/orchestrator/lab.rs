//! Checks that a well-formed recipe can run on the configured lab.

use crate::recipe::{Diagnostic, DiagnosticCode, PropertyValue, Recipe};
use crate::state::{ParamKind, WorkflowState};

fn unsupported(message: String) -> Diagnostic {
    Diagnostic::new(DiagnosticCode::UnsupportedByLab, message)
}

/// Stations, operations, parameters, materials and outputs the recipe uses,
/// checked against the lab's stations and their plugins' descriptors.
pub fn validate_for_lab(recipe: &Recipe, state: &WorkflowState) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for name in recipe.liquids.iter().chain(&recipe.solids) {
        if !state.materials.contains_key(name) {
            out.push(unsupported(format!("material '{name}' is not stocked")));
        }
    }
    for (station_id, ops) in &recipe.station_ops {
        let Some(station) = state.stations.get(station_id) else {
            out.push(unsupported(format!("station '{station_id}' is not configured")));
            continue;
        };
        for op in ops {
            let Some(descriptor) = station.descriptor(&op.op_name) else {
                out.push(unsupported(format!(
                    "station '{station_id}' ({}) does not offer '{}'",
                    station.type_name, op.op_name
                )));
                continue;
            };
            let here = format!("{station_id}.{}", op.op_name);
            for key in op.properties.keys() {
                if !descriptor.params.iter().any(|p| &p.name == key) {
                    out.push(unsupported(format!("{here}: unknown parameter '{key}'")));
                }
            }
            for param in &descriptor.params {
                let Some(value) = op.properties.get(&param.name) else {
                    if param.required {
                        out.push(unsupported(format!("{here}: missing parameter '{}'", param.name)));
                    }
                    continue;
                };
                let problem = match (&param.kind, value) {
                    (ParamKind::Quantity { dimension }, PropertyValue::Quantity(q)) => (q.unit.dimension() != *dimension)
                        .then(|| format!("'{}' must be a {dimension:?} quantity, got {}", param.name, q.unit.symbol())),
                    (ParamKind::Material { phase }, PropertyValue::Text(m)) => match state.materials.get(m) {
                        None => Some(format!("'{}' names unstocked material '{m}'", param.name)),
                        Some(mat) if mat.phase != *phase => Some(format!("'{m}' is not a {phase:?} material")),
                        Some(_) if !recipe.declares_material(m) => Some(format!("'{m}' is not declared by the recipe")),
                        Some(_) => None,
                    },
                    (ParamKind::Number, PropertyValue::Number(_)) | (ParamKind::Text, PropertyValue::Text(_)) => None,
                    (kind, other) => Some(format!("'{}' expects {kind:?}, got {other:?}", param.name)),
                };
                if let Some(p) = problem {
                    out.push(unsupported(format!("{here}: {p}")));
                }
            }
            if descriptor.reading_spec(&op.output.name).is_none() {
                let known: Vec<&str> = descriptor.readings.iter().map(|r| r.name.as_str()).collect();
                out.push(unsupported(format!(
                    "{here}: output '{}' is not one of the readings {known:?}",
                    op.output.name
                )));
            }
        }
    }
    out
}
