//! Mapping a device outcome onto the success or fail edge of the flow.

use std::collections::BTreeMap;

use crate::recipe::{OutputSpec, Threshold};
use crate::state::{OperationOutcome, Reading, StateError};

/// Device success ANDed with the output's threshold predicate.
///
/// `previous` holds earlier values of the same output at the same flow node,
/// oldest first; only the stability predicate looks at them.
pub fn outcome_to_success(
    success: bool,
    readings: &BTreeMap<String, Reading>,
    output: &OutputSpec,
    previous: &[f64],
) -> Result<bool, StateError> {
    if !success {
        return Ok(false);
    }
    let Some(threshold) = output.threshold else {
        return Ok(true);
    };
    let value = readings
        .get(&output.name)
        .map(|r| r.value)
        .ok_or_else(|| StateError::SchemaMismatch(format!("no reading named '{}'", output.name)))?;
    Ok(match threshold {
        Threshold::Below { limit } => value < limit,
        Threshold::Above { limit } => value > limit,
        Threshold::Stable { epsilon, window } => {
            let window = window.max(2) as usize;
            if previous.len() + 1 < window {
                return Ok(false);
            }
            let tail = &previous[previous.len() + 1 - window..];
            tail.iter()
                .chain(std::iter::once(&value))
                .collect::<Vec<_>>()
                .windows(2)
                .all(|w| (w[1] - w[0]).abs() < epsilon)
        }
    })
}

/// Earlier successful values of `output` recorded at `node`.
pub fn previous_values(history: &[OperationOutcome], node: &str, output: &str) -> Vec<f64> {
    history
        .iter()
        .filter(|o| o.success && o.node.as_deref() == Some(node))
        .filter_map(|o| o.readings.get(output).map(|r| r.value))
        .collect()
}
