//! Workflow orchestration core for an automated chemistry lab: recipe model,
//! shared state, journal persistence, the simulated lab and the orchestrator.

pub mod orchestrator;
pub mod persistence;
pub mod recipe;
pub mod simlab;
pub mod state;

/// Reads a YAML document through a JSON value so that enums take the
/// `{ variant: value }` map form rather than YAML tags.
pub(crate) fn from_yaml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, String> {
    let value: serde_json::Value = serde_yaml::from_str(text).map_err(|e| e.to_string())?;
    serde_json::from_value(value).map_err(|e| e.to_string())
}
