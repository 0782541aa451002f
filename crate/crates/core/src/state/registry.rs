//! Station and robot types resolved by name.
//!
//! A plugin bundles the operation descriptors a type offers with a factory
//! for its simulated device, so adding a type touches nothing else.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Phase;
use crate::recipe::{Dimension, Unit};
use crate::simlab::Device;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Station,
    Robot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamKind {
    Quantity { dimension: Dimension },
    Material { phase: Phase },
    Number,
    Text,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParamKind,
    pub required: bool,
}

/// What a reading does to the material ledger when its outcome is applied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "snake_case")]
pub enum ReadingEffect {
    /// Moves the reported amount of the material named by `param` from stock into the vial.
    AddsMaterial { param: String },
    /// Reported grams of liquid left the vial.
    Evaporates,
    /// Reported mg of solid still undissolved.
    SetsUndissolved,
    Measurement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadingSpec {
    pub name: String,
    pub unit: Unit,
    #[serde(flatten)]
    pub effect: ReadingEffect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationDescriptor {
    pub name: String,
    pub params: Vec<ParamSpec>,
    pub readings: Vec<ReadingSpec>,
}

impl OperationDescriptor {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            params: Vec::new(),
            readings: Vec::new(),
        }
    }

    pub fn param(mut self, name: &str, kind: ParamKind, required: bool) -> Self {
        self.params.push(ParamSpec {
            name: name.to_string(),
            kind,
            required,
        });
        self
    }

    pub fn reading(mut self, name: &str, unit: Unit, effect: ReadingEffect) -> Self {
        self.readings.push(ReadingSpec {
            name: name.to_string(),
            unit,
            effect,
        });
        self
    }

    pub fn reading_spec(&self, name: &str) -> Option<&ReadingSpec> {
        self.readings.iter().find(|r| r.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PluginError {
    #[error("invalid parameters for device '{device}': {message}")]
    InvalidParams { device: String, message: String },
}

pub trait Plugin: Send + Sync {
    fn type_name(&self) -> &str;

    fn kind(&self) -> TargetKind;

    /// Operations stations of this type accept; robots return their job kinds.
    fn operations(&self) -> Vec<OperationDescriptor>;

    /// Simulated device for one configured instance. `params` is the
    /// scenario's physics block for this type (`null` when absent).
    fn build_device(&self, id: &str, params: &serde_json::Value) -> Result<Box<dyn Device>, PluginError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("type '{0}' is already registered")]
    DuplicateTypeName(String),
    #[error("type '{0}' is not registered")]
    UnknownTypeName(String),
}

#[derive(Clone, Default)]
pub struct Registry {
    plugins: BTreeMap<String, Arc<dyn Plugin>>,
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.plugins.keys()).finish()
    }
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry preloaded with the built-in lab instruments and robots.
    pub fn with_builtins() -> Self {
        let mut registry = Self::new();
        for plugin in crate::simlab::builtin_plugins() {
            registry
                .register(plugin)
                .expect("built-in type names are distinct");
        }
        registry
    }

    pub fn register(&mut self, plugin: Arc<dyn Plugin>) -> Result<(), RegistryError> {
        let name = plugin.type_name().to_string();
        if self.plugins.contains_key(&name) {
            return Err(RegistryError::DuplicateTypeName(name));
        }
        self.plugins.insert(name, plugin);
        Ok(())
    }

    pub fn get(&self, type_name: &str) -> Result<&Arc<dyn Plugin>, RegistryError> {
        self.plugins
            .get(type_name)
            .ok_or_else(|| RegistryError::UnknownTypeName(type_name.to_string()))
    }

    pub fn contains(&self, type_name: &str) -> bool {
        self.plugins.contains_key(type_name)
    }

    pub fn type_names(&self) -> impl Iterator<Item = &str> {
        self.plugins.keys().map(String::as_str)
    }
}
