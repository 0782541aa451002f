//! Chemical recipe model: materials, per-station operations and the
//! `stationFlow` state machine a sample follows.

mod diagnostics;
mod emit;
mod flow;
mod parse;
pub mod units;
mod yaml;

use std::collections::BTreeSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub use diagnostics::{Category, Diagnostic, DiagnosticCode, DiagnosticList, Location};
pub use emit::to_canonical_yaml;
pub use flow::{advance_flow, validate_flow, FlowError};
pub use parse::parse_recipe;
pub use units::{Dimension, Quantity, Unit, UnitError};

pub const START: &str = "start";
pub const END: &str = "end";
pub const DEFAULT_MAX_ITERATIONS: u32 = 1000;
pub const DEFAULT_STABILITY_WINDOW: u32 = 2;

/// Raw recipe text plus where it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecipeDoc {
    pub text: String,
    pub source: String,
}

impl RecipeDoc {
    pub fn new(text: impl Into<String>, source: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            source: source.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub name: String,
    pub liquids: BTreeSet<String>,
    pub solids: BTreeSet<String>,
    /// Station identifier → operations the recipe uses there, in declaration order.
    pub station_ops: IndexMap<String, Vec<OperationSpec>>,
    pub flow: FlowGraph,
}

impl Recipe {
    pub fn operation(&self, station: &str, op_name: &str) -> Option<&OperationSpec> {
        self.station_ops
            .get(station)?
            .iter()
            .find(|op| op.op_name == op_name)
    }

    /// Step and its operation for a non-terminal flow node.
    pub fn step(&self, node: &str) -> Option<(&FlowStep, &OperationSpec)> {
        let step = self.flow.nodes.get(node)?.step.as_ref()?;
        let op = self.operation(&step.station, &step.task.op_name)?;
        Some((step, op))
    }

    pub fn declares_material(&self, name: &str) -> bool {
        self.liquids.contains(name) || self.solids.contains(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationSpec {
    pub op_name: String,
    pub properties: IndexMap<String, PropertyValue>,
    pub output: OutputSpec,
}

impl OperationSpec {
    /// Property values flattened the way the positional `task` tuple lists
    /// them: quantities contribute their number and then their unit.
    pub fn flattened_args(&self) -> Vec<String> {
        let mut out = Vec::new();
        for value in self.properties.values() {
            match value {
                PropertyValue::Quantity(q) => {
                    out.push(units::format_number(q.value));
                    out.push(q.unit.symbol().to_string());
                }
                PropertyValue::Number(n) => out.push(units::format_number(*n)),
                PropertyValue::Text(t) => out.push(t.clone()),
                PropertyValue::Bool(b) => out.push(b.to_string()),
            }
        }
        out
    }

    pub fn quantity_count(&self) -> usize {
        self.properties
            .values()
            .filter(|v| matches!(v, PropertyValue::Quantity(_)))
            .count()
    }

    pub fn text(&self, key: &str) -> Option<&str> {
        match self.properties.get(key)? {
            PropertyValue::Text(t) => Some(t),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum PropertyValue {
    Quantity(Quantity),
    Number(f64),
    Text(String),
    Bool(bool),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<Threshold>,
}

/// Predicate over the reading named by the output that decides whether a
/// successful device outcome counts as success for the flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Threshold {
    Below { limit: f64 },
    Above { limit: f64 },
    /// The last `window` consecutive readings differ pairwise by less than `epsilon`.
    Stable { epsilon: f64, window: u32 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowGraph {
    pub nodes: IndexMap<String, FlowNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowNode {
    /// `None` for the reserved `start` and `end` nodes.
    pub step: Option<FlowStep>,
    pub on_success: Option<String>,
    pub on_fail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowStep {
    pub station: String,
    pub task: TaskRef,
    /// The step's operation carries a threshold predicate.
    pub guarded: bool,
    pub max_iterations: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRef {
    pub op_name: String,
    /// Positional values after the operation name, as written.
    pub args: Vec<String>,
}

impl FlowGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_start(mut self, on_success: &str, on_fail: &str) -> Self {
        self.nodes.insert(
            START.to_string(),
            FlowNode {
                step: None,
                on_success: Some(on_success.to_string()),
                on_fail: Some(on_fail.to_string()),
            },
        );
        self
    }

    pub fn with_step(
        mut self,
        name: &str,
        station: &str,
        op_name: &str,
        on_success: &str,
        on_fail: &str,
        guarded: bool,
    ) -> Self {
        self.nodes.insert(
            name.to_string(),
            FlowNode {
                step: Some(FlowStep {
                    station: station.to_string(),
                    task: TaskRef {
                        op_name: op_name.to_string(),
                        args: Vec::new(),
                    },
                    guarded,
                    max_iterations: DEFAULT_MAX_ITERATIONS,
                }),
                on_success: Some(on_success.to_string()),
                on_fail: Some(on_fail.to_string()),
            },
        );
        self
    }

    pub fn with_end(mut self) -> Self {
        self.nodes.insert(
            END.to_string(),
            FlowNode {
                step: None,
                on_success: None,
                on_fail: None,
            },
        );
        self
    }

    pub fn contains(&self, node: &str) -> bool {
        self.nodes.contains_key(node)
    }
}
