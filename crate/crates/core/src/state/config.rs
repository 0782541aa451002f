//! Lab configuration document and the initial state built from it.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    AlertCondition, AlertRule, AlertSeverity, Capability, ControlState, Material, Micros, Phase,
    Registry, RegistryError, RobotModel, StationModel, TargetKind, Topology, TopologyError,
    TopologySpec, WorkflowState,
};
use crate::recipe::Quantity;

pub const DEFAULT_TIMEOUT_TICKS: u64 = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDoc {
    #[serde(default)]
    pub materials: Vec<MaterialConfig>,
    #[serde(default)]
    pub stations: Vec<StationConfig>,
    #[serde(default)]
    pub robots: Vec<RobotConfig>,
    pub topology: TopologySpec,
    #[serde(default)]
    pub alerts: Vec<AlertRuleConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub name: String,
    pub phase: Phase,
    /// `"<number> <unit>"`, e.g. `"5 g"` or `"500 mL"`.
    pub quantity: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationConfig {
    pub id: String,
    #[serde(rename = "type")]
    pub type_name: String,
    pub location: String,
    #[serde(default = "yes")]
    pub operational: bool,
    #[serde(default = "default_timeout")]
    pub timeout_ticks: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotConfig {
    pub id: String,
    #[serde(rename = "type")]
    pub type_name: String,
    pub location: String,
    #[serde(default)]
    pub mobile: bool,
    pub capabilities: BTreeSet<Capability>,
    #[serde(default = "yes")]
    pub operational: bool,
    #[serde(default = "default_timeout")]
    pub timeout_ticks: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlertRuleConfig {
    pub id: String,
    pub when: AlertWhen,
    pub severity: AlertSeverity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum AlertWhen {
    MaterialBelow { material: String, quantity: String },
    FailuresAtLeast(u32),
}

fn yes() -> bool {
    true
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_TICKS
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("invalid topology: {0}")]
    Topology(#[from] TopologyError),
}

impl ConfigDoc {
    pub fn parse(text: &str) -> Result<ConfigDoc, ConfigError> {
        crate::from_yaml(text).map_err(ConfigError::Parse)
    }
}

fn invalid(message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(message.into())
}

fn stock_micros(m: &MaterialConfig, quantity: &str) -> Result<Micros, ConfigError> {
    let q: Quantity = quantity
        .parse()
        .map_err(|e| invalid(format!("material '{}': {e}", m.name)))?;
    let q = q
        .convert_to(m.phase.stock_unit())
        .map_err(|e| invalid(format!("material '{}': {e}", m.name)))?;
    if q.value < 0.0 {
        return Err(invalid(format!("material '{}' has negative quantity", m.name)));
    }
    Ok(Micros::from_units(q.value))
}

/// Builds the initial state (revision 1) from a configuration.
pub fn init_from_config(config: &ConfigDoc, registry: &Registry) -> Result<WorkflowState, ConfigError> {
    if config.stations.is_empty() {
        return Err(invalid("a lab needs at least one station"));
    }
    let topology = Topology::try_from(config.topology.clone())?;

    let mut materials = BTreeMap::new();
    for m in &config.materials {
        let density = match m.phase {
            Phase::Liquid => {
                let d = m.density.unwrap_or(1.0);
                if d.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
                    return Err(invalid(format!("liquid '{}' needs a positive density", m.name)));
                }
                Some(d)
            }
            Phase::Solid => None,
        };
        let amount = stock_micros(m, &m.quantity)?;
        let material = Material {
            name: m.name.clone(),
            phase: m.phase,
            density,
            initial: amount,
            remaining: amount,
        };
        if materials.insert(m.name.clone(), material).is_some() {
            return Err(invalid(format!("material '{}' declared twice", m.name)));
        }
    }

    let mut ids = BTreeSet::new();
    let mut stations = BTreeMap::new();
    for s in &config.stations {
        if !ids.insert(s.id.clone()) {
            return Err(invalid(format!("device id '{}' declared twice", s.id)));
        }
        let plugin = registry.get(&s.type_name)?;
        if plugin.kind() != TargetKind::Station {
            return Err(invalid(format!("type '{}' is not a station type", s.type_name)));
        }
        if !topology.contains(&s.location) {
            return Err(invalid(format!("station '{}' is at unknown location '{}'", s.id, s.location)));
        }
        let supported_ops = plugin.operations();
        if supported_ops.is_empty() {
            return Err(invalid(format!("type '{}' offers no operations", s.type_name)));
        }
        stations.insert(
            s.id.clone(),
            StationModel {
                id: s.id.clone(),
                type_name: s.type_name.clone(),
                location: s.location.clone(),
                operational: s.operational,
                safety_stop: false,
                available: true,
                supported_ops,
                assigned_sample: None,
                processed: Vec::new(),
                timeout_ticks: s.timeout_ticks,
            },
        );
    }

    let mut robots = BTreeMap::new();
    for r in &config.robots {
        if !ids.insert(r.id.clone()) {
            return Err(invalid(format!("device id '{}' declared twice", r.id)));
        }
        let plugin = registry.get(&r.type_name)?;
        if plugin.kind() != TargetKind::Robot {
            return Err(invalid(format!("type '{}' is not a robot type", r.type_name)));
        }
        if !topology.contains(&r.location) {
            return Err(invalid(format!("robot '{}' is at unknown location '{}'", r.id, r.location)));
        }
        if r.capabilities.is_empty() {
            return Err(invalid(format!("robot '{}' has no capabilities", r.id)));
        }
        if r.capabilities.contains(&Capability::Transport) && !r.mobile {
            return Err(invalid(format!("robot '{}' cannot transport without being mobile", r.id)));
        }
        robots.insert(
            r.id.clone(),
            RobotModel {
                id: r.id.clone(),
                type_name: r.type_name.clone(),
                location: r.location.clone(),
                mobile: r.mobile,
                capabilities: r.capabilities.clone(),
                operational: r.operational,
                safety_stop: false,
                assigned_job: None,
                processed: Vec::new(),
                timeout_ticks: r.timeout_ticks,
            },
        );
    }

    let mut alert_rules = Vec::new();
    for a in &config.alerts {
        let (when, default_message) = match &a.when {
            AlertWhen::MaterialBelow { material, quantity } => {
                let m = config
                    .materials
                    .iter()
                    .find(|m| &m.name == material)
                    .ok_or_else(|| invalid(format!("alert '{}' names unknown material '{material}'", a.id)))?;
                let below = stock_micros(m, quantity)?;
                (
                    AlertCondition::MaterialBelow { material: material.clone(), below },
                    format!("{material} below {quantity}"),
                )
            }
            AlertWhen::FailuresAtLeast(count) => (
                AlertCondition::FailuresAtLeast { count: *count },
                format!("{count} or more failed samples"),
            ),
        };
        if alert_rules.iter().any(|r: &AlertRule| r.id == a.id) {
            return Err(invalid(format!("alert rule '{}' declared twice", a.id)));
        }
        alert_rules.push(AlertRule {
            id: a.id.clone(),
            when,
            severity: a.severity,
            message: a.message.clone().unwrap_or(default_message),
        });
    }

    Ok(WorkflowState {
        materials,
        stations,
        robots,
        samples: BTreeMap::new(),
        robot_job_queue: VecDeque::new(),
        alert_rules,
        alerts: Vec::new(),
        active_rules: BTreeSet::new(),
        topology,
        control: ControlState::default(),
        clock: 0,
        revision: 1,
        next_sample: 1,
        next_job: 1,
        next_alert: 1,
    })
}
