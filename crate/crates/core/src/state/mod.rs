//! The experiment space: materials, stations, robots and samples, updated
//! only through journaled [`StateEvent`]s.

mod authority;
mod config;
mod event;
mod invariants;
mod ledger;
mod registry;
mod topology;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::recipe::{Recipe, Unit, END, START};

pub use authority::{AuthorityError, Observer, StateAuthority};
pub use config::{init_from_config, AlertRuleConfig, ConfigDoc, ConfigError, MaterialConfig, RobotConfig, StationConfig};
pub use event::{RecordKind, StateError, StateEvent};
pub use invariants::check_invariants;
pub use ledger::Micros;
pub use registry::{
    OperationDescriptor, ParamKind, ParamSpec, Plugin, PluginError, ReadingEffect, ReadingSpec,
    Registry, RegistryError, TargetKind,
};
pub use topology::{TopoEdge, TopoNode, Topology, TopologyError, TopologySpec, LIMBO};

pub type SampleId = u32;
pub type JobId = u64;
pub type AlertId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Solid,
    Liquid,
}

impl Phase {
    /// Unit the stock ledger counts in.
    pub fn stock_unit(self) -> Unit {
        match self {
            Phase::Solid => Unit::Milligram,
            Phase::Liquid => Unit::Millilitre,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub name: String,
    pub phase: Phase,
    /// g/mL; liquids only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    pub initial: Micros,
    pub remaining: Micros,
}

impl Material {
    pub fn unit(&self) -> Unit {
        self.phase.stock_unit()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Processed {
    pub sample: SampleId,
    /// Index into the sample's history.
    pub outcome: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationModel {
    pub id: String,
    pub type_name: String,
    pub location: String,
    pub operational: bool,
    pub safety_stop: bool,
    pub available: bool,
    pub supported_ops: Vec<OperationDescriptor>,
    pub assigned_sample: Option<SampleId>,
    pub processed: Vec<Processed>,
    /// Grace period past the device's own service time before a request times out.
    pub timeout_ticks: u64,
}

impl StationModel {
    pub fn descriptor(&self, op: &str) -> Option<&OperationDescriptor> {
        self.supported_ops.iter().find(|d| d.name == op)
    }

    pub fn accepts_work(&self) -> bool {
        self.available && self.operational && !self.safety_stop && self.assigned_sample.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    Transport,
    Manipulate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    /// Between cells, carried by a mobile robot.
    Transport,
    /// Within one cell.
    Manipulate,
}

impl JobKind {
    pub fn capability(self) -> Capability {
        match self {
            JobKind::Transport => Capability::Transport,
            JobKind::Manipulate => Capability::Manipulate,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JobKind::Transport => "transport",
            JobKind::Manipulate => "manipulate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobotJob {
    pub id: JobId,
    pub kind: JobKind,
    pub sample: SampleId,
    pub from: String,
    pub to: String,
    pub capability: Capability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotModel {
    pub id: String,
    pub type_name: String,
    pub location: String,
    pub mobile: bool,
    pub capabilities: BTreeSet<Capability>,
    pub operational: bool,
    pub safety_stop: bool,
    pub assigned_job: Option<RobotJob>,
    pub processed: Vec<JobId>,
    pub timeout_ticks: u64,
}

impl RobotModel {
    pub fn accepts_work(&self) -> bool {
        self.operational && !self.safety_stop && self.assigned_job.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", content = "target", rename_all = "snake_case")]
pub enum Assignment {
    Unassigned,
    Station(String),
    Robot(String),
    Complete,
    Failed,
}

impl Assignment {
    pub fn is_terminal(&self) -> bool {
        matches!(self, Assignment::Complete | Assignment::Failed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub value: f64,
    pub unit: Unit,
}

impl Reading {
    pub fn new(value: f64, unit: Unit) -> Self {
        Self { value, unit }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationOutcome {
    pub output_name: String,
    /// Station or robot that executed the operation.
    pub actor: String,
    pub op: String,
    /// Flow node for station operations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<String>,
    /// Idempotency key of the request that produced this outcome.
    pub key: String,
    /// Device-level success.
    pub success: bool,
    /// Edge taken in the recipe flow: device success and the output predicate.
    pub flow_success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub readings: BTreeMap<String, Reading>,
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: SampleId,
    pub recipe: Arc<Recipe>,
    /// Submission location; successful samples are brought back here.
    pub home: String,
    pub location: String,
    pub cursor: String,
    pub assignment: Assignment,
    /// Stock-unit micros of each material currently in the vial.
    pub contents: BTreeMap<String, Micros>,
    pub evaporated: BTreeMap<String, Micros>,
    pub history: Vec<OperationOutcome>,
    pub visits: BTreeMap<String, u32>,
    pub last_edge_success: Option<bool>,
    pub submitted_at: u64,
    pub finished_at: Option<u64>,
    pub failure: Option<String>,
    pub terminated_by_cap: bool,
}

impl Sample {
    pub fn new(id: SampleId, recipe: Arc<Recipe>, location: &str, tick: u64) -> Self {
        Sample {
            id,
            recipe,
            home: location.to_string(),
            location: location.to_string(),
            cursor: START.to_string(),
            assignment: Assignment::Unassigned,
            contents: BTreeMap::new(),
            evaporated: BTreeMap::new(),
            history: Vec::new(),
            visits: BTreeMap::new(),
            last_edge_success: None,
            submitted_at: tick,
            finished_at: None,
            failure: None,
            terminated_by_cap: false,
        }
    }

    /// Node the sample is waiting to execute; `start` resolves to its
    /// success target.
    pub fn pending_node(&self) -> &str {
        if self.cursor == START {
            self.recipe.flow.nodes[START].on_success.as_deref().unwrap_or(END)
        } else {
            &self.cursor
        }
    }

    /// Reached `end` along a success edge (or the flow is empty).
    pub fn finished_successfully(&self) -> bool {
        match self.cursor.as_str() {
            START => self.pending_node() == END,
            END => self.last_edge_success == Some(true),
            _ => false,
        }
    }

    pub fn station_outcomes(&self) -> impl Iterator<Item = &OperationOutcome> {
        self.history.iter().filter(|o| o.node.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertSeverity {
    Notify,
    Halt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertCondition {
    MaterialBelow { material: String, below: Micros },
    FailuresAtLeast { count: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertRule {
    pub id: String,
    pub when: AlertCondition,
    pub severity: AlertSeverity,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alert {
    pub id: AlertId,
    pub rule: String,
    pub severity: AlertSeverity,
    pub message: String,
    pub raised_revision: u64,
    pub raised_tick: u64,
    pub acknowledged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlCommand {
    Pause,
    Resume,
    Halt,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlState {
    pub paused: bool,
    pub halted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowState {
    pub materials: BTreeMap<String, Material>,
    pub stations: BTreeMap<String, StationModel>,
    pub robots: BTreeMap<String, RobotModel>,
    pub samples: BTreeMap<SampleId, Sample>,
    pub robot_job_queue: VecDeque<RobotJob>,
    pub alert_rules: Vec<AlertRule>,
    pub alerts: Vec<Alert>,
    /// Rules whose condition currently holds; alerts fire on the rising edge.
    pub active_rules: BTreeSet<String>,
    pub topology: Topology,
    pub control: ControlState,
    pub clock: u64,
    pub revision: u64,
    pub next_sample: SampleId,
    pub next_job: JobId,
    pub next_alert: AlertId,
}

impl WorkflowState {
    /// An unacknowledged halt alert or an operator halt is open.
    pub fn halted(&self) -> bool {
        self.control.halted
            || self
                .alerts
                .iter()
                .any(|a| a.severity == AlertSeverity::Halt && !a.acknowledged)
    }

    /// No new assignments may be made.
    pub fn blocked(&self) -> bool {
        self.control.paused || self.halted()
    }

    pub fn is_device(&self, id: &str) -> bool {
        self.stations.contains_key(id) || self.robots.contains_key(id)
    }

    /// The device currently holding `sample`, if any.
    pub fn holder(&self, sample: SampleId) -> Option<&str> {
        self.stations
            .values()
            .find(|s| s.assigned_sample == Some(sample))
            .map(|s| s.id.as_str())
            .or_else(|| {
                self.robots
                    .values()
                    .find(|r| r.assigned_job.as_ref().is_some_and(|j| j.sample == sample))
                    .map(|r| r.id.as_str())
            })
    }

    pub fn queued_job(&self, sample: SampleId) -> Option<&RobotJob> {
        self.robot_job_queue.iter().find(|j| j.sample == sample)
    }

    pub fn all_terminal(&self) -> bool {
        self.samples.values().all(|s| s.assignment.is_terminal())
    }

    /// Dispensed into vials minus evaporated, per material.
    pub fn in_vials(&self, material: &str) -> Micros {
        self.samples
            .values()
            .filter_map(|s| s.contents.get(material))
            .copied()
            .sum()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::recipe::{parse_recipe, RecipeDoc};

    pub(crate) const LAB: &str = include_str!("../../../../assets/lab.yaml");
    pub(crate) const LISTING: &str = include_str!("../../../../assets/recipes/listing.yaml");

    pub(crate) fn lab_state() -> WorkflowState {
        init_from_config(&ConfigDoc::parse(LAB).unwrap(), &Registry::with_builtins()).unwrap()
    }

    pub(crate) fn tiny_state() -> WorkflowState {
        lab_state()
    }

    pub(crate) fn listing() -> Arc<Recipe> {
        Arc::new(parse_recipe(&RecipeDoc::new(LISTING, "listing")).unwrap())
    }

    #[test]
    fn lab_config_builds() {
        let s = lab_state();
        assert_eq!((s.stations.len(), s.robots.len(), s.materials.len()), (4, 2, 2));
        assert_eq!(s.revision, 1);
        assert!(s.samples.is_empty());
        assert_eq!(s.materials["NaCl"].remaining, Micros::from_units(5000.0));
        assert!(check_invariants(&s).is_empty());
    }

    #[test]
    fn empty_station_list_is_rejected() {
        let mut doc = ConfigDoc::parse(LAB).unwrap();
        doc.stations.clear();
        doc.robots.clear();
        let err = init_from_config(&doc, &Registry::with_builtins()).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)));
    }

    #[test]
    fn unregistered_type_is_named() {
        let mut doc = ConfigDoc::parse(LAB).unwrap();
        doc.stations[0].type_name = "nmr_station".into();
        let err = init_from_config(&doc, &Registry::with_builtins()).unwrap_err();
        assert_eq!(err, ConfigError::Registry(RegistryError::UnknownTypeName("nmr_station".into())));
    }

    #[test]
    fn fixed_robot_cannot_transport() {
        let mut doc = ConfigDoc::parse(LAB).unwrap();
        doc.robots[1].capabilities.insert(Capability::Transport);
        assert!(init_from_config(&doc, &Registry::with_builtins()).is_err());
    }

    #[test]
    fn duplicate_registration_is_refused() {
        let mut r = Registry::with_builtins();
        let dup = crate::simlab::builtin_plugins().remove(0);
        assert_eq!(r.register(dup).unwrap_err(), RegistryError::DuplicateTypeName("quantos".into()));
    }

    #[test]
    fn state_round_trips_through_json() {
        let s = lab_state();
        let text = serde_json::to_string(&s).unwrap();
        let back: WorkflowState = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
