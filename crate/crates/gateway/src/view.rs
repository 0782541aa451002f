//! Read model served to operators, derived from one state snapshot.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use archemist_core::recipe::Diagnostic;
use archemist_core::state::{AlertSeverity, Assignment, WorkflowState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct StateView {
    pub revision: u64,
    pub tick: u64,
    pub control: ControlView,
    pub samples: Vec<SampleView>,
    pub stations: Vec<StationView>,
    pub robots: Vec<RobotView>,
    /// Robot jobs waiting for a robot.
    pub queued_jobs: usize,
    pub materials: Vec<MaterialView>,
    /// Alerts not yet acknowledged.
    pub open_alerts: Vec<AlertView>,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ControlView {
    pub paused: bool,
    pub halted: bool,
    /// No new assignments are being made.
    pub blocked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentView {
    Unassigned,
    Station,
    Robot,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SampleView {
    pub id: u32,
    pub recipe: String,
    pub cursor: String,
    pub location: String,
    pub assignment: AssignmentView,
    /// Station or robot currently holding the sample.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub holder: Option<String>,
    pub history_len: usize,
    pub submitted_at: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct StationView {
    pub id: String,
    pub type_name: String,
    pub location: String,
    pub operational: bool,
    pub safety_stop: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assigned_sample: Option<u32>,
    pub processed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct RobotView {
    pub id: String,
    pub type_name: String,
    pub location: String,
    pub operational: bool,
    pub safety_stop: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assigned_job: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct MaterialView {
    pub name: String,
    pub unit: String,
    pub initial: f64,
    pub remaining: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct AlertView {
    pub id: u64,
    pub rule: String,
    pub severity: String,
    pub message: String,
    pub raised_tick: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct RunMetrics {
    /// Ticks since the first submission.
    pub elapsed_ticks: u64,
    pub completed: usize,
    pub failed: usize,
    pub in_progress: usize,
}

impl StateView {
    pub fn of(state: &WorkflowState) -> Self {
        let samples: Vec<SampleView> = state
            .samples
            .values()
            .map(|s| {
                let (assignment, holder) = match &s.assignment {
                    Assignment::Unassigned => (AssignmentView::Unassigned, None),
                    Assignment::Station(id) => (AssignmentView::Station, Some(id.clone())),
                    Assignment::Robot(id) => (AssignmentView::Robot, Some(id.clone())),
                    Assignment::Complete => (AssignmentView::Complete, None),
                    Assignment::Failed => (AssignmentView::Failed, None),
                };
                SampleView {
                    id: s.id,
                    recipe: s.recipe.name.clone(),
                    cursor: s.cursor.clone(),
                    location: s.location.clone(),
                    assignment,
                    holder,
                    history_len: s.history.len(),
                    submitted_at: s.submitted_at,
                    finished_at: s.finished_at,
                    failure: s.failure.clone(),
                }
            })
            .collect();
        let count = |a: AssignmentView| samples.iter().filter(|s| s.assignment == a).count();
        let first_submit = state.samples.values().map(|s| s.submitted_at).min();
        let metrics = RunMetrics {
            elapsed_ticks: first_submit.map_or(0, |t| state.clock.saturating_sub(t)),
            completed: count(AssignmentView::Complete),
            failed: count(AssignmentView::Failed),
            in_progress: samples.len() - count(AssignmentView::Complete) - count(AssignmentView::Failed),
        };
        StateView {
            revision: state.revision,
            tick: state.clock,
            control: ControlView {
                paused: state.control.paused,
                halted: state.halted(),
                blocked: state.blocked(),
            },
            stations: state
                .stations
                .values()
                .map(|st| StationView {
                    id: st.id.clone(),
                    type_name: st.type_name.clone(),
                    location: st.location.clone(),
                    operational: st.operational,
                    safety_stop: st.safety_stop,
                    assigned_sample: st.assigned_sample,
                    processed: st.processed.len(),
                })
                .collect(),
            robots: state
                .robots
                .values()
                .map(|r| RobotView {
                    id: r.id.clone(),
                    type_name: r.type_name.clone(),
                    location: r.location.clone(),
                    operational: r.operational,
                    safety_stop: r.safety_stop,
                    assigned_job: r.assigned_job.as_ref().map(|j| j.id),
                })
                .collect(),
            queued_jobs: state.robot_job_queue.len(),
            materials: state
                .materials
                .values()
                .map(|m| MaterialView {
                    name: m.name.clone(),
                    unit: m.unit().symbol().to_string(),
                    initial: m.initial.to_units(),
                    remaining: m.remaining.to_units(),
                })
                .collect(),
            open_alerts: state
                .alerts
                .iter()
                .filter(|a| !a.acknowledged)
                .map(|a| AlertView {
                    id: a.id,
                    rule: a.rule.clone(),
                    severity: match a.severity {
                        AlertSeverity::Notify => "notify".into(),
                        AlertSeverity::Halt => "halt".into(),
                    },
                    message: a.message.clone(),
                    raised_tick: a.raised_tick,
                })
                .collect(),
            samples,
            metrics,
        }
    }
}

/// One balance reading from a sample's history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct MassPoint {
    pub sample: u32,
    pub tick: u64,
    pub device: String,
    pub op: String,
    pub mass_g: f64,
}

/// Every `mass` reading, by sample then tick.
pub fn mass_trace(state: &WorkflowState) -> Vec<MassPoint> {
    state
        .samples
        .values()
        .flat_map(|s| {
            s.history.iter().filter_map(move |o| {
                let r = o.readings.get("mass")?;
                let grams = archemist_core::recipe::Quantity::new(r.value, r.unit)
                    .convert_to(archemist_core::recipe::Unit::Gram)
                    .ok()?;
                Some(MassPoint {
                    sample: s.id,
                    tick: o.tick,
                    device: o.actor.clone(),
                    op: o.op.clone(),
                    mass_g: grams.value,
                })
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DiagnosticView {
    /// Stable dotted code, e.g. `flow.unreachable_end`.
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suggestion: Option<String>,
}

impl From<&Diagnostic> for DiagnosticView {
    fn from(d: &Diagnostic) -> Self {
        DiagnosticView {
            code: d.code.as_str().to_string(),
            message: d.message.clone(),
            line: d.location.map(|l| l.line),
            column: d.location.map(|l| l.column),
            node: d.node.clone(),
            suggestion: d.suggestion.clone(),
        }
    }
}
