//! State mutations. Every change to a [`WorkflowState`] is one of these
//! events, so replaying a journal is a plain fold over [`WorkflowState::apply`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    Alert, AlertId, AlertSeverity, Assignment, ControlCommand, JobId, JobKind, Micros,
    OperationOutcome, Processed, ReadingEffect, RobotJob, Sample, SampleId, WorkflowState, LIMBO,
};
use crate::recipe::{advance_flow, FlowError, PropertyValue, Quantity, END, START};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Init,
    Submit,
    Assignment,
    Outcome,
    Alert,
    Ack,
    Control,
    MonitorEvent,
}

impl RecordKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Init => "init",
            RecordKind::Submit => "submit",
            RecordKind::Assignment => "assignment",
            RecordKind::Outcome => "outcome",
            RecordKind::Alert => "alert",
            RecordKind::Ack => "ack",
            RecordKind::Control => "control",
            RecordKind::MonitorEvent => "monitor_event",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StateEvent {
    Init {
        state: Box<WorkflowState>,
    },
    Submit {
        tick: u64,
        samples: Vec<Sample>,
    },
    AssignStation {
        tick: u64,
        sample: SampleId,
        station: String,
        node: String,
    },
    EnqueueJob {
        tick: u64,
        job: RobotJob,
    },
    AssignRobot {
        tick: u64,
        job: JobId,
        robot: String,
    },
    Outcome {
        tick: u64,
        sample: SampleId,
        outcome: OperationOutcome,
    },
    MarkComplete {
        tick: u64,
        sample: SampleId,
    },
    MarkFailed {
        tick: u64,
        sample: SampleId,
        reason: String,
        by_cap: bool,
    },
    DeviceStatus {
        tick: u64,
        device: String,
        operational: bool,
        safety_stop: bool,
    },
    /// An in-flight assignment released without an outcome (recovery, device fault).
    AssignmentReset {
        tick: u64,
        device: String,
        sample: SampleId,
        reason: String,
    },
    MonitorNote {
        tick: u64,
        message: String,
    },
    AlertRaised {
        tick: u64,
        rule: String,
        severity: AlertSeverity,
        message: String,
    },
    AlertCleared {
        tick: u64,
        rule: String,
    },
    Ack {
        tick: u64,
        alert: AlertId,
    },
    Control {
        tick: u64,
        command: ControlCommand,
    },
}

impl StateEvent {
    pub fn kind(&self) -> RecordKind {
        use StateEvent::*;
        match self {
            Init { .. } => RecordKind::Init,
            Submit { .. } => RecordKind::Submit,
            AssignStation { .. } | EnqueueJob { .. } | AssignRobot { .. } | MarkComplete { .. } | MarkFailed { .. } => {
                RecordKind::Assignment
            }
            Outcome { .. } => RecordKind::Outcome,
            DeviceStatus { .. } | AssignmentReset { .. } | MonitorNote { .. } => RecordKind::MonitorEvent,
            AlertRaised { .. } | AlertCleared { .. } => RecordKind::Alert,
            Ack { .. } => RecordKind::Ack,
            Control { .. } => RecordKind::Control,
        }
    }

    pub fn tick(&self) -> u64 {
        use StateEvent::*;
        match self {
            Init { state } => state.clock,
            Submit { tick, .. }
            | AssignStation { tick, .. }
            | EnqueueJob { tick, .. }
            | AssignRobot { tick, .. }
            | Outcome { tick, .. }
            | MarkComplete { tick, .. }
            | MarkFailed { tick, .. }
            | DeviceStatus { tick, .. }
            | AssignmentReset { tick, .. }
            | MonitorNote { tick, .. }
            | AlertRaised { tick, .. }
            | AlertCleared { tick, .. }
            | Ack { tick, .. }
            | Control { tick, .. } => *tick,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateError {
    #[error("state is already initialized")]
    AlreadyInitialized,
    #[error("first event must be init")]
    NotInitialized,
    #[error("unknown sample {0}")]
    UnknownSample(SampleId),
    #[error("unknown device '{0}'")]
    UnknownDevice(String),
    #[error("unknown robot job {0}")]
    UnknownJob(JobId),
    #[error("unknown alert {0}")]
    UnknownAlert(AlertId),
    #[error("sample {sample} is not assigned to '{actor}'")]
    NotAssigned { sample: SampleId, actor: String },
    #[error("outcome does not fit the operation schema: {0}")]
    SchemaMismatch(String),
    #[error("insufficient stock of '{0}'")]
    InsufficientStock(String),
    #[error("invalid transition: {0}")]
    InvalidTransition(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

fn invalid(message: impl Into<String>) -> StateError {
    StateError::InvalidTransition(message.into())
}

/// Ledger movements an outcome implies, resolved before anything is mutated.
#[derive(Default)]
struct Effects {
    added: Vec<(String, Micros)>,
    evaporated: Vec<(String, Micros)>,
}

impl WorkflowState {
    /// Folds a journal (init first) into a state.
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a StateEvent>) -> Result<WorkflowState, StateError> {
        let mut events = events.into_iter();
        let mut state = match events.next() {
            Some(StateEvent::Init { state }) => {
                let mut s = (**state).clone();
                s.revision = 1;
                s
            }
            _ => return Err(StateError::NotInitialized),
        };
        for ev in events {
            state.apply(ev)?;
        }
        Ok(state)
    }

    /// Applies one event. On error the state is left untouched.
    pub fn apply(&mut self, ev: &StateEvent) -> Result<(), StateError> {
        self.apply_inner(ev)?;
        self.clock = self.clock.max(ev.tick());
        self.revision += 1;
        Ok(())
    }

    fn sample(&self, id: SampleId) -> Result<&Sample, StateError> {
        self.samples.get(&id).ok_or(StateError::UnknownSample(id))
    }

    fn apply_inner(&mut self, ev: &StateEvent) -> Result<(), StateError> {
        match ev {
            StateEvent::Init { .. } => Err(StateError::AlreadyInitialized),
            StateEvent::Submit { samples, .. } => {
                let mut next = self.next_sample;
                for s in samples {
                    if s.id != next {
                        return Err(invalid(format!("expected sample id {next}, got {}", s.id)));
                    }
                    if !self.topology.contains(&s.location) {
                        return Err(invalid(format!("unknown location '{}'", s.location)));
                    }
                    if s.cursor != START || s.assignment != Assignment::Unassigned || !s.history.is_empty() {
                        return Err(invalid("submitted samples must be fresh"));
                    }
                    next += 1;
                }
                for s in samples {
                    self.samples.insert(s.id, s.clone());
                }
                self.next_sample = next;
                Ok(())
            }
            StateEvent::AssignStation { sample, station, node, .. } => {
                let s = self.sample(*sample)?;
                if s.assignment != Assignment::Unassigned {
                    return Err(invalid(format!("sample {sample} is not free")));
                }
                if self.queued_job(*sample).is_some() {
                    return Err(invalid(format!("sample {sample} has a queued robot job")));
                }
                if s.pending_node() != node {
                    return Err(invalid(format!("sample {sample} is not waiting at '{node}'")));
                }
                let st = self
                    .stations
                    .get(station)
                    .ok_or_else(|| StateError::UnknownDevice(station.clone()))?;
                let step = s
                    .recipe
                    .flow
                    .nodes
                    .get(node)
                    .and_then(|n| n.step.as_ref())
                    .ok_or_else(|| invalid(format!("'{node}' is not a station step")))?;
                if &step.station != station {
                    return Err(invalid(format!("'{node}' runs on '{}', not '{station}'", step.station)));
                }
                if !st.accepts_work() {
                    return Err(invalid(format!("station '{station}' cannot take work")));
                }
                if s.location != st.location {
                    return Err(invalid(format!("sample {sample} is not at '{}'", st.location)));
                }
                let s = self.samples.get_mut(sample).expect("checked");
                s.cursor = node.clone();
                *s.visits.entry(node.clone()).or_default() += 1;
                s.assignment = Assignment::Station(station.clone());
                let st = self.stations.get_mut(station).expect("checked");
                st.assigned_sample = Some(*sample);
                st.available = false;
                Ok(())
            }
            StateEvent::EnqueueJob { job, .. } => {
                let s = self.sample(job.sample)?;
                if s.assignment != Assignment::Unassigned || self.queued_job(job.sample).is_some() {
                    return Err(invalid(format!("sample {} is not free", job.sample)));
                }
                if job.id != self.next_job {
                    return Err(invalid(format!("expected job id {}, got {}", self.next_job, job.id)));
                }
                if job.from != s.location {
                    return Err(invalid(format!("job starts at '{}' but sample is at '{}'", job.from, s.location)));
                }
                if job.from == job.to {
                    return Err(invalid("job source and destination coincide"));
                }
                if job.capability != job.kind.capability() {
                    return Err(invalid("job capability does not match its kind"));
                }
                if !self.topology.contains(&job.to) {
                    return Err(invalid(format!("unknown location '{}'", job.to)));
                }
                self.robot_job_queue.push_back(job.clone());
                self.next_job += 1;
                Ok(())
            }
            StateEvent::AssignRobot { job, robot, .. } => {
                let pos = self
                    .robot_job_queue
                    .iter()
                    .position(|j| j.id == *job)
                    .ok_or(StateError::UnknownJob(*job))?;
                let r = self
                    .robots
                    .get(robot)
                    .ok_or_else(|| StateError::UnknownDevice(robot.clone()))?;
                let j = &self.robot_job_queue[pos];
                if !r.accepts_work() || !r.capabilities.contains(&j.capability) {
                    return Err(invalid(format!("robot '{robot}' cannot take job {job}")));
                }
                if j.kind == JobKind::Transport && !r.mobile {
                    return Err(invalid(format!("robot '{robot}' is not mobile")));
                }
                let j = self.robot_job_queue.remove(pos).expect("checked");
                let sample = j.sample;
                self.robots.get_mut(robot).expect("checked").assigned_job = Some(j);
                self.samples.get_mut(&sample).ok_or(StateError::UnknownSample(sample))?.assignment =
                    Assignment::Robot(robot.clone());
                Ok(())
            }
            StateEvent::Outcome { tick, sample, outcome } => self.apply_outcome(*tick, *sample, outcome),
            StateEvent::MarkComplete { tick, sample } => {
                let s = self.sample(*sample)?;
                if s.assignment != Assignment::Unassigned || !s.finished_successfully() {
                    return Err(invalid(format!("sample {sample} has not finished its flow")));
                }
                if s.location != s.home {
                    return Err(invalid(format!("sample {sample} is not back at '{}'", s.home)));
                }
                let s = self.samples.get_mut(sample).expect("checked");
                s.cursor = END.to_string();
                s.last_edge_success = Some(true);
                s.assignment = Assignment::Complete;
                s.finished_at = Some(*tick);
                Ok(())
            }
            StateEvent::MarkFailed { tick, sample, reason, by_cap } => {
                let s = self.sample(*sample)?;
                if s.assignment != Assignment::Unassigned {
                    return Err(invalid(format!("sample {sample} is not free")));
                }
                if self.queued_job(*sample).is_some() {
                    return Err(invalid(format!("sample {sample} has a queued robot job")));
                }
                let s = self.samples.get_mut(sample).expect("checked");
                s.assignment = Assignment::Failed;
                s.failure = Some(reason.clone());
                s.terminated_by_cap = *by_cap;
                s.finished_at = Some(*tick);
                Ok(())
            }
            StateEvent::DeviceStatus { device, operational, safety_stop, .. } => {
                if let Some(st) = self.stations.get_mut(device) {
                    st.operational = *operational;
                    st.safety_stop = *safety_stop;
                } else if let Some(r) = self.robots.get_mut(device) {
                    r.operational = *operational;
                    r.safety_stop = *safety_stop;
                } else {
                    return Err(StateError::UnknownDevice(device.clone()));
                }
                Ok(())
            }
            StateEvent::AssignmentReset { device, sample, .. } => {
                self.sample(*sample)?;
                if let Some(st) = self.stations.get(device) {
                    if st.assigned_sample != Some(*sample) {
                        return Err(StateError::NotAssigned { sample: *sample, actor: device.clone() });
                    }
                    let st = self.stations.get_mut(device).expect("checked");
                    st.assigned_sample = None;
                    st.available = true;
                    let s = self.samples.get_mut(sample).expect("checked");
                    // the re-dispatch counts as the same visit
                    if let Some(v) = s.visits.get_mut(&s.cursor) {
                        *v = v.saturating_sub(1);
                    }
                    s.assignment = Assignment::Unassigned;
                } else if let Some(r) = self.robots.get(device) {
                    if r.assigned_job.as_ref().map(|j| j.sample) != Some(*sample) {
                        return Err(StateError::NotAssigned { sample: *sample, actor: device.clone() });
                    }
                    let job = self.robots.get_mut(device).expect("checked").assigned_job.take().expect("checked");
                    // back to the head of the queue with its id, so the retry keeps its idempotency key
                    self.robot_job_queue.push_front(job);
                    self.samples.get_mut(sample).expect("checked").assignment = Assignment::Unassigned;
                } else {
                    return Err(StateError::UnknownDevice(device.clone()));
                }
                Ok(())
            }
            StateEvent::MonitorNote { .. } => Ok(()),
            StateEvent::AlertRaised { tick, rule, severity, message } => {
                if self.active_rules.contains(rule) {
                    return Err(invalid(format!("rule '{rule}' is already active")));
                }
                self.active_rules.insert(rule.clone());
                self.alerts.push(Alert {
                    id: self.next_alert,
                    rule: rule.clone(),
                    severity: *severity,
                    message: message.clone(),
                    raised_revision: self.revision + 1,
                    raised_tick: *tick,
                    acknowledged: false,
                });
                self.next_alert += 1;
                Ok(())
            }
            StateEvent::AlertCleared { rule, .. } => {
                if !self.active_rules.remove(rule) {
                    return Err(invalid(format!("rule '{rule}' is not active")));
                }
                Ok(())
            }
            StateEvent::Ack { alert, .. } => {
                let a = self
                    .alerts
                    .iter_mut()
                    .find(|a| a.id == *alert)
                    .ok_or(StateError::UnknownAlert(*alert))?;
                a.acknowledged = true;
                Ok(())
            }
            StateEvent::Control { command, .. } => {
                match command {
                    ControlCommand::Pause => self.control.paused = true,
                    ControlCommand::Resume => {
                        self.control.paused = false;
                        self.control.halted = false;
                    }
                    ControlCommand::Halt => self.control.halted = true,
                }
                Ok(())
            }
        }
    }

    fn apply_outcome(&mut self, tick: u64, sample: SampleId, outcome: &OperationOutcome) -> Result<(), StateError> {
        let s = self.sample(sample)?;
        if outcome.flow_success && !outcome.success {
            return Err(StateError::SchemaMismatch("flow success without device success".into()));
        }
        let not_assigned = || StateError::NotAssigned { sample, actor: outcome.actor.clone() };

        if let Some(st) = self.stations.get(&outcome.actor) {
            if st.assigned_sample != Some(sample) || s.assignment != Assignment::Station(st.id.clone()) {
                return Err(not_assigned());
            }
            let node = outcome
                .node
                .as_deref()
                .ok_or_else(|| StateError::SchemaMismatch("station outcome without a flow node".into()))?;
            if node != s.cursor {
                return Err(invalid(format!("outcome for '{node}' but sample is at '{}'", s.cursor)));
            }
            let descriptor = st
                .descriptor(&outcome.op)
                .ok_or_else(|| StateError::SchemaMismatch(format!("'{}' does not offer '{}'", st.id, outcome.op)))?;
            for (name, reading) in &outcome.readings {
                let spec = descriptor
                    .reading_spec(name)
                    .ok_or_else(|| StateError::SchemaMismatch(format!("undeclared reading '{name}'")))?;
                if spec.unit != reading.unit {
                    return Err(StateError::SchemaMismatch(format!(
                        "reading '{name}' in {} instead of {}",
                        reading.unit, spec.unit
                    )));
                }
            }
            if outcome.success {
                if let Some(missing) = descriptor.readings.iter().find(|r| !outcome.readings.contains_key(&r.name)) {
                    return Err(StateError::SchemaMismatch(format!("missing reading '{}'", missing.name)));
                }
            }
            let next = advance_flow(&s.recipe.flow, node, outcome.flow_success)?.to_string();
            let effects = self.resolve_effects(s, node, descriptor, outcome)?;

            let index = s.history.len();
            for (material, amount) in &effects.added {
                self.materials.get_mut(material).expect("resolved").remaining -= *amount;
            }
            let s = self.samples.get_mut(&sample).expect("checked");
            for (material, amount) in effects.added {
                *s.contents.entry(material).or_default() += amount;
            }
            for (material, amount) in effects.evaporated {
                *s.contents.entry(material.clone()).or_default() -= amount;
                *s.evaporated.entry(material).or_default() += amount;
            }
            s.history.push(outcome.clone());
            s.cursor = next;
            s.last_edge_success = Some(outcome.flow_success);
            s.assignment = Assignment::Unassigned;
            if s.cursor == END && !outcome.flow_success {
                s.assignment = Assignment::Failed;
                s.finished_at = Some(tick);
                s.failure = Some(outcome.reason.clone().unwrap_or_else(|| format!("{node} failed")));
            }
            let st = self.stations.get_mut(&outcome.actor).expect("checked");
            st.assigned_sample = None;
            st.available = true;
            st.processed.push(Processed { sample, outcome: index });
            return Ok(());
        }

        let r = self
            .robots
            .get(&outcome.actor)
            .ok_or_else(|| StateError::UnknownDevice(outcome.actor.clone()))?;
        let job = r.assigned_job.as_ref().filter(|j| j.sample == sample).ok_or_else(not_assigned)?;
        if s.assignment != Assignment::Robot(r.id.clone()) {
            return Err(not_assigned());
        }
        if outcome.op != job.kind.as_str() {
            return Err(StateError::SchemaMismatch(format!("robot outcome '{}' for a {} job", outcome.op, job.kind.as_str())));
        }
        let job = job.clone();
        let mobile = r.mobile;
        let r = self.robots.get_mut(&outcome.actor).expect("checked");
        r.assigned_job = None;
        r.processed.push(job.id);
        if mobile {
            r.location = job.to.clone();
        }
        let s = self.samples.get_mut(&sample).expect("checked");
        s.history.push(outcome.clone());
        if outcome.success {
            s.location = job.to;
            s.assignment = Assignment::Unassigned;
        } else {
            s.location = LIMBO.to_string();
            s.assignment = Assignment::Failed;
            s.finished_at = Some(tick);
            s.failure = Some(outcome.reason.clone().unwrap_or_else(|| format!("{} failed", job.kind.as_str())));
        }
        Ok(())
    }

    fn resolve_effects(
        &self,
        s: &Sample,
        node: &str,
        descriptor: &super::OperationDescriptor,
        outcome: &OperationOutcome,
    ) -> Result<Effects, StateError> {
        let mut effects = Effects::default();
        if !outcome.success {
            return Ok(effects);
        }
        let spec = s
            .recipe
            .step(node)
            .map(|(_, op)| op)
            .ok_or_else(|| invalid(format!("'{node}' has no operation")))?;
        for reading_spec in &descriptor.readings {
            let reading = outcome.readings[&reading_spec.name];
            match &reading_spec.effect {
                ReadingEffect::AddsMaterial { param } => {
                    let name = match spec.properties.get(param) {
                        Some(PropertyValue::Text(t)) => t,
                        _ => return Err(StateError::SchemaMismatch(format!("operation has no material '{param}'"))),
                    };
                    let material = self
                        .materials
                        .get(name)
                        .ok_or_else(|| StateError::SchemaMismatch(format!("unknown material '{name}'")))?;
                    let q = Quantity::new(reading.value, reading.unit)
                        .convert_to(material.unit())
                        .map_err(|e| StateError::SchemaMismatch(e.to_string()))?;
                    let amount = Micros::from_units(q.value);
                    if amount.is_negative() {
                        return Err(StateError::SchemaMismatch("negative dispensed amount".into()));
                    }
                    let already: Micros = effects.added.iter().filter(|(m, _)| m == name).map(|(_, a)| *a).sum();
                    if material.remaining - already < amount {
                        return Err(StateError::InsufficientStock(name.clone()));
                    }
                    effects.added.push((name.clone(), amount));
                }
                ReadingEffect::Evaporates => {
                    let grams = Quantity::new(reading.value, reading.unit)
                        .convert_to(crate::recipe::Unit::Gram)
                        .map_err(|e| StateError::SchemaMismatch(e.to_string()))?
                        .value;
                    let liquid = s.contents.iter().find(|(m, amount)| {
                        amount.0 > 0 && self.materials.get(*m).is_some_and(|m| m.density.is_some())
                    });
                    if let Some((name, &held)) = liquid {
                        let density = self.materials[name].density.expect("liquid");
                        let amount = Micros::from_units(grams / density).min(held);
                        effects.evaporated.push((name.clone(), amount));
                    }
                }
                ReadingEffect::SetsUndissolved | ReadingEffect::Measurement => {}
            }
        }
        Ok(effects)
    }
}
