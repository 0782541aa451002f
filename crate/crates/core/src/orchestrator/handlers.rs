//! One handler per station and robot. A handler turns its target's current
//! assignment into a bus request and the reply into an outcome event.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::success::{outcome_to_success, previous_values};
use crate::simlab::{Bus, DeviceReply, DispatchError, OperationRequest, Poll};
use crate::state::{OperationOutcome, SampleId, StateEvent, TargetKind, WorkflowState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandlerStatus {
    Idle,
    Executing,
    Done,
    Faulted,
}

#[derive(Debug, Clone)]
struct InFlight {
    corr: u64,
    request: OperationRequest,
}

#[derive(Debug)]
pub struct HandlerTask {
    pub target: String,
    pub kind: TargetKind,
    pub status: HandlerStatus,
    in_flight: Option<InFlight>,
}

pub const TIMEOUT_REASON: &str = "timeout";

impl HandlerTask {
    pub fn new(target: &str, kind: TargetKind) -> Self {
        Self {
            target: target.to_string(),
            kind,
            status: HandlerStatus::Idle,
            in_flight: None,
        }
    }

    pub fn is_executing(&self) -> bool {
        self.in_flight.is_some()
    }

    /// Request for this handler's current assignment, if it has one.
    pub fn request_for(&self, state: &WorkflowState) -> Option<OperationRequest> {
        match self.kind {
            TargetKind::Station => {
                let station = state.stations.get(&self.target)?;
                let sample = state.samples.get(&station.assigned_sample?)?;
                let node = sample.cursor.clone();
                let (_, op) = sample.recipe.step(&node)?;
                let visit = sample.visits.get(&node).copied().unwrap_or(0);
                Some(OperationRequest {
                    key: format!("{}:{node}:{visit}", sample.id),
                    device: self.target.clone(),
                    sample: sample.id,
                    op: op.op_name.clone(),
                    params: op.properties.clone(),
                    node: Some(node),
                    job: None,
                })
            }
            TargetKind::Robot => {
                let job = state.robots.get(&self.target)?.assigned_job.clone()?;
                Some(OperationRequest {
                    key: format!("{}:job{}", job.sample, job.id),
                    device: self.target.clone(),
                    sample: job.sample,
                    op: job.kind.as_str().to_string(),
                    params: IndexMap::new(),
                    node: None,
                    job: Some(job),
                })
            }
        }
    }

    fn timeout_ticks(&self, state: &WorkflowState) -> u64 {
        match self.kind {
            TargetKind::Station => state.stations.get(&self.target).map(|s| s.timeout_ticks),
            TargetKind::Robot => state.robots.get(&self.target).map(|r| r.timeout_ticks),
        }
        .unwrap_or(60)
    }

    /// Advances the handler by one tick. Returns the outcome event once the
    /// device has answered or timed out.
    pub fn step(&mut self, state: &WorkflowState, bus: &mut Bus, tick: u64) -> Option<StateEvent> {
        if self.in_flight.is_none() {
            let Some(request) = self.request_for(state) else {
                self.status = HandlerStatus::Idle;
                return None;
            };
            match bus.dispatch(&request, state, tick, self.timeout_ticks(state)) {
                Ok(corr) => {
                    self.status = HandlerStatus::Executing;
                    self.in_flight = Some(InFlight { corr, request });
                }
                Err(DispatchError::NotOperational(_) | DispatchError::UnknownDevice(_)) => {
                    self.status = HandlerStatus::Faulted;
                    return None;
                }
            }
        }
        let flight = self.in_flight.as_ref().expect("set above");
        let reply = match bus.poll(flight.corr, tick) {
            Poll::Pending => return None,
            Poll::Ready(reply) => reply,
            Poll::TimedOut => DeviceReply::failed(TIMEOUT_REASON, 0),
        };
        let flight = self.in_flight.take().expect("checked");
        self.status = HandlerStatus::Done;
        Some(outcome_event(state, &flight.request, reply, tick))
    }

    /// Drops a request whose assignment was released elsewhere.
    pub fn abandon(&mut self, bus: &mut Bus) {
        if let Some(f) = self.in_flight.take() {
            bus.cancel(f.corr);
        }
        self.status = HandlerStatus::Idle;
    }

    pub fn in_flight_sample(&self) -> Option<SampleId> {
        self.in_flight.as_ref().map(|f| f.request.sample)
    }
}

/// Outcome event for `request` given the device reply.
pub fn outcome_event(state: &WorkflowState, request: &OperationRequest, reply: DeviceReply, tick: u64) -> StateEvent {
    let (output_name, flow_success, reason) = match request.node.as_deref() {
        Some(node) => {
            let sample = &state.samples[&request.sample];
            let output = sample.recipe.step(node).map(|(_, op)| op.output.clone());
            match output {
                Some(output) => {
                    let previous = previous_values(&sample.history, node, &output.name);
                    match outcome_to_success(reply.success, &reply.readings, &output, &previous) {
                        Ok(ok) => (output.name, ok, reply.reason.clone()),
                        Err(e) => (output.name, false, Some(e.to_string())),
                    }
                }
                None => (request.op.clone(), false, Some(format!("no operation at '{node}'"))),
            }
        }
        None => (request.op.clone(), reply.success, reply.reason.clone()),
    };
    StateEvent::Outcome {
        tick,
        sample: request.sample,
        outcome: OperationOutcome {
            output_name,
            actor: request.device.clone(),
            op: request.op.clone(),
            node: request.node.clone(),
            key: request.key.clone(),
            success: reply.success,
            flow_success,
            reason,
            readings: reply.readings,
            tick,
        },
    }
}

/// The same outcome recorded as a device failure, for replies the state
/// refuses (a reading missing or in the wrong unit).
pub fn as_failure(event: &StateEvent, reason: String) -> Option<StateEvent> {
    let StateEvent::Outcome { tick, sample, outcome } = event else {
        return None;
    };
    Some(StateEvent::Outcome {
        tick: *tick,
        sample: *sample,
        outcome: OperationOutcome {
            success: false,
            flow_success: false,
            reason: Some(reason),
            readings: Default::default(),
            ..outcome.clone()
        },
    })
}
