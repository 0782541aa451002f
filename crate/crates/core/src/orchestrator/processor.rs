//! Per-tick decisions for every sample that is neither held nor finished.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::state::{Assignment, JobKind, RobotJob, SampleId, StateEvent, WorkflowState, LIMBO};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum Decision {
    AssignToStation { sample: SampleId, station: String, node: String },
    EnqueueRobotJob { job: RobotJob },
    MarkComplete { sample: SampleId },
    MarkFailed { sample: SampleId, reason: String, by_cap: bool },
    NoOp { sample: SampleId, reason: String },
}

impl Decision {
    pub fn sample(&self) -> SampleId {
        match self {
            Decision::AssignToStation { sample, .. }
            | Decision::MarkComplete { sample }
            | Decision::MarkFailed { sample, .. }
            | Decision::NoOp { sample, .. } => *sample,
            Decision::EnqueueRobotJob { job } => job.sample,
        }
    }

    /// The state event carrying this decision, if it changes anything.
    pub fn into_event(self, tick: u64) -> Option<StateEvent> {
        Some(match self {
            Decision::AssignToStation { sample, station, node } => StateEvent::AssignStation { tick, sample, station, node },
            Decision::EnqueueRobotJob { job } => StateEvent::EnqueueJob { tick, job },
            Decision::MarkComplete { sample } => StateEvent::MarkComplete { tick, sample },
            Decision::MarkFailed { sample, reason, by_cap } => StateEvent::MarkFailed { tick, sample, reason, by_cap },
            Decision::NoOp { .. } => return None,
        })
    }
}

fn no_op(sample: SampleId, reason: impl Into<String>) -> Decision {
    Decision::NoOp { sample, reason: reason.into() }
}

/// One decision per unassigned, non-terminal sample, in sample id order.
/// A blocked (paused or halted) state yields only no-ops.
pub fn processor_tick(state: &WorkflowState) -> Vec<Decision> {
    let mut claimed: BTreeSet<&str> = BTreeSet::new();
    let mut next_job = state.next_job;
    let mut out = Vec::new();
    for sample in state.samples.values().filter(|s| s.assignment == Assignment::Unassigned) {
        let id = sample.id;
        if state.blocked() {
            out.push(no_op(id, "processing is held"));
            continue;
        }
        if state.queued_job(id).is_some() {
            out.push(no_op(id, "waiting for a robot"));
            continue;
        }
        if sample.location == LIMBO {
            out.push(Decision::MarkFailed { sample: id, reason: "vial lost".into(), by_cap: false });
            continue;
        }

        let mut job = |from: &str, to: &str| {
            let decision = route(state, next_job, id, from, to);
            if matches!(decision, Decision::EnqueueRobotJob { .. }) {
                next_job += 1;
            }
            decision
        };

        if sample.finished_successfully() {
            out.push(if sample.location == sample.home {
                Decision::MarkComplete { sample: id }
            } else {
                job(&sample.location, &sample.home)
            });
            continue;
        }

        let node = sample.pending_node();
        let Some((step, _)) = sample.recipe.step(node) else {
            out.push(Decision::MarkFailed { sample: id, reason: format!("no operation at '{node}'"), by_cap: false });
            continue;
        };
        let visits = sample.visits.get(node).copied().unwrap_or(0);
        if visits >= step.max_iterations {
            out.push(Decision::MarkFailed {
                sample: id,
                reason: format!("'{node}' reached its iteration cap of {}", step.max_iterations),
                by_cap: true,
            });
            continue;
        }
        let Some(station) = state.stations.get(&step.station) else {
            out.push(Decision::MarkFailed { sample: id, reason: format!("station '{}' is not configured", step.station), by_cap: false });
            continue;
        };
        if sample.location != station.location {
            out.push(job(&sample.location, &station.location));
        } else if station.accepts_work() && !claimed.contains(station.id.as_str()) {
            claimed.insert(&station.id);
            out.push(Decision::AssignToStation { sample: id, station: station.id.clone(), node: node.to_string() });
        } else {
            out.push(no_op(id, format!("station '{}' is busy or down", station.id)));
        }
    }
    out
}

/// Next hop from `from` towards `to`: a manipulation inside a cell, a move to
/// the cell's dock, or a transport between docks.
fn route(state: &WorkflowState, job_id: u64, sample: SampleId, from: &str, to: &str) -> Decision {
    let topo = &state.topology;
    let (Some(from_cell), Some(to_cell)) = (topo.cell(from), topo.cell(to)) else {
        return Decision::MarkFailed { sample, reason: format!("no route from '{from}' to '{to}'"), by_cap: false };
    };
    let (kind, dest) = if from_cell == to_cell {
        (JobKind::Manipulate, to)
    } else if !topo.is_dock(from) {
        match topo.dock_of(from_cell) {
            Some(dock) => (JobKind::Manipulate, dock),
            None => return no_op(sample, format!("cell '{from_cell}' has no dock")),
        }
    } else {
        match topo.dock_of(to_cell) {
            Some(dock) => (JobKind::Transport, dock),
            None => return no_op(sample, format!("cell '{to_cell}' has no dock")),
        }
    };
    Decision::EnqueueRobotJob {
        job: RobotJob {
            id: job_id,
            kind,
            sample,
            from: from.to_string(),
            to: dest.to_string(),
            capability: kind.capability(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::tests::{lab_state, listing};
    use crate::state::{ControlCommand, Sample};

    fn with_sample(location: &str) -> WorkflowState {
        let mut s = lab_state();
        s.apply(&StateEvent::Submit { tick: 0, samples: vec![Sample::new(1, listing(), location, 0)] }).unwrap();
        s
    }

    fn only(state: &WorkflowState) -> Decision {
        let d = processor_tick(state);
        assert_eq!(d.len(), 1, "{d:?}");
        d.into_iter().next().unwrap()
    }

    #[test]
    fn fresh_sample_on_the_deck_is_transported() {
        let Decision::EnqueueRobotJob { job } = only(&with_sample("kmr_deck")) else { panic!() };
        assert_eq!(job.kind, JobKind::Transport);
        assert_eq!((job.from.as_str(), job.to.as_str()), ("kmr_deck", "quantos_carousel"));
        assert_eq!(job.id, 1);
    }

    #[test]
    fn sample_in_place_is_assigned() {
        assert_eq!(
            only(&with_sample("quantos_carousel")),
            Decision::AssignToStation {
                sample: 1,
                station: "solid_dispensing_quantos_QS2".into(),
                node: "solid_disp".into()
            }
        );
    }

    #[test]
    fn inner_positions_go_through_the_dock() {
        let mut s = with_sample("hotplate");
        s.samples.get_mut(&1).unwrap().home = "hotplate".into();
        let Decision::EnqueueRobotJob { job } = only(&s) else { panic!() };
        assert_eq!((job.kind, job.to.as_str()), (JobKind::Manipulate, "panda_station"));
        let s = with_sample("panda_station");
        let Decision::EnqueueRobotJob { job } = only(&s) else { panic!() };
        assert_eq!((job.kind, job.to.as_str()), (JobKind::Transport, "quantos_carousel"));
    }

    #[test]
    fn finished_sample_goes_home_then_completes() {
        let mut s = with_sample("kmr_deck");
        {
            let sample = s.samples.get_mut(&1).unwrap();
            sample.cursor = "end".into();
            sample.last_edge_success = Some(true);
        }
        assert_eq!(only(&s), Decision::MarkComplete { sample: 1 });
        s.samples.get_mut(&1).unwrap().location = "pump_needle".into();
        let Decision::EnqueueRobotJob { job } = only(&s) else { panic!() };
        assert_eq!(job.to, "panda_station");
    }

    #[test]
    fn queued_and_held_samples_wait() {
        let mut s = with_sample("kmr_deck");
        for d in processor_tick(&s) {
            s.apply(&d.into_event(0).unwrap()).unwrap();
        }
        assert!(matches!(only(&s), Decision::NoOp { .. }));
        let mut paused = with_sample("quantos_carousel");
        paused.apply(&StateEvent::Control { tick: 0, command: ControlCommand::Pause }).unwrap();
        assert!(matches!(only(&paused), Decision::NoOp { .. }));
    }

    #[test]
    fn one_station_one_sample_per_tick() {
        let mut s = lab_state();
        let samples = (1..=3).map(|i| Sample::new(i, listing(), "quantos_carousel", 0)).collect();
        s.apply(&StateEvent::Submit { tick: 0, samples }).unwrap();
        let decisions = processor_tick(&s);
        assert!(matches!(decisions[0], Decision::AssignToStation { sample: 1, .. }));
        assert!(decisions[1..].iter().all(|d| matches!(d, Decision::NoOp { .. })));
    }

    #[test]
    fn job_ids_are_consecutive() {
        let mut s = lab_state();
        let samples = (1..=3).map(|i| Sample::new(i, listing(), "kmr_deck", 0)).collect();
        s.apply(&StateEvent::Submit { tick: 0, samples }).unwrap();
        let ids: Vec<u64> = processor_tick(&s)
            .into_iter()
            .map(|d| match d {
                Decision::EnqueueRobotJob { job } => job.id,
                other => panic!("{other:?}"),
            })
            .collect();
        assert_eq!(ids, vec![1, 2, 3]);
        for d in processor_tick(&s) {
            s.apply(&d.into_event(0).unwrap()).unwrap();
        }
        assert_eq!(s.robot_job_queue.len(), 3);
    }

    #[test]
    fn visit_cap_fails_the_sample() {
        let mut s = with_sample("quantos_carousel");
        s.samples.get_mut(&1).unwrap().visits.insert("solid_disp".into(), 1000);
        assert!(matches!(only(&s), Decision::MarkFailed { by_cap: true, .. }));
    }

    #[test]
    fn processor_is_pure() {
        let s = with_sample("kmr_deck");
        let before = s.clone();
        assert_eq!(processor_tick(&s), processor_tick(&s));
        assert_eq!(s, before);
    }
}
