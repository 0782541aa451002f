//! Device availability and safety polling.

use crate::simlab::Health;
use crate::state::{AlertSeverity, StateEvent, WorkflowState};

/// Alert rule id used for a device that faults while holding work.
pub fn device_rule(device: &str) -> String {
    format!("device_fault:{device}")
}

/// Flag changes for every device whose reported health differs from the
/// state, and a halt alert when a device faults with work assigned to it.
pub fn monitor_tick(state: &WorkflowState, tick: u64, health: impl Fn(&str) -> Option<Health>) -> Vec<StateEvent> {
    let devices = state
        .stations
        .values()
        .map(|s| (&s.id, s.operational, s.safety_stop, s.assigned_sample.is_some()))
        .chain(
            state
                .robots
                .values()
                .map(|r| (&r.id, r.operational, r.safety_stop, r.assigned_job.is_some())),
        );
    let mut out = Vec::new();
    for (id, operational, safety_stop, busy) in devices {
        let Some(h) = health(id) else { continue };
        if (h.operational, h.safety_stop) != (operational, safety_stop) {
            out.push(StateEvent::DeviceStatus {
                tick,
                device: id.clone(),
                operational: h.operational,
                safety_stop: h.safety_stop,
            });
        }
        let faulted = !h.operational || h.safety_stop;
        let rule = device_rule(id);
        let active = state.active_rules.contains(&rule);
        if faulted && busy && !active {
            let what = if h.safety_stop { "safety stop" } else { "not operational" };
            out.push(StateEvent::AlertRaised {
                tick,
                rule,
                severity: AlertSeverity::Halt,
                message: format!("{id}: {what} with work assigned"),
            });
        } else if !faulted && active {
            out.push(StateEvent::AlertCleared { tick, rule });
        }
    }
    out
}
