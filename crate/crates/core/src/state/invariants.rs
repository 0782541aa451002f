//! Structural checks over a whole state. Used by tests and by the engine in
//! debug builds; an empty result means the state is consistent.

use std::collections::BTreeMap;

use super::{Assignment, Micros, SampleId, WorkflowState};
use crate::recipe::END;

pub fn check_invariants(state: &WorkflowState) -> Vec<String> {
    let mut out = Vec::new();

    // at most one holder per sample, and holders agree with the sample
    let mut holders: BTreeMap<SampleId, Vec<&str>> = BTreeMap::new();
    for st in state.stations.values() {
        if let Some(s) = st.assigned_sample {
            holders.entry(s).or_default().push(&st.id);
            if st.available {
                out.push(format!("station {} is busy but marked available", st.id));
            }
        }
        if st.supported_ops.is_empty() {
            out.push(format!("station {} offers no operations", st.id));
        }
    }
    for r in state.robots.values() {
        if let Some(job) = &r.assigned_job {
            holders.entry(job.sample).or_default().push(&r.id);
        }
    }
    for (sample, devices) in &holders {
        let Some(s) = state.samples.get(sample) else {
            out.push(format!("devices {devices:?} hold unknown sample {sample}"));
            continue;
        };
        if devices.len() > 1 {
            out.push(format!("sample {sample} held by {devices:?}"));
        }
        let expected = match &s.assignment {
            Assignment::Station(d) | Assignment::Robot(d) => Some(d.as_str()),
            _ => None,
        };
        if expected != devices.first().copied() {
            out.push(format!("sample {sample} assignment {:?} but held by {devices:?}", s.assignment));
        }
    }
    for job in &state.robot_job_queue {
        if !state.samples.contains_key(&job.sample) {
            out.push(format!("queued job {} for unknown sample {}", job.id, job.sample));
        }
    }

    for s in state.samples.values() {
        if matches!(s.assignment, Assignment::Station(_) | Assignment::Robot(_)) && !holders.contains_key(&s.id) {
            out.push(format!("sample {} is assigned but no device holds it", s.id));
        }
        if !s.recipe.flow.contains(&s.cursor) {
            out.push(format!("sample {} cursor '{}' is not a flow node", s.id, s.cursor));
        }
        let finished_ok = s.cursor == END && s.last_edge_success == Some(true);
        if s.assignment == Assignment::Complete && !(finished_ok && s.location == s.home) {
            out.push(format!("sample {} is complete but did not finish its flow at home", s.id));
        }
        for (m, q) in s.contents.iter().chain(&s.evaporated) {
            if q.is_negative() {
                out.push(format!("sample {} holds {q} of {m}", s.id));
            }
        }
    }

    for m in state.materials.values() {
        if m.remaining.is_negative() {
            out.push(format!("material {} remaining {} is negative", m.name, m.remaining));
        }
        let used: Micros = state
            .samples
            .values()
            .map(|s| s.contents.get(&m.name).copied().unwrap_or_default() + s.evaporated.get(&m.name).copied().unwrap_or_default())
            .sum();
        if m.initial - used != m.remaining {
            out.push(format!(
                "material {}: initial {} - dispensed {} != remaining {}",
                m.name, m.initial, used, m.remaining
            ));
        }
    }
    out
}
