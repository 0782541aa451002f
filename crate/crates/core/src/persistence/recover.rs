use super::{JournalRecord, Store, StoreError};
use crate::state::{Registry, RegistryError, StateEvent, WorkflowState};

pub const RESET_REASON: &str = "in flight at recovery";

/// Folds records from revision 1; the first must be `init`.
pub fn replay_records(records: &[JournalRecord]) -> Result<WorkflowState, StoreError> {
    let Some(first) = records.first() else {
        return Err(StoreError::EmptyJournal);
    };
    if first.revision != 1 {
        return Err(StoreError::RevisionGap {
            expected: 1,
            got: first.revision,
        });
    }
    for pair in records.windows(2) {
        super::check_next(pair[0].revision, &pair[1])?;
    }
    let state = WorkflowState::replay(records.iter().map(|r| &r.event))?;
    Ok(state)
}

/// Rebuilds the state from `store` and releases anything that was in flight
/// when the previous writer stopped, journaling one reset per assignment.
pub fn recover(store: &mut dyn Store, registry: &Registry) -> Result<WorkflowState, StoreError> {
    if store.last_revision() == 0 {
        return Err(StoreError::EmptyJournal);
    }
    let mut state = store.load()?;
    for type_name in state
        .stations
        .values()
        .map(|s| &s.type_name)
        .chain(state.robots.values().map(|r| &r.type_name))
    {
        if !registry.contains(type_name) {
            return Err(RegistryError::UnknownTypeName(type_name.clone()).into());
        }
    }

    let mut resets = Vec::new();
    for st in state.stations.values() {
        if let Some(sample) = st.assigned_sample {
            resets.push((st.id.clone(), sample));
        }
    }
    for r in state.robots.values() {
        if let Some(job) = &r.assigned_job {
            resets.push((r.id.clone(), job.sample));
        }
    }
    for (device, sample) in resets {
        let event = StateEvent::AssignmentReset {
            tick: state.clock,
            device,
            sample,
            reason: RESET_REASON.to_string(),
        };
        state.apply(&event)?;
        store.append(&JournalRecord::new(state.revision, event), &state)?;
    }
    Ok(state)
}
