//! The single writer of [`WorkflowState`].
//!
//! Readers take cheap `Arc` snapshots. Writers commit events one at a time:
//! each event is validated against the current state, appended to the store,
//! then made visible, so a snapshot always equals the journal at its revision.

use std::sync::{Arc, Mutex, RwLock};

use thiserror::Error;

use super::{StateError, StateEvent, WorkflowState};
use crate::persistence::{JournalRecord, Store, StoreError};

/// Called after every durable commit, in revision order.
pub type Observer = Box<dyn Fn(&JournalRecord, &WorkflowState) + Send + Sync>;

#[derive(Debug, Error)]
pub enum AuthorityError {
    #[error(transparent)]
    Rejected(#[from] StateError),
    #[error("revision moved from {expected} to {actual}")]
    Conflict { expected: u64, actual: u64 },
    #[error("store does not match the state: journal at {journal}, state at {state}")]
    OutOfSync { journal: u64, state: u64 },
    #[error(transparent)]
    Store(#[from] StoreError),
}

struct Writer {
    store: Box<dyn Store>,
    observers: Vec<Observer>,
    poisoned: bool,
}

pub struct StateAuthority {
    current: RwLock<Arc<WorkflowState>>,
    writer: Mutex<Writer>,
}

impl std::fmt::Debug for StateAuthority {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StateAuthority")
            .field("revision", &self.revision())
            .finish_non_exhaustive()
    }
}

impl StateAuthority {
    /// Journals `initial` as the `init` record of an empty store.
    pub fn bootstrap(initial: WorkflowState, mut store: Box<dyn Store>) -> Result<Self, AuthorityError> {
        let mut state = initial;
        state.revision = 1;
        let record = JournalRecord::new(
            1,
            StateEvent::Init {
                state: Box::new(state.clone()),
            },
        );
        store.append(&record, &state)?;
        Ok(Self::from_parts(state, store))
    }

    /// Wraps a state already journaled in `store` (after recovery).
    pub fn resume(state: WorkflowState, store: Box<dyn Store>) -> Result<Self, AuthorityError> {
        if store.last_revision() != state.revision {
            return Err(AuthorityError::OutOfSync {
                journal: store.last_revision(),
                state: state.revision,
            });
        }
        Ok(Self::from_parts(state, store))
    }

    fn from_parts(state: WorkflowState, store: Box<dyn Store>) -> Self {
        Self {
            current: RwLock::new(Arc::new(state)),
            writer: Mutex::new(Writer {
                store,
                observers: Vec::new(),
                poisoned: false,
            }),
        }
    }

    pub fn snapshot(&self) -> Arc<WorkflowState> {
        self.current.read().expect("state lock").clone()
    }

    pub fn revision(&self) -> u64 {
        self.current.read().expect("state lock").revision
    }

    pub fn observe(&self, observer: Observer) {
        self.writer.lock().expect("writer lock").observers.push(observer);
    }

    /// Journal records so far, cloned.
    pub fn records(&self) -> Vec<JournalRecord> {
        self.writer.lock().expect("writer lock").store.records().to_vec()
    }

    /// Records with a revision above `revision`, oldest first.
    pub fn records_after(&self, revision: u64) -> Vec<JournalRecord> {
        let writer = self.writer.lock().expect("writer lock");
        let records = writer.store.records();
        let start = records.partition_point(|r| r.revision <= revision);
        records[start..].to_vec()
    }

    pub fn commit(&self, event: StateEvent) -> Result<u64, AuthorityError> {
        self.commit_all(None, vec![event])
    }

    /// Commits only if the state is still at `expected` revision.
    pub fn commit_at(&self, expected: u64, event: StateEvent) -> Result<u64, AuthorityError> {
        self.commit_all(Some(expected), vec![event])
    }

    /// Derives events from a snapshot and commits them atomically with respect
    /// to other writers, retrying on a revision conflict. Returns the new
    /// revision.
    pub fn update<F>(&self, mut f: F) -> Result<u64, AuthorityError>
    where
        F: FnMut(&WorkflowState) -> Result<Vec<StateEvent>, StateError>,
    {
        loop {
            let snap = self.snapshot();
            let events = f(&snap)?;
            match self.commit_all(Some(snap.revision), events) {
                Err(AuthorityError::Conflict { .. }) => continue,
                other => return other,
            }
        }
    }

    fn commit_all(&self, expected: Option<u64>, events: Vec<StateEvent>) -> Result<u64, AuthorityError> {
        let mut writer = self.writer.lock().expect("writer lock");
        if writer.poisoned {
            return Err(StoreError::Poisoned.into());
        }
        let mut committed = Vec::with_capacity(events.len());
        let after = {
            let mut current = self.current.write().expect("state lock");
            if let Some(expected) = expected {
                if current.revision != expected {
                    return Err(AuthorityError::Conflict {
                        expected,
                        actual: current.revision,
                    });
                }
            }
            for event in events {
                // apply validates before it mutates, so a rejection leaves the state intact
                let state = Arc::make_mut(&mut current);
                state.apply(&event)?;
                let record = JournalRecord::new(state.revision, event);
                if let Err(e) = writer.store.append(&record, state) {
                    // memory is one record ahead of the journal now; refuse further writes
                    writer.poisoned = true;
                    return Err(e.into());
                }
                committed.push(record);
            }
            current.clone()
        };
        for record in &committed {
            for observer in &writer.observers {
                observer(record, &after);
            }
        }
        Ok(after.revision)
    }
}
