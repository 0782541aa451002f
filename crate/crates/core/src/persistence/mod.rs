//! Journaled storage of the workflow state.
//!
//! Every committed [`StateEvent`] becomes a [`JournalRecord`]; the state at
//! any revision is the fold of the records up to it.

mod journal;
mod memory;
mod recover;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state::{RecordKind, RegistryError, StateError, StateEvent, WorkflowState};

pub use journal::{open_store, Durability, JournalStore, OpenMode, OpenOptions, JOURNAL_FILE, MAGIC};
pub use memory::MemoryStore;
pub use recover::{recover, replay_records, RESET_REASON};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalRecord {
    pub revision: u64,
    pub kind: RecordKind,
    pub event: StateEvent,
}

impl JournalRecord {
    pub fn new(revision: u64, event: StateEvent) -> Self {
        Self {
            revision,
            kind: event.kind(),
            event,
        }
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("journal at {0} is locked by another writer")]
    Locked(PathBuf),
    #[error("journal is corrupt after revision {last_good}: {detail}")]
    Corrupt { last_good: u64, detail: String },
    #[error("expected revision {expected}, got {got}")]
    RevisionGap { expected: u64, got: u64 },
    #[error("a journal already exists at {0}")]
    AlreadyExists(PathBuf),
    #[error("no journal at {0}")]
    Missing(PathBuf),
    #[error("journal is empty")]
    EmptyJournal,
    #[error("store is unusable after an earlier write failure")]
    Poisoned,
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("journal does not replay: {0}")]
    State(#[from] StateError),
    #[error("encoding error: {0}")]
    Encode(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Append-only record storage owned by the single state writer.
pub trait Store: Send {
    /// Persists `record`; `state_after` is the state it produced, for stores
    /// that keep periodic snapshots.
    fn append(&mut self, record: &JournalRecord, state_after: &WorkflowState) -> Result<(), StoreError>;

    /// Revision of the newest record, 0 when empty.
    fn last_revision(&self) -> u64;

    fn records(&self) -> &[JournalRecord];

    /// State at [`Store::last_revision`].
    fn load(&self) -> Result<WorkflowState, StoreError> {
        replay_records(self.records())
    }
}

pub(crate) fn check_next(last: u64, record: &JournalRecord) -> Result<(), StoreError> {
    if record.revision != last + 1 {
        return Err(StoreError::RevisionGap {
            expected: last + 1,
            got: record.revision,
        });
    }
    Ok(())
}
