use super::{check_next, JournalRecord, Store, StoreError};
use crate::state::WorkflowState;

/// Volatile store for tests and batch runs that need no journal file.
#[derive(Debug, Default, Clone)]
pub struct MemoryStore {
    records: Vec<JournalRecord>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Store for MemoryStore {
    fn append(&mut self, record: &JournalRecord, _state_after: &WorkflowState) -> Result<(), StoreError> {
        check_next(self.last_revision(), record)?;
        self.records.push(record.clone());
        Ok(())
    }

    fn last_revision(&self) -> u64 {
        self.records.last().map_or(0, |r| r.revision)
    }

    fn records(&self) -> &[JournalRecord] {
        &self.records
    }
}
