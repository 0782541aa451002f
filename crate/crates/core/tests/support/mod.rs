#![allow(dead_code)]

pub mod lab;
pub mod recipes;

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use archemist_core::persistence::JournalRecord;
use archemist_core::recipe::{parse_recipe, Recipe, RecipeDoc};
use archemist_core::simlab::Scenario;
use archemist_core::state::{check_invariants, init_from_config, ConfigDoc, Registry, StateEvent, WorkflowState};

pub fn asset(path: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets").join(path)
}

pub fn read(path: &str) -> String {
    fs::read_to_string(asset(path)).unwrap()
}

pub fn lab() -> WorkflowState {
    init_from_config(&ConfigDoc::parse(&read("lab.yaml")).unwrap(), &Registry::with_builtins()).unwrap()
}

pub fn recipe(name: &str) -> Arc<Recipe> {
    let text = read(&format!("recipes/{name}.yaml"));
    Arc::new(parse_recipe(&RecipeDoc::new(text, name)).unwrap())
}

pub fn scenario(name: &str) -> Scenario {
    Scenario::parse(&read(&format!("scenarios/{name}.yaml"))).unwrap()
}

/// Every journal prefix replays to a state that passes the invariant checks.
pub fn audit_every_revision(journal: &[JournalRecord]) {
    let events: Vec<StateEvent> = journal.iter().map(|r| r.event.clone()).collect();
    let mut state = WorkflowState::replay(&events[..1]).unwrap();
    for (i, ev) in events.iter().enumerate().skip(1) {
        state.apply(ev).unwrap();
        let problems = check_invariants(&state);
        assert!(problems.is_empty(), "revision {}: {problems:?}", i + 1);
    }
}

/// Walks the journal tracking holders from the events alone.
pub fn audit_single_assignment(journal: &[JournalRecord]) {
    let mut holder: BTreeMap<u32, String> = BTreeMap::new();
    let mut jobs: BTreeMap<u64, u32> = BTreeMap::new();
    for r in journal {
        match &r.event {
            StateEvent::AssignStation { sample, station, .. } => {
                assert!(holder.insert(*sample, station.clone()).is_none(), "rev {}: sample {sample} double-held", r.revision);
            }
            StateEvent::EnqueueJob { job, .. } => {
                jobs.insert(job.id, job.sample);
            }
            StateEvent::AssignRobot { job, robot, .. } => {
                let sample = jobs[job];
                assert!(holder.insert(sample, robot.clone()).is_none(), "rev {}: sample {sample} double-held", r.revision);
            }
            StateEvent::Outcome { sample, outcome, .. } => {
                assert_eq!(holder.remove(sample).as_deref(), Some(outcome.actor.as_str()), "rev {}", r.revision);
            }
            StateEvent::AssignmentReset { sample, device, .. } => {
                assert_eq!(holder.remove(sample).as_deref(), Some(device.as_str()));
            }
            _ => {}
        }
    }
    assert!(holder.is_empty(), "still held at the end: {holder:?}");
}
