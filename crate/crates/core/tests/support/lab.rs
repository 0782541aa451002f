//! Generated lab situations: robot fleets with queued jobs, and fault
//! schedules for whole runs.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use archemist_core::orchestrator::{schedule_robot_jobs, Engine, EngineConfig, EngineError};
use archemist_core::persistence::MemoryStore;
use archemist_core::simlab::{FaultKind, FaultSpec, Scenario, Trigger};
use archemist_core::state::{
    check_invariants, Capability, ConfigDoc, JobKind, Micros, Registry, RobotJob, Sample, StateAuthority, StateEvent,
    WorkflowState,
};

pub const NODES: [&str; 6] = ["kmr_deck", "quantos_carousel", "panda_station", "pump_needle", "hotplate", "balance_pan"];

/// All-pairs shortest paths over the lab file's edge list.
fn distances() -> BTreeMap<(String, String), u64> {
    let doc = ConfigDoc::parse(&super::read("lab.yaml")).unwrap();
    let mut d: BTreeMap<(String, String), u64> = BTreeMap::new();
    for n in NODES {
        d.insert((n.into(), n.into()), 0);
    }
    for e in &doc.topology.edges {
        d.insert((e.a.clone(), e.b.clone()), e.cost);
        d.insert((e.b.clone(), e.a.clone()), e.cost);
    }
    for k in NODES {
        for i in NODES {
            for j in NODES {
                let via = d.get(&(i.into(), k.into())).zip(d.get(&(k.into(), j.into()))).map(|(x, y)| x + y);
                if let Some(via) = via {
                    let cur = d.entry((i.into(), j.into())).or_insert(u64::MAX);
                    *cur = (*cur).min(via);
                }
            }
        }
    }
    d
}

fn cell(node: &str) -> &'static str {
    match node {
        "kmr_deck" => "storage",
        "quantos_carousel" => "quantos",
        _ => "panda",
    }
}

/// Greedy reference: queue order, each job to the free robot with the least
/// (distance, id) among those able to take it.
pub fn reference_schedule(state: &WorkflowState) -> Vec<(u64, String)> {
    if state.halted() || state.control.paused || state.control.halted {
        return Vec::new();
    }
    let dist = distances();
    let mut taken = BTreeSet::new();
    let mut out = Vec::new();
    for job in &state.robot_job_queue {
        let mut candidates: Vec<(u64, String)> = state
            .robots
            .values()
            .filter(|r| r.operational && !r.safety_stop && r.assigned_job.is_none() && !taken.contains(&r.id))
            .filter(|r| r.capabilities.contains(&job.capability))
            .filter(|r| match job.kind {
                JobKind::Transport => r.mobile,
                JobKind::Manipulate => cell(&r.location) == cell(&job.from),
            })
            .filter_map(|r| dist.get(&(r.location.clone(), job.from.clone())).map(|d| (*d, r.id.clone())))
            .collect();
        candidates.sort();
        if let Some((_, id)) = candidates.into_iter().next() {
            taken.insert(id.clone());
            out.push((job.id, id));
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct RobotGen {
    pub id: String,
    pub location: usize,
    pub mobile: bool,
    pub transport: bool,
    pub manipulate: bool,
    pub available: bool,
}

#[derive(Debug, Clone)]
pub struct JobGen {
    pub from: usize,
    pub to_offset: usize,
    pub manipulate: bool,
}

pub fn robot_gen() -> impl Strategy<Value = RobotGen> {
    ("r[a-e]", 0..NODES.len(), any::<bool>(), any::<bool>(), any::<bool>(), prop::bool::weighted(0.8)).prop_map(
        |(id, location, mobile, transport, manipulate, available)| RobotGen {
            id,
            location,
            mobile,
            transport,
            manipulate,
            available,
        },
    )
}

pub fn job_gen() -> impl Strategy<Value = JobGen> {
    (0..NODES.len(), 1..NODES.len(), any::<bool>()).prop_map(|(from, to_offset, manipulate)| JobGen {
        from,
        to_offset,
        manipulate,
    })
}

pub fn queued_state(robots: &[RobotGen], jobs: &[JobGen], paused: bool) -> WorkflowState {
    let mut state = super::lab();
    let template = state.robots["kuka_kmr"].clone();
    for g in robots {
        let mut r = template.clone();
        r.id = g.id.clone();
        r.location = NODES[g.location].into();
        r.mobile = g.mobile;
        r.capabilities = BTreeSet::new();
        if g.transport {
            r.capabilities.insert(Capability::Transport);
        }
        if g.manipulate {
            r.capabilities.insert(Capability::Manipulate);
        }
        r.safety_stop = !g.available;
        state.robots.insert(r.id.clone(), r);
    }
    let recipe = super::recipe("solubility");
    for (i, g) in jobs.iter().enumerate() {
        let id = i as u32 + 1;
        let from = NODES[g.from];
        let sample = Sample::new(id, recipe.clone(), from, 0);
        state.apply(&StateEvent::Submit { tick: 0, samples: vec![sample] }).unwrap();
        let kind = if g.manipulate { JobKind::Manipulate } else { JobKind::Transport };
        let job = RobotJob {
            id: state.next_job,
            kind,
            sample: id,
            from: from.into(),
            to: NODES[(g.from + g.to_offset) % NODES.len()].into(),
            capability: kind.capability(),
        };
        state.apply(&StateEvent::EnqueueJob { tick: 0, job }).unwrap();
    }
    state.control.paused = paused;
    state
}

pub fn device_ids() -> Vec<&'static str> {
    vec![
        "solid_dispensing_quantos_QS2",
        "peristaltic_liquid_dispensing",
        "balance_pps4102",
        "hotplate_stirrer_ika",
        "kuka_kmr",
        "franka_panda",
    ]
}

pub fn fault_gen() -> impl Strategy<Value = FaultSpec> {
    let trigger = prop_oneof![
        (1u32..4).prop_map(Trigger::Nth),
        (0.05f64..0.5).prop_map(Trigger::Probability),
        (0u64..1500).prop_map(Trigger::AtTick),
    ];
    let kind = prop_oneof![
        Just(FaultKind::TaringTimeout),
        Just(FaultKind::MisplaceVial),
        Just(FaultKind::SafetyStop)
    ];
    (prop::sample::select(device_ids()), kind, trigger, 10u64..300).prop_map(|(device, kind, trigger, hold_ticks)| {
        // timed stops are the only at_tick faults the simulator accepts
        let (kind, trigger) = match (kind, trigger) {
            (FaultKind::SafetyStop, Trigger::AtTick(t)) => (kind, Trigger::AtTick(t)),
            (FaultKind::SafetyStop, _) => (kind, Trigger::AtTick(hold_ticks * 3)),
            (k, Trigger::AtTick(t)) => (k, Trigger::Nth(t as u32 % 3 + 1)),
            other => other,
        };
        FaultSpec { device: device.into(), kind, trigger, run: None, hold_ticks }
    })
}

/// Runs to completion, acknowledging every halt the moment it stalls the lab.
pub fn drive(engine: &mut Engine) -> WorkflowState {
    for _ in 0..100 {
        match engine.run_until_idle() {
            Ok(state) => return state,
            Err(EngineError::Stalled { .. }) => {
                let open: Vec<u64> =
                    engine.authority().snapshot().alerts.iter().filter(|a| !a.acknowledged).map(|a| a.id).collect();
                assert!(!open.is_empty(), "stalled without an open alert");
                for id in open {
                    engine.ack(id).unwrap();
                }
            }
            Err(e) => panic!("{e}"),
        }
    }
    panic!("did not settle after 100 acknowledgements");
}

/// Stock drawn per material, summed from the dispensing outcomes alone.
pub fn dispensed(state: &WorkflowState) -> BTreeMap<&'static str, Micros> {
    let mut out = BTreeMap::from([("NaCl", Micros(0)), ("water", Micros(0))]);
    for s in state.samples.values() {
        for o in s.history.iter().filter(|o| o.success) {
            let (material, reading) = match o.op.as_str() {
                "dispense_solid" => ("NaCl", "final_weight"),
                "dispense_liquid" => ("water", "dispensed_volume"),
                _ => continue,
            };
            *out.get_mut(material).unwrap() += Micros((o.readings[reading].value * 1e6).round() as i64);
        }
    }
    out
}

/// Scheduling is a pure function of the state and agrees with the reference.
pub fn check_scheduler(robots: &[RobotGen], jobs: &[JobGen], paused: bool) -> Result<(), TestCaseError> {
    let state = queued_state(robots, jobs, paused);
    let before = serde_json::to_vec(&state).unwrap();
    let first = schedule_robot_jobs(&state);
    prop_assert_eq!(&serde_json::to_vec(&state).unwrap(), &before);
    prop_assert_eq!(&schedule_robot_jobs(&state), &first);
    prop_assert_eq!(&first, &reference_schedule(&state));

    let robots_used: BTreeSet<_> = first.iter().map(|(_, r)| r).collect();
    prop_assert_eq!(robots_used.len(), first.len());

    // a serialised copy schedules identically
    let copy: WorkflowState = serde_json::from_slice(&before).unwrap();
    prop_assert_eq!(schedule_robot_jobs(&copy), first);
    Ok(())
}

/// Identical robots at one spot: the smallest id takes the job.
pub fn check_tie_break(location: usize, from: usize, names: &BTreeSet<String>) -> Result<(), TestCaseError> {
    let robots: Vec<RobotGen> = names
        .iter()
        .rev()
        .map(|id| RobotGen { id: id.clone(), location, mobile: true, transport: true, manipulate: false, available: true })
        .collect();
    let mut state = queued_state(&robots, &[JobGen { from, to_offset: 1, manipulate: false }], false);
    state.robots.remove("kuka_kmr");
    let picked = schedule_robot_jobs(&state);
    prop_assert_eq!(picked, vec![(1, names.iter().next().unwrap().clone())]);
    Ok(())
}

/// Under any fault schedule every sample terminates, nothing stays held, the
/// ledger closes and no sample is ever held twice.
pub fn check_drain(seed: u64, faults: Vec<FaultSpec>, count: u32, crystallise: bool) -> Result<(), TestCaseError> {
    let scenario = Scenario { seed, faults, ..super::scenario("default") };
    let authority = Arc::new(StateAuthority::bootstrap(super::lab(), Box::new(MemoryStore::new())).unwrap());
    let registry = Registry::with_builtins();
    let mut engine = Engine::new(authority.clone(), &registry, &scenario, 0, EngineConfig::default()).unwrap();
    let recipe = if crystallise { "crystallisation" } else { "solubility" };
    engine.submit(super::recipe(recipe), count, "kmr_deck").unwrap();
    let end = drive(&mut engine);

    for s in end.samples.values() {
        prop_assert!(s.assignment.is_terminal(), "sample {} left {:?}", s.id, s.assignment);
        prop_assert!(s.finished_at.is_some());
    }
    prop_assert!(end.robot_job_queue.is_empty());
    prop_assert!(end.stations.values().all(|st| st.assigned_sample.is_none()));
    prop_assert!(end.robots.values().all(|r| r.assigned_job.is_none()));
    prop_assert_eq!(check_invariants(&end), Vec::<String>::new());

    let journal = authority.records();
    super::audit_single_assignment(&journal);
    super::audit_every_revision(&journal);

    let drawn = dispensed(&end);
    for (name, m) in &end.materials {
        prop_assert_eq!(m.initial - m.remaining, drawn[name.as_str()], "{}", name);
    }
    Ok(())
}
