//! Invariants under generated inputs: scheduling, assignment ownership,
//! material conservation and termination under injected faults.

mod support;

use proptest::prelude::*;

use support::lab::{check_drain, check_scheduler, check_tie_break, fault_gen, job_gen, robot_gen, NODES};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn scheduler_matches_reference_and_is_pure(
        robots in prop::collection::vec(robot_gen(), 0..5),
        jobs in prop::collection::vec(job_gen(), 0..7),
        paused in prop::bool::weighted(0.1),
    ) {
        check_scheduler(&robots, &jobs, paused)?;
    }

    #[test]
    fn twins_break_ties_by_id(
        location in 0..NODES.len(),
        from in 0..NODES.len(),
        names in prop::collection::btree_set("[a-z]{1,6}", 2..5),
    ) {
        check_tie_break(location, from, &names)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn failures_drain_under_random_faults(
        seed in any::<u64>(),
        faults in prop::collection::vec(fault_gen(), 1..6),
        count in 1u32..4,
        crystallise in prop::bool::weighted(0.15),
    ) {
        check_drain(seed, faults, count, crystallise)?;
    }
}
