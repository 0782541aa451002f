//! Robot job assignment: FIFO over the queue, nearest capable robot first.

use std::collections::BTreeSet;

use crate::state::{JobId, JobKind, RobotJob, RobotModel, WorkflowState};

fn eligible(state: &WorkflowState, robot: &RobotModel, job: &RobotJob) -> bool {
    robot.accepts_work()
        && robot.capabilities.contains(&job.capability)
        && match job.kind {
            JobKind::Transport => robot.mobile,
            JobKind::Manipulate => state.topology.same_cell(&robot.location, &job.from),
        }
}

/// (job, robot) pairs for this tick. Ties on distance go to the smaller robot
/// id; jobs without an eligible robot stay queued. Blocked states schedule nothing.
pub fn schedule_robot_jobs(state: &WorkflowState) -> Vec<(JobId, String)> {
    if state.blocked() {
        return Vec::new();
    }
    let mut taken: BTreeSet<&str> = BTreeSet::new();
    let mut out = Vec::new();
    for job in &state.robot_job_queue {
        let best = state
            .robots
            .values()
            .filter(|r| !taken.contains(r.id.as_str()) && eligible(state, r, job))
            .filter_map(|r| state.topology.distance(&r.location, &job.from).map(|d| (d, &r.id)))
            .min();
        if let Some((_, robot)) = best {
            taken.insert(robot);
            out.push((job.id, robot.clone()));
        }
    }
    out
}
