//! Recipe execution: processor, robot scheduler, device handlers, monitor
//! and alert rules, driven by a deterministic tick loop.

mod alerts;
mod engine;
mod handlers;
mod lab;
mod monitor;
mod processor;
mod scheduler;
mod success;

pub use alerts::{condition_holds, evaluate_alerts};
pub use engine::{
    run_batch, run_once, Command, CommandError, Engine, EngineConfig, EngineError, RunError, RunResult, Speed,
    SubmitError,
};
pub use handlers::{outcome_event, HandlerStatus, HandlerTask, TIMEOUT_REASON};
pub use lab::validate_for_lab;
pub use monitor::{device_rule, monitor_tick};
pub use processor::{processor_tick, Decision};
pub use scheduler::schedule_robot_jobs;
pub use success::{outcome_to_success, previous_values};
