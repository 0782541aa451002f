//! The control loop. Each simulated tick runs, in order: queued operator
//! commands, every handler (by target id), the monitor, the alert rules, then
//! the processor and the scheduler unless processing is held.

use std::sync::mpsc::{Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use super::alerts::evaluate_alerts;
use super::handlers::{as_failure, HandlerTask};
use super::lab::validate_for_lab;
use super::monitor::monitor_tick;
use super::processor::processor_tick;
use super::scheduler::schedule_robot_jobs;
use crate::persistence::{MemoryStore, Store};
use crate::recipe::{Diagnostic, Recipe};
use crate::simlab::{Bus, BusError, Scenario};
use crate::state::{
    AlertId, AuthorityError, ControlCommand, Registry, Sample, SampleId, StateAuthority, StateError, StateEvent,
    TargetKind, WorkflowState,
};

/// Ticks per wall-clock second, or as fast as possible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Speed {
    Max,
    TicksPerSecond(f64),
}

impl std::str::FromStr for Speed {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "max" {
            return Ok(Speed::Max);
        }
        match s.parse::<f64>() {
            Ok(n) if n > 0.0 && n.is_finite() => Ok(Speed::TicksPerSecond(n)),
            _ => Err(format!("speed must be a positive number or 'max', got '{s}'")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub speed: Speed,
    /// Give up when a run has not finished after this many ticks.
    pub max_ticks: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            speed: Speed::Max,
            max_ticks: 1_000_000,
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Authority(#[from] AuthorityError),
    #[error("processing is held at tick {tick} with no work in flight")]
    Stalled { tick: u64 },
    #[error("run did not finish within {0} ticks")]
    TickLimit(u64),
}

#[derive(Debug, Error)]
pub enum SubmitError {
    #[error("processing is halted")]
    Halted,
    #[error("recipe cannot run on this lab")]
    Invalid(Vec<Diagnostic>),
    #[error("invalid submission: {0}")]
    Rejected(String),
}

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("unknown alert {0}")]
    UnknownAlert(AlertId),
    #[error(transparent)]
    Authority(#[from] AuthorityError),
}

/// Operator requests, applied at the start of the next tick.
pub enum Command {
    Submit {
        recipe: Arc<Recipe>,
        count: u32,
        location: String,
        reply: Sender<Result<Vec<SampleId>, SubmitError>>,
    },
    Control {
        command: ControlCommand,
        reply: Sender<Result<u64, CommandError>>,
    },
    Ack {
        alert: AlertId,
        reply: Sender<Result<u64, CommandError>>,
    },
    Shutdown,
}

pub struct Engine {
    authority: Arc<StateAuthority>,
    bus: Bus,
    handlers: Vec<HandlerTask>,
    commands: Option<Receiver<Command>>,
    config: EngineConfig,
    tick: u64,
    held: bool,
    shutdown: bool,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("tick", &self.tick).field("bus", &self.bus).finish_non_exhaustive()
    }
}

impl Engine {
    /// Builds the bus and one handler per device for the authority's state.
    /// The clock resumes at the state's clock.
    pub fn new(
        authority: Arc<StateAuthority>,
        registry: &Registry,
        scenario: &Scenario,
        run: u32,
        config: EngineConfig,
    ) -> Result<Self, EngineError> {
        let state = authority.snapshot();
        let bus = Bus::for_state(&state, registry, scenario, run)?;
        let mut handlers: Vec<HandlerTask> = state
            .stations
            .keys()
            .map(|id| HandlerTask::new(id, TargetKind::Station))
            .chain(state.robots.keys().map(|id| HandlerTask::new(id, TargetKind::Robot)))
            .collect();
        handlers.sort_by(|a, b| a.target.cmp(&b.target));
        Ok(Self {
            held: state.blocked(),
            tick: state.clock,
            authority,
            bus,
            handlers,
            commands: None,
            config,
            shutdown: false,
        })
    }

    pub fn with_commands(mut self, commands: Receiver<Command>) -> Self {
        self.commands = Some(commands);
        self
    }

    pub fn authority(&self) -> &Arc<StateAuthority> {
        &self.authority
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn handlers(&self) -> &[HandlerTask] {
        &self.handlers
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    fn commit(&self, event: StateEvent) -> Result<u64, AuthorityError> {
        self.authority.commit(event)
    }

    /// Adds `count` fresh samples at `location`.
    pub fn submit(&self, recipe: Arc<Recipe>, count: u32, location: &str) -> Result<Vec<SampleId>, SubmitError> {
        let state = self.authority.snapshot();
        if state.halted() {
            return Err(SubmitError::Halted);
        }
        if count == 0 {
            return Err(SubmitError::Rejected("count must be at least 1".into()));
        }
        if !state.topology.contains(location) || location == crate::state::LIMBO {
            return Err(SubmitError::Rejected(format!("unknown location '{location}'")));
        }
        let diagnostics = validate_for_lab(&recipe, &state);
        if !diagnostics.is_empty() {
            return Err(SubmitError::Invalid(diagnostics));
        }
        let first = state.next_sample;
        let samples: Vec<Sample> = (0..count)
            .map(|i| Sample::new(first + i, recipe.clone(), location, self.tick))
            .collect();
        let ids = samples.iter().map(|s| s.id).collect();
        self.commit(StateEvent::Submit { tick: self.tick, samples })
            .map_err(|e| SubmitError::Rejected(e.to_string()))?;
        Ok(ids)
    }

    /// Applies an operator command. Repeating one that is already in effect
    /// journals nothing and returns the current revision.
    pub fn control(&self, command: ControlCommand) -> Result<u64, CommandError> {
        let state = self.authority.snapshot();
        let c = state.control;
        let in_effect = match command {
            ControlCommand::Pause => c.paused,
            ControlCommand::Resume => !c.paused && !c.halted,
            ControlCommand::Halt => c.halted,
        };
        if in_effect {
            return Ok(state.revision);
        }
        Ok(self.commit(StateEvent::Control { tick: self.tick, command })?)
    }

    pub fn ack(&self, alert: AlertId) -> Result<u64, CommandError> {
        match self.commit(StateEvent::Ack { tick: self.tick, alert }) {
            Err(AuthorityError::Rejected(StateError::UnknownAlert(id))) => Err(CommandError::UnknownAlert(id)),
            other => Ok(other?),
        }
    }

    fn handle(&mut self, command: Command) {
        // a dropped reply channel only means the requester went away
        match command {
            Command::Submit { recipe, count, location, reply } => {
                let _ = reply.send(self.submit(recipe, count, &location));
            }
            Command::Control { command, reply } => {
                let _ = reply.send(self.control(command));
            }
            Command::Ack { alert, reply } => {
                let _ = reply.send(self.ack(alert));
            }
            Command::Shutdown => self.shutdown = true,
        }
    }

    fn drain_commands(&mut self) {
        let Some(rx) = self.commands.take() else { return };
        while let Ok(cmd) = rx.try_recv() {
            self.handle(cmd);
        }
        self.commands = Some(rx);
    }

    /// Commits an outcome, falling back to a failure when the state refuses
    /// the reply as reported.
    fn commit_outcome(&self, event: StateEvent) -> Result<(), EngineError> {
        match self.commit(event.clone()) {
            Ok(_) => Ok(()),
            Err(AuthorityError::Rejected(e @ (StateError::SchemaMismatch(_) | StateError::InsufficientStock(_)))) => {
                let fallback = as_failure(&event, e.to_string()).expect("outcome event");
                self.commit(fallback)?;
                Ok(())
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Runs one tick.
    pub fn step(&mut self) -> Result<(), EngineError> {
        let tick = self.tick;
        self.drain_commands();

        for i in 0..self.handlers.len() {
            let state = self.authority.snapshot();
            if let Some(event) = self.handlers[i].step(&state, &mut self.bus, tick) {
                self.commit_outcome(event)?;
            }
        }

        let state = self.authority.snapshot();
        for event in monitor_tick(&state, tick, |id| self.bus.health(id, tick)) {
            self.commit(event)?;
        }
        let state = self.authority.snapshot();
        for event in evaluate_alerts(&state, tick) {
            self.commit(event)?;
        }

        let state = self.authority.snapshot();
        let blocked = state.blocked();
        if blocked && !self.held {
            let why = if state.control.paused { "paused" } else { "halted" };
            self.commit(StateEvent::MonitorNote {
                tick,
                message: format!("processing {why}; no new assignments"),
            })?;
        }
        self.held = blocked;
        if !blocked {
            for decision in processor_tick(&state) {
                if let Some(event) = decision.into_event(tick) {
                    self.commit(event)?;
                }
            }
            let state = self.authority.snapshot();
            for (job, robot) in schedule_robot_jobs(&state) {
                self.commit(StateEvent::AssignRobot { tick, job, robot })?;
            }
        }
        self.tick += 1;
        Ok(())
    }

    fn in_flight(&self) -> bool {
        self.handlers.iter().any(HandlerTask::is_executing)
    }

    /// Every sample is complete or failed and no device is busy.
    pub fn is_idle(&self) -> bool {
        let state = self.authority.snapshot();
        state.all_terminal() && !self.in_flight() && state.stations.values().all(|s| s.assigned_sample.is_none())
    }

    fn pace(&self, started: Instant, ticks_done: u64) {
        if let Speed::TicksPerSecond(rate) = self.config.speed {
            let target = started + Duration::from_secs_f64(ticks_done as f64 / rate);
            if let Some(wait) = target.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
    }

    /// Steps until every sample has finished. A held state with nothing in
    /// flight stalls unless a command channel is attached to release it.
    pub fn run_until_idle(&mut self) -> Result<WorkflowState, EngineError> {
        let start = self.tick;
        let started = Instant::now();
        while !self.is_idle() && !self.shutdown {
            if self.tick - start >= self.config.max_ticks {
                return Err(EngineError::TickLimit(self.config.max_ticks));
            }
            let state = self.authority.snapshot();
            if state.blocked() && !self.in_flight() {
                if !self.wait_for_command(Duration::from_millis(50)) {
                    return Err(EngineError::Stalled { tick: self.tick });
                }
                continue;
            }
            self.step()?;
            self.pace(started, self.tick - start);
        }
        Ok((*self.authority.snapshot()).clone())
    }

    /// Blocks for one command. False when no channel is attached or it closed.
    fn wait_for_command(&mut self, timeout: Duration) -> bool {
        let Some(rx) = self.commands.take() else { return false };
        let alive = match rx.recv_timeout(timeout) {
            Ok(cmd) => {
                self.handle(cmd);
                true
            }
            Err(RecvTimeoutError::Timeout) => true,
            Err(RecvTimeoutError::Disconnected) => false,
        };
        self.commands = Some(rx);
        alive
    }

    /// Serves commands until shutdown, stepping whenever there is work.
    pub fn serve(&mut self) -> Result<(), EngineError> {
        while !self.shutdown {
            let state = self.authority.snapshot();
            let idle = self.is_idle() || (state.blocked() && !self.in_flight());
            if idle {
                if !self.wait_for_command(Duration::from_millis(50)) {
                    return Ok(());
                }
                continue;
            }
            let started = Instant::now();
            self.step()?;
            self.pace(started, 1);
        }
        Ok(())
    }
}

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub run: u32,
    pub state: WorkflowState,
    pub journal: Vec<crate::persistence::JournalRecord>,
    /// Simulated ticks from submission to the last sample finishing.
    pub ticks: u64,
    pub wall: Duration,
}

/// Boots `initial` on `store`, submits `count` samples of `recipe` at
/// `location` and runs to completion.
#[allow(clippy::too_many_arguments)]
pub fn run_once(
    initial: &WorkflowState,
    store: Box<dyn Store>,
    registry: &Registry,
    scenario: &Scenario,
    recipe: Arc<Recipe>,
    count: u32,
    location: &str,
    run: u32,
    config: EngineConfig,
) -> Result<RunResult, RunError> {
    let started = Instant::now();
    let authority = Arc::new(StateAuthority::bootstrap(initial.clone(), store).map_err(EngineError::from)?);
    let mut engine = Engine::new(authority.clone(), registry, scenario, run, config)?;
    let start = engine.tick();
    engine.submit(recipe, count, location)?;
    let state = engine.run_until_idle()?;
    let ticks = state.samples.values().filter_map(|s| s.finished_at).max().unwrap_or(start) - start;
    Ok(RunResult {
        run,
        journal: authority.records(),
        state,
        ticks,
        wall: started.elapsed(),
    })
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Submit(#[from] SubmitError),
}

/// `runs` independent single-sample runs in memory, run index 0..runs.
pub fn run_batch(
    initial: &WorkflowState,
    registry: &Registry,
    scenario: &Scenario,
    recipe: Arc<Recipe>,
    location: &str,
    runs: u32,
) -> Result<Vec<RunResult>, RunError> {
    (0..runs)
        .map(|run| {
            run_once(
                initial,
                Box::new(MemoryStore::new()),
                registry,
                scenario,
                recipe.clone(),
                1,
                location,
                run,
                EngineConfig::default(),
            )
        })
        .collect()
}
