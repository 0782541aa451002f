//! Command line: `run`, `validate` and `replay`.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{mpsc, Arc};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use archemist_core::orchestrator::{validate_for_lab, Engine, EngineConfig, Speed, SubmitError};
use archemist_core::persistence::{open_store, recover, MemoryStore, OpenMode, Store};
use archemist_core::recipe::{parse_recipe, Recipe, RecipeDoc};
use archemist_core::simlab::Scenario;
use archemist_core::state::{init_from_config, ConfigDoc, Registry, StateAuthority, StateEvent, WorkflowState};

use crate::api::{router, AppState};
use crate::view::{mass_trace, StateView};

#[derive(Debug, Parser)]
#[command(name = "archemist", version, about = "Recipe-driven lab workflow engine on a simulated lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Boot a lab, submit samples and run them to completion.
    Run(RunArgs),
    /// Check a recipe document; exit 1 on any diagnostic.
    Validate {
        recipe: PathBuf,
        /// Also check that this lab can run the recipe.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Rebuild the state from a journal directory and print it.
    Replay {
        journal: PathBuf,
        /// Print the view and mass trace as one JSON object.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub recipe: PathBuf,
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Ticks per second, or `max`.
    #[arg(long, default_value = "1")]
    pub speed: Speed,
    /// Serve the HTTP API on this address and keep running.
    #[arg(long)]
    pub serve: Option<SocketAddr>,
    /// Journal directory; one subdirectory per run when `--runs` > 1.
    #[arg(long)]
    pub journal: Option<PathBuf>,
    /// Continue the run journaled in `--journal`.
    #[arg(long, requires = "journal")]
    pub resume: bool,
    /// Independent single-sample runs, numbered from `--run`.
    #[arg(long, default_value_t = 1)]
    pub runs: u32,
    #[arg(long, default_value_t = 0)]
    pub run: u32,
    /// Samples per run.
    #[arg(long, default_value_t = 1)]
    pub count: u32,
    #[arg(long, default_value = "kmr_deck")]
    pub location: String,
    /// Write the final state of the last run here as JSON.
    #[arg(long)]
    pub state_out: Option<PathBuf>,
    /// Abort the process right after the first outcome of this operation is journaled.
    #[arg(long, hide = true)]
    pub crash_after_op: Option<String>,
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: recipe, lab file, scenario or arguments.
    #[error("{0}")]
    Invalid(String),
    /// Failure while running.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Invalid(_) => ExitCode::from(1),
            CliError::Runtime(_) => ExitCode::from(2),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn load_recipe(path: &Path) -> Result<Recipe, CliError> {
    let text = read(path)?;
    let source = path.display().to_string();
    parse_recipe(&RecipeDoc::new(text.clone(), source.clone())).map_err(|list| {
        let lines: Vec<String> = list.iter().map(|d| d.render(&source)).collect();
        CliError::Invalid(lines.join("\n"))
    })
}

fn load_lab(path: &Path, registry: &Registry) -> Result<WorkflowState, CliError> {
    let config = ConfigDoc::parse(&read(path)?).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    init_from_config(&config, registry).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn load_scenario(path: Option<&Path>) -> Result<Scenario, CliError> {
    match path {
        None => Ok(Scenario::default()),
        Some(p) => Scenario::parse(&read(p)?).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display()))),
    }
}

fn lab_diagnostics(recipe: &Recipe, lab: &WorkflowState, source: &str) -> Result<(), CliError> {
    let diagnostics = validate_for_lab(recipe, lab);
    if diagnostics.is_empty() {
        return Ok(());
    }
    let lines: Vec<String> = diagnostics.iter().map(|d| d.render(source)).collect();
    Err(CliError::Invalid(lines.join("\n")))
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        CliCommand::Run(args) => run(&args),
        CliCommand::Validate { recipe, config } => validate(&recipe, config.as_deref()),
        CliCommand::Replay { journal, json } => replay(&journal, json),
    }
}

fn validate(path: &Path, config: Option<&Path>) -> Result<(), CliError> {
    let recipe = load_recipe(path)?;
    if let Some(config) = config {
        let lab = load_lab(config, &Registry::with_builtins())?;
        lab_diagnostics(&recipe, &lab, &path.display().to_string())?;
    }
    println!("{}: ok ({} flow nodes)", path.display(), recipe.flow.nodes.len());
    Ok(())
}

fn replay(dir: &Path, json: bool) -> Result<(), CliError> {
    let store = open_store(dir, OpenMode::Resume).map_err(runtime)?;
    let state = store.load().map_err(runtime)?;
    let view = StateView::of(&state);
    let trace = mass_trace(&state);
    if json {
        let out = serde_json::json!({ "state": view, "mass_trace": trace });
        println!("{}", serde_json::to_string_pretty(&out).map_err(runtime)?);
        return Ok(());
    }
    println!("revision {} at tick {}", view.revision, view.tick);
    for s in &view.samples {
        let holder = s.holder.as_deref().map(|h| format!(" held by {h}")).unwrap_or_default();
        let failure = s.failure.as_deref().map(|f| format!(" ({f})")).unwrap_or_default();
        println!(
            "sample {} {:?} at {} cursor {}{holder}{failure}, {} outcomes",
            s.id, s.assignment, s.location, s.cursor, s.history_len
        );
    }
    for m in &view.materials {
        println!("{} {}/{} {}", m.name, m.remaining, m.initial, m.unit);
    }
    for a in &view.open_alerts {
        println!("alert {} [{}] {}", a.id, a.severity, a.message);
    }
    println!("mass trace ({} readings)", trace.len());
    for p in &trace {
        println!("  sample {} tick {:>6} {} {} {:.4} g", p.sample, p.tick, p.device, p.op, p.mass_g);
    }
    Ok(())
}

struct Inputs {
    registry: Registry,
    lab: WorkflowState,
    recipe: Arc<Recipe>,
    scenario: Scenario,
}

fn run(args: &RunArgs) -> Result<(), CliError> {
    if args.runs == 0 || args.count == 0 {
        return Err(CliError::Invalid("--runs and --count must be at least 1".into()));
    }
    if args.resume && args.runs > 1 {
        return Err(CliError::Invalid("--resume continues a single run".into()));
    }
    let registry = Registry::with_builtins();
    let lab = load_lab(&args.config, &registry)?;
    let recipe = load_recipe(&args.recipe)?;
    lab_diagnostics(&recipe, &lab, &args.recipe.display().to_string())?;
    let inputs = Inputs {
        registry,
        lab,
        recipe: Arc::new(recipe),
        scenario: load_scenario(args.scenario.as_deref())?,
    };

    let (mut complete, mut failed) = (0, 0);
    let mut last = None;
    for run in args.run..args.run + args.runs {
        let dir = args.journal.as_ref().map(|d| match args.runs {
            1 => d.clone(),
            _ => d.join(format!("run-{run}")),
        });
        let started = Instant::now();
        let state = run_one(args, &inputs, run, dir.as_deref())?;
        let view = StateView::of(&state);
        println!(
            "run {run}: {} complete, {} failed, {} ticks, {:.1} ms",
            view.metrics.completed,
            view.metrics.failed,
            elapsed_ticks(&state),
            started.elapsed().as_secs_f64() * 1e3
        );
        for s in view.samples.iter().filter(|s| s.failure.is_some()) {
            println!("  sample {} failed: {}", s.id, s.failure.as_deref().unwrap_or_default());
        }
        complete += view.metrics.completed;
        failed += view.metrics.failed;
        last = Some(state);
    }
    if args.runs > 1 {
        println!("total: {complete} complete, {failed} failed");
    }
    if let (Some(path), Some(state)) = (&args.state_out, &last) {
        fs::write(path, serde_json::to_vec(state).map_err(runtime)?).map_err(runtime)?;
    }
    Ok(())
}

/// Ticks from the first submission to the last sample finishing.
pub fn elapsed_ticks(state: &WorkflowState) -> u64 {
    let start = state.samples.values().map(|s| s.submitted_at).min().unwrap_or(0);
    let end = state.samples.values().filter_map(|s| s.finished_at).max().unwrap_or(start);
    end - start
}

fn run_one(args: &RunArgs, inputs: &Inputs, run: u32, dir: Option<&Path>) -> Result<WorkflowState, CliError> {
    let authority = match (dir, args.resume) {
        (None, _) => StateAuthority::bootstrap(inputs.lab.clone(), Box::new(MemoryStore::new())).map_err(runtime)?,
        (Some(dir), false) => {
            let store = open_store(dir, OpenMode::Fresh).map_err(runtime)?;
            StateAuthority::bootstrap(inputs.lab.clone(), Box::new(store)).map_err(runtime)?
        }
        (Some(dir), true) => {
            let mut store = open_store(dir, OpenMode::Resume).map_err(runtime)?;
            let state = recover(&mut store, &inputs.registry).map_err(runtime)?;
            StateAuthority::resume(state, Box::new(store)).map_err(runtime)?
        }
    };
    let authority = Arc::new(authority);
    if let Some(op) = args.crash_after_op.clone() {
        authority.observe(Box::new(move |record, _| {
            if let StateEvent::Outcome { outcome, .. } = &record.event {
                if outcome.op == op {
                    std::process::abort();
                }
            }
        }));
    }

    let config = EngineConfig {
        speed: args.speed,
        ..EngineConfig::default()
    };
    let mut engine = Engine::new(authority.clone(), &inputs.registry, &inputs.scenario, run, config).map_err(runtime)?;
    if authority.snapshot().samples.is_empty() {
        engine
            .submit(inputs.recipe.clone(), args.count, &args.location)
            .map_err(|e| match e {
                SubmitError::Invalid(_) | SubmitError::Rejected(_) => CliError::Invalid(e.to_string()),
                SubmitError::Halted => runtime(e),
            })?;
    }

    match args.serve {
        None => engine.run_until_idle().map_err(runtime),
        Some(addr) => serve(engine, authority, addr, &args.location),
    }
}

/// Runs the engine on its own thread and the API on this one, until the
/// process is stopped.
fn serve(engine: Engine, authority: Arc<StateAuthority>, addr: SocketAddr, location: &str) -> Result<WorkflowState, CliError> {
    let (tx, rx) = mpsc::channel();
    let app = AppState::new(authority.clone(), tx, location);
    let mut engine = engine.with_commands(rx);
    let worker = std::thread::spawn(move || engine.serve());

    let rt = tokio::runtime::Runtime::new().map_err(runtime)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(runtime)?;
        println!("listening on http://{}", listener.local_addr().map_err(runtime)?);
        axum::serve(listener, router(app)).await.map_err(runtime)
    })?;
    worker
        .join()
        .map_err(|_| CliError::Runtime("engine thread panicked".into()))?
        .map_err(runtime)?;
    Ok((*authority.snapshot()).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arguments_parse() {
        let cli = Cli::try_parse_from([
            "archemist", "run", "--config", "lab.yaml", "--recipe", "r.yaml", "--speed", "max", "--runs", "10",
        ])
        .unwrap();
        let CliCommand::Run(args) = cli.command else { panic!() };
        assert_eq!(args.speed, Speed::Max);
        assert_eq!(args.runs, 10);
        assert!(!args.resume);
    }

    #[test]
    fn default_speed_is_one_tick_per_second() {
        let cli = Cli::try_parse_from(["archemist", "run", "--config", "a", "--recipe", "b"]).unwrap();
        let CliCommand::Run(args) = cli.command else { panic!() };
        assert_eq!(args.speed, Speed::TicksPerSecond(1.0));
    }

    #[test]
    fn resume_needs_a_journal() {
        assert!(Cli::try_parse_from(["archemist", "run", "--config", "a", "--recipe", "b", "--resume"]).is_err());
    }

    #[test]
    fn bad_speed_is_refused() {
        assert!(Cli::try_parse_from(["archemist", "run", "--config", "a", "--recipe", "b", "--speed", "-3"]).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Invalid(String::new()).exit_code(), ExitCode::from(1));
        assert_eq!(CliError::Runtime(String::new()).exit_code(), ExitCode::from(2));
    }
}
