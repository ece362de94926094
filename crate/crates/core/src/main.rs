use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crossloop::config::{ConfigError, TaskFile, WorkspaceConfig};
use crossloop::engine::{self, Engine, EngineConfig, EngineError, RunResult, Termination};
use crossloop::par::Exec;
use crossloop::report::load_report;
use crossloop::sandbox::ProcessSandbox;
use crossloop::state::{self, TaskState};

#[derive(Debug, Parser)]
#[command(name = "crossloop", version, about = "Repeated-attempt repository generation with cross-attempt knowledge")]
struct Cli {
    /// Workspace configuration file.
    #[arg(long, short, global = true, default_value = "crossloop.toml")]
    config: PathBuf,
    /// Mirror the engine event log to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    /// Disable data-parallel execution (tasks, retrieval, analysis).
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one or more tasks from their task files.
    Run {
        #[arg(required = true)]
        tasks: Vec<PathBuf>,
    },
    /// Continue persisted tasks from their next attempt.
    Resume {
        #[arg(required = true)]
        task_ids: Vec<String>,
        /// Script for the scripted backend, overriding the configured one.
        #[arg(long)]
        script: Option<PathBuf>,
    },
    /// Summarize persisted tasks.
    Report {
        /// Aggregate per attempt index across tasks.
        #[arg(long)]
        by_attempt: bool,
    },
    /// Print the persisted state of a task.
    ShowState { task_id: String },
    /// Copy a task's best repository to a directory.
    ExportBest {
        task_id: String,
        #[arg(long)]
        to: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    State(#[from] state::StateError),
    #[error(transparent)]
    Report(#[from] crossloop::report::ReportError),
    #[error("task `{0}` has no best repository yet (no-best-yet)")]
    NoBestYet(String),
    #[error("export target {0} exists and is not an empty directory")]
    TargetNotEmpty(PathBuf),
    #[error("i/o failure at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<ExitCode, CliError> {
    let config = WorkspaceConfig::load(&cli.config)?;
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    match &cli.command {
        Command::Run { tasks } => {
            let files = tasks
                .iter()
                .map(|p| TaskFile::load(p, &config.defaults))
                .collect::<Result<Vec<_>, _>>()?;
            let engine_config = config.engine_config(cli.verbose, exec)?;
            let results = exec.map(&files, |task| {
                let id = task.spec.task_id.clone();
                let result = with_engine(&config, &engine_config, task.script.as_deref(), |engine| {
                    engine::run_task(task.spec.clone(), &config.workspace_dir, engine)
                });
                (id, result)
            });
            Ok(summarize(&config, results))
        }
        Command::Resume { task_ids, script } => {
            let engine_config = config.engine_config(cli.verbose, exec)?;
            let results = exec.map(task_ids, |id| {
                let result = with_engine(&config, &engine_config, script.as_deref(), |engine| {
                    engine::resume(id, &config.workspace_dir, engine)
                });
                (id.clone(), result)
            });
            Ok(summarize(&config, results))
        }
        Command::Report { by_attempt } => {
            let report = load_report(&config.workspace_dir)?;
            if *by_attempt {
                print!("{}", report.render_by_attempt());
            } else {
                print!("{}", report.render_by_task());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ShowState { task_id } => {
            let state = state::load(&config.workspace_dir, task_id)?;
            print!("{}", describe(&state));
            Ok(ExitCode::SUCCESS)
        }
        Command::ExportBest { task_id, to } => {
            let state = state::load(&config.workspace_dir, task_id)?;
            let best = state.historical_best().ok_or_else(|| CliError::NoBestYet(task_id.clone()))?;
            export(&best.repo, to)?;
            println!("exported {} files to {}", best.repo.len(), to.display());
            println!("digest {}", best.repo.digest().to_hex());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn with_engine<T>(
    config: &WorkspaceConfig,
    engine_config: &EngineConfig,
    script: Option<&Path>,
    run: impl FnOnce(&mut Engine<'_>) -> Result<T, EngineError>,
) -> Result<T, CliError> {
    let mut model = config.build_model(script)?;
    let embedder = config.build_embedder()?;
    let sandbox = ProcessSandbox::new(config.sandbox_config());
    let mut engine = Engine { model: model.as_mut(), embedder: embedder.as_ref(), sandbox: &sandbox, config: engine_config };
    Ok(run(&mut engine)?)
}

/// Exit 0 when every task reached full score, 2 when some exhausted the
/// budget, 1 when any failed.
fn summarize(config: &WorkspaceConfig, results: Vec<(String, Result<RunResult, CliError>)>) -> ExitCode {
    // -1 marks an error, which outranks an exhausted budget.
    let mut code: i32 = 0;
    for (id, result) in results {
        match result {
            Ok(r) => {
                let how = match r.terminated_by {
                    Termination::FullScoreReached => "full score reached",
                    Termination::BudgetExhausted => {
                        if code == 0 {
                            code = 2;
                        }
                        "budget exhausted"
                    }
                };
                println!("{id}: final score {} after {} attempts ({how})", r.final_score, r.attempts_executed);
                println!("{id}: best repository {}", state::task_dir(&config.workspace_dir, &id).join("best_repo").display());
            }
            Err(err) => {
                eprintln!("{id}: error: {err}");
                code = -1;
            }
        }
    }
    ExitCode::from(if code < 0 { 1 } else { code as u8 })
}

fn describe(state: &TaskState) -> String {
    let spec = state.spec();
    let mut out = format!(
        "task: {}\nfull score: {}\nattempt budget: {}\ninternal iterations: {}\ntimeout: {}s\ntest command: {}\n",
        spec.task_id, spec.full_score, spec.attempt_budget, spec.internal_iteration_budget, spec.timeout_seconds, spec.test_command
    );
    out.push_str(&format!("requirement:\n  {}\n", spec.requirement.trim_end().replace('\n', "\n  ")));
    match state.historical_best() {
        Some(best) => out.push_str(&format!(
            "best: {} from attempt {} ({} files, digest {})\n",
            best.score,
            best.repo.created_in_attempt(),
            best.repo.len(),
            best.repo.digest().short()
        )),
        None => out.push_str("best: none\n"),
    }
    out.push_str(&format!("attempts: {}\n", state.attempts().len()));
    for a in state.attempts() {
        let mut line = format!(
            "  A{}: {}  iterations {}  generation calls {}  cost {}",
            a.attempt_index, a.functional_score, a.internal_iterations_used, a.generator_calls, a.usage.monetary_cost
        );
        if a.reused_historical_best {
            line.push_str("  [reused best]");
        }
        if let Some(tag) = &a.failure_tag {
            line.push_str(&format!("  [{tag}]"));
        }
        if let Some(q) = &a.nonfunctional {
            line.push_str(&format!("  quality {:.4}", q.nonfunctional_aggregate));
        }
        out.push_str(&line);
        out.push('\n');
    }
    for (label, entries) in [("success knowledge", state.success_knowledge()), ("failure knowledge", state.failure_knowledge())] {
        out.push_str(&format!("{label}: {} entries\n", entries.len()));
        for e in entries {
            out.push_str(&format!("  {} (attempt {}, {})\n", e.entry_id, e.source_attempt, e.associated_score));
            for line in e.summary_text.lines() {
                out.push_str(&format!("    {line}\n"));
            }
        }
    }
    out
}

fn export(repo: &crossloop::repo::RepositoryArtifact, to: &Path) -> Result<(), CliError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    if to.exists() {
        let empty = to.is_dir() && fs::read_dir(to).map_err(io(to))?.next().is_none();
        if !empty {
            return Err(CliError::TargetNotEmpty(to.to_path_buf()));
        }
    }
    for (path, bytes) in repo.files() {
        let target = to.join(path);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent).map_err(io(parent))?;
        }
        fs::write(&target, bytes).map_err(io(&target))?;
    }
    Ok(())
}
