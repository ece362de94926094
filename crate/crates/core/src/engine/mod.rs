//! The cross-attempt loop: short-circuit on a full historical best, otherwise
//! run an attempt, learn from it and keep the best repository seen so far.

mod log;

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::backend::{
    generate_repository, render_multifile, ChatModel, Decoding, Embedder, GenerationError, GenerationRequest,
    PriceTable, RetryPolicy, UsageMeter, DEFAULT_SYSTEM_PREAMBLE,
};
use crate::knowledge::{
    embed_text, extract_entries, render_prompt_context, retrieve, ExtractedEntries, ExtractionInput,
    ExtractionSettings, KnowledgeError, DEFAULT_TOP_K,
};
use crate::par::Exec;
use crate::quality::{functional_score, repository_maintainability, PythonAnalyzer, QualityReport, ScoringConfig};
use crate::repo::RepositoryArtifact;
use crate::sandbox::{ExecutionReport, ExitStatus, Sandbox, SandboxError};
use crate::score::{Fraction, Score};
use crate::state::{self, AttemptRecord, StateError, TaskLock, TaskSpec, TaskState};

pub use log::RunLog;

pub const GENERATION_FAILURE: &str = "generation-failure";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidatePolicy {
    /// Highest-scoring internal iteration; the earliest wins ties.
    #[default]
    Best,
    /// Whatever the final internal iteration produced.
    Last,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub top_k: usize,
    pub candidate_policy: CandidatePolicy,
    pub decoding: Decoding,
    pub retry: RetryPolicy,
    pub knowledge_cap: Option<usize>,
    pub prices: PriceTable,
    /// Non-functional scoring; `None` records functional scores only.
    pub scoring: Option<ScoringConfig>,
    pub system_preamble: String,
    pub verbose: bool,
    pub exec: Exec,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            top_k: DEFAULT_TOP_K,
            candidate_policy: CandidatePolicy::Best,
            decoding: Decoding::default(),
            retry: RetryPolicy::default(),
            knowledge_cap: None,
            prices: PriceTable::default(),
            scoring: None,
            system_preamble: DEFAULT_SYSTEM_PREAMBLE.to_string(),
            verbose: false,
            exec: Exec::default(),
        }
    }
}

/// Everything an attempt talks to.
pub struct Engine<'a> {
    pub model: &'a mut dyn ChatModel,
    pub embedder: &'a dyn Embedder,
    pub sandbox: &'a dyn Sandbox,
    pub config: &'a EngineConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    State(#[from] StateError),
    #[error("sandbox failure: {0}")]
    Sandbox(#[from] SandboxError),
    #[error("knowledge retrieval failed: {0}")]
    Knowledge(#[from] KnowledgeError),
    #[error("task `{0}` already has persisted state; use resume")]
    AlreadyStarted(String),
    #[error("no attempt of task `{0}` produced a repository")]
    NoCandidate(String),
    #[error("i/o failure writing attempt artifacts: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    FullScoreReached,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub final_repository: RepositoryArtifact,
    pub final_score: Score,
    pub attempts_executed: u32,
    pub terminated_by: Termination,
}

#[derive(Debug, Clone)]
pub struct AttemptOutcome {
    pub record: AttemptRecord,
    /// `None` when generation failed before any repository existed.
    pub candidate: Option<RepositoryArtifact>,
    pub feedback: String,
    pub extracted: ExtractedEntries,
}

/// True iff a historical best exists and meets the full score.
pub fn should_short_circuit(state: &TaskState) -> bool {
    state.best_score().is_some_and(|s| s.meets(state.spec().full_score))
}

struct Iteration {
    repo: RepositoryArtifact,
    report: ExecutionReport,
    score: Score,
}

fn exit_tag(status: ExitStatus) -> Option<String> {
    match status {
        ExitStatus::Completed => None,
        other => serde_json::to_value(other).ok().and_then(|v| v.as_str().map(str::to_owned)),
    }
}

/// One attempt: retrieval, up to `internal_iteration_budget` generate/execute
/// rounds, candidate selection and a single knowledge extraction.
pub fn run_attempt(state: &TaskState, engine: &mut Engine<'_>, log: &mut RunLog) -> Result<AttemptOutcome, EngineError> {
    let spec = state.spec();
    let config = engine.config;
    let t = state.next_attempt_index();
    let full: Fraction = spec.full_score;

    let success = retrieve(&spec.requirement, state.success_knowledge(), config.top_k, engine.embedder, config.exec)?;
    let failure = retrieve(&spec.requirement, state.failure_knowledge(), config.top_k, engine.embedder, config.exec)?;
    let knowledge_context = render_prompt_context(&success, &failure);
    log.event(t, "retrieval", json!({
        "success_hits": success.entry_ids(),
        "failure_hits": failure.entry_ids(),
    }));
    log.write_text(t, "prompt_context.txt", &knowledge_context);

    let mut meter = UsageMeter::new(config.prices);
    let mut candidate: Option<Iteration> = None;
    let mut last: Option<(String, String)> = None;
    let mut generation_error: Option<String> = None;
    let mut iterations = 0;

    while iterations < spec.internal_iteration_budget {
        iterations += 1;
        let request = GenerationRequest {
            system_preamble: config.system_preamble.clone(),
            requirement: spec.requirement.clone(),
            knowledge_context: knowledge_context.clone(),
            repair_feedback: last.as_ref().map(|(_, f)| f.clone()),
            previous_repository: last.as_ref().map(|(r, _)| r.clone()),
            decoding: config.decoding,
        };
        let calls_before = meter.generation_calls;
        let generated = generate_repository(engine.model, &request, t, &config.retry, &mut meter);
        log.event(t, "generation-call", json!({
            "iteration": iterations,
            "calls": meter.generation_calls - calls_before,
            "ok": generated.is_ok(),
            "error": generated.as_ref().err().map(ToString::to_string),
        }));
        let repo = match generated {
            Ok(repo) => repo,
            Err(err @ (GenerationError::Backend(_) | GenerationError::MalformedOutput(_))) => {
                generation_error = Some(err.to_string());
                break;
            }
        };

        let report = engine.sandbox.run(&repo, &spec.test_command, Duration::from_secs(spec.timeout_seconds))?;
        let score = functional_score(&report);
        let feedback = report.render_feedback();
        log.event(t, "execution-result", json!({
            "iteration": iterations,
            "score": score,
            "exit_status": report.exit_status,
            "wall_time_secs": report.wall_time_secs,
            "repository_digest": repo.digest(),
        }));
        log.write_text(t, &format!("iterations/{iterations}/feedback.txt"), &feedback);

        let done = score.meets(full);
        last = Some((render_multifile(&repo), feedback));
        let replace = match (&candidate, config.candidate_policy) {
            (None, _) | (_, CandidatePolicy::Last) => true,
            (Some(c), CandidatePolicy::Best) => score.beats(&c.score),
        };
        if replace {
            candidate = Some(Iteration { repo, report, score });
        }
        if done {
            break;
        }
    }

    let score = candidate.as_ref().map_or(Score::ZERO, |c| c.score);
    let mut feedback = candidate.as_ref().map(|c| c.report.render_feedback()).unwrap_or_default();
    if let Some(err) = &generation_error {
        feedback.push_str(&format!("Generation failed: {err}\n"));
    }

    let nonfunctional = match (&config.scoring, &candidate) {
        (Some(scoring), Some(c)) => quality_report(scoring, c, config.exec, t, log),
        _ => None,
    };

    let extraction_before = meter.extraction_calls;
    let input = ExtractionInput {
        requirement: &spec.requirement,
        repo: candidate.as_ref().map(|c| &c.repo),
        feedback: &feedback,
        score,
        attempt_index: t,
    };
    let settings = ExtractionSettings { decoding: config.decoding, retry: config.retry };
    let extracted = match extract_entries(&input, engine.model, engine.embedder, &settings, &mut meter) {
        Ok(entries) => entries,
        Err(err) => {
            log.event(t, "extraction-error", json!({ "error": err.to_string() }));
            ExtractedEntries::default()
        }
    };

    let failure_tag = if candidate.is_none() {
        Some(GENERATION_FAILURE.to_string())
    } else {
        candidate.as_ref().and_then(|c| exit_tag(c.report.exit_status))
    };
    let record = AttemptRecord {
        attempt_index: t,
        functional_score: score,
        nonfunctional,
        reused_historical_best: false,
        internal_iterations_used: iterations,
        generator_calls: meter.generation_calls,
        extraction_calls: meter.extraction_calls - extraction_before,
        usage: meter.usage,
        repository_digest: candidate.as_ref().map(|c| c.repo.digest()),
        failure_tag,
    };
    if let Some(c) = &candidate {
        log.write_repo(t, "repo", &c.repo);
    }
    Ok(AttemptOutcome { record, candidate: candidate.map(|c| c.repo), feedback, extracted })
}

fn quality_report(
    scoring: &ScoringConfig,
    candidate: &Iteration,
    exec: Exec,
    t: u32,
    log: &mut RunLog,
) -> Option<QualityReport> {
    let mi = repository_maintainability(&candidate.repo, &[&PythonAnalyzer], exec);
    match scoring.report(candidate.score, mi, &candidate.report.external_quality) {
        Ok(report) => {
            if let Some(r) = &report {
                log.write_json(t, "quality/report.json", r);
            }
            if !candidate.report.external_quality.is_empty() {
                log.write_json(t, "quality/raw.json", &candidate.report.external_quality);
            }
            report
        }
        Err(err) => {
            log.event(t, "quality-error", json!({ "error": err.to_string() }));
            None
        }
    }
}

/// Starts a task from an empty state and drives it to termination.
pub fn run_task(spec: TaskSpec, workspace: &Path, engine: &mut Engine<'_>) -> Result<RunResult, EngineError> {
    spec.validate()?;
    let _lock = TaskLock::acquire(workspace, &spec.task_id)?;
    if state::state_exists(workspace, &spec.task_id) {
        return Err(EngineError::AlreadyStarted(spec.task_id));
    }
    let mut state = TaskState::init(spec)?;
    state::persist(&state, workspace)?;
    drive(&mut state, Some(workspace), engine)
}

/// Continues a persisted task from its next attempt index, short-circuit first.
pub fn resume(task_id: &str, workspace: &Path, engine: &mut Engine<'_>) -> Result<RunResult, EngineError> {
    let _lock = TaskLock::acquire(workspace, task_id)?;
    let mut state = state::load(workspace, task_id)?;
    drive(&mut state, Some(workspace), engine)
}

/// The attempt loop over an in-memory state, persisting after every attempt
/// when a workspace is given.
pub fn drive(state: &mut TaskState, workspace: Option<&Path>, engine: &mut Engine<'_>) -> Result<RunResult, EngineError> {
    let task_dir = workspace.map(|w| state::task_dir(w, state.task_id()));
    let mut log = RunLog::new(state.task_id(), task_dir, engine.config.verbose);
    let budget = state.spec().attempt_budget;
    let requirement_embedding = match engine.config.knowledge_cap {
        Some(_) => Some(embed_text(&state.spec().requirement, engine.embedder)?),
        None => None,
    };

    // A task that already ended by reusing its best is finished.
    if state.attempts().last().is_some_and(|a| a.reused_historical_best) {
        return finish(state, &mut log, Termination::FullScoreReached);
    }

    while state.next_attempt_index() <= budget {
        let t = state.next_attempt_index();
        log.begin_attempt(t)?;
        log.event(t, "attempt-start", json!({ "best_score": state.best_score() }));

        if should_short_circuit(state) {
            let best = state.historical_best().expect("short-circuit implies a best");
            let record = AttemptRecord::reuse(t, best);
            log.event(t, "short-circuit", json!({ "best_score": best.score, "repository_digest": best.repo.digest() }));
            state.append_attempt(record)?;
            persist(state, workspace)?;
            return finish(state, &mut log, Termination::FullScoreReached);
        }

        let outcome = run_attempt(state, engine, &mut log)?;
        let score = outcome.record.functional_score;
        state.append_attempt(outcome.record)?;
        if let Some(repo) = outcome.candidate {
            let digest = repo.digest();
            if state.update_historical_best(repo, score) {
                log.event(t, "best-update", json!({ "score": score, "repository_digest": digest }));
            }
        }
        let (s, f) = state.admit_knowledge(outcome.extracted, engine.config.knowledge_cap, requirement_embedding.as_deref())?;
        log.event(t, "knowledge-update", json!({
            "success_added": s.added, "success_duplicates": s.duplicates, "success_evicted": s.evicted,
            "failure_added": f.added, "failure_duplicates": f.duplicates, "failure_evicted": f.evicted,
            "success_total": state.success_knowledge().len(),
            "failure_total": state.failure_knowledge().len(),
        }));
        persist(state, workspace)?;
    }

    let terminated_by = if should_short_circuit(state) { Termination::FullScoreReached } else { Termination::BudgetExhausted };
    finish(state, &mut log, terminated_by)
}

fn persist(state: &TaskState, workspace: Option<&Path>) -> Result<(), StateError> {
    match workspace {
        Some(ws) => state::persist(state, ws),
        None => Ok(()),
    }
}

fn finish(state: &TaskState, log: &mut RunLog, terminated_by: Termination) -> Result<RunResult, EngineError> {
    let attempts_executed = state.attempts().len() as u32;
    let best = state.historical_best().ok_or_else(|| EngineError::NoCandidate(state.task_id().to_string()))?;
    log.event(attempts_executed, "final", json!({
        "terminated_by": terminated_by,
        "final_score": best.score,
        "repository_digest": best.repo.digest(),
        "attempts_executed": attempts_executed,
    }));
    Ok(RunResult { final_repository: best.repo.clone(), final_score: best.score, attempts_executed, terminated_by })
}
