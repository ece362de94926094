#![allow(dead_code)]

use std::time::Duration;

use crossloop::backend::{RetryPolicy, ScriptStep, ScriptedModel};
use crossloop::engine::EngineConfig;
use crossloop::repo::RepositoryArtifact;
use crossloop::sandbox::{ExecutionReport, ExitStatus, Sandbox, SandboxError};
use crossloop::score::Fraction;
use crossloop::state::TaskSpec;

/// Repository whose `score.txt` tells [`ScoreFileSandbox`] how many tests pass.
pub fn scored_repo(tag: &str, passed: u64, total: u64) -> RepositoryArtifact {
    RepositoryArtifact::new(
        [
            ("score.txt".to_string(), format!("{passed} {total}\n")),
            ("main.py".to_string(), format!("def run():\n    return {tag:?}\n")),
        ],
        1,
    )
    .unwrap()
}

/// Scores a repository from its `score.txt` without spawning anything.
pub struct ScoreFileSandbox;

impl Sandbox for ScoreFileSandbox {
    fn run(&self, repo: &RepositoryArtifact, _cmd: &str, _timeout: Duration) -> Result<ExecutionReport, SandboxError> {
        let text = std::str::from_utf8(repo.file("score.txt").unwrap_or(b"0 0")).unwrap().to_string();
        let mut it = text.split_whitespace().map(|n| n.parse::<u64>().unwrap());
        let (passed, total) = (it.next().unwrap(), it.next().unwrap());
        Ok(ExecutionReport {
            tests_total: total,
            tests_passed: passed,
            results_file_found: true,
            exit_status: ExitStatus::Completed,
            exit_code: Some(if passed == total { 0 } else { 1 }),
            stdout_excerpt: format!("{passed} passed, {} failed", total - passed),
            stderr_excerpt: String::new(),
            wall_time_secs: 0.0,
            external_quality: Default::default(),
            notes: Vec::new(),
        })
    }
}

/// Always fails, as if the environment could not run anything.
pub struct BrokenSandbox;

impl Sandbox for BrokenSandbox {
    fn run(&self, _repo: &RepositoryArtifact, _cmd: &str, _timeout: Duration) -> Result<ExecutionReport, SandboxError> {
        Err(SandboxError::Io { path: "/nonexistent".into(), source: std::io::Error::other("no sandbox") })
    }
}

/// A valid extraction reply with content unique to `n`.
pub fn extraction_reply(n: usize) -> String {
    let doc = serde_json::json!({
        "success": [{"repository_level_signals": [format!("keep module layout {n}")], "carry_over_signals": [format!("reuse interface {n}")]}],
        "failure": [{"observed_failure_signals": [format!("test_{n} failed")], "carry_over_constraints": [format!("fix edge case {n}")]}]
    });
    format!("```json\n{doc}\n```")
}

/// One generation step per score and distinct extraction replies.
pub fn scripted(scores: &[(u64, u64)]) -> ScriptedModel {
    let repos = scores.iter().enumerate().map(|(i, (p, t))| ScriptStep::repo(&scored_repo(&format!("r{i}"), *p, *t)));
    ScriptedModel::new("scripted")
        .with_generation(repos)
        .with_extraction((0..scores.len()).map(|n| ScriptStep::reply(extraction_reply(n))))
        .with_extraction_fallback(extraction_reply(usize::MAX))
}

pub fn percent(values: &[u64]) -> Vec<(u64, u64)> {
    values.iter().map(|v| (*v, 100)).collect()
}

pub fn config() -> EngineConfig {
    EngineConfig { retry: RetryPolicy::immediate(2), ..EngineConfig::default() }
}

pub fn spec(id: &str, attempts: u32, iterations: u32) -> TaskSpec {
    TaskSpec {
        task_id: id.into(),
        requirement: "Build a steganography library hiding text in PNG least-significant bits".into(),
        full_score: Fraction::from_integer(1),
        attempt_budget: attempts,
        test_command: "pytest -q".into(),
        internal_iteration_budget: iterations,
        timeout_seconds: 300,
    }
}

/// The same files, stamped as created in attempt `t`.
pub fn at_attempt(repo: RepositoryArtifact, t: u32) -> RepositoryArtifact {
    RepositoryArtifact::new(repo.files().clone(), t).unwrap()
}
