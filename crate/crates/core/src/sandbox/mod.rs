//! Materializes candidate repositories into scratch directories and runs the
//! task's test command under a hard timeout.

mod exec;
mod materialize;

use std::collections::BTreeMap;
use std::io;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::repo::{RepoError, RepositoryArtifact};

pub use exec::{execute_tests, RESULTS_DIR, RESULTS_FILE};
pub use materialize::materialize;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);
pub const DEFAULT_GRACE: Duration = Duration::from_secs(5);
pub const DEFAULT_LOG_CAP: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExitStatus {
    Completed,
    TimedOut,
    SpawnFailed,
    CrashedBeforeTests,
}

/// What one execution of the test command produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub tests_total: u64,
    pub tests_passed: u64,
    /// True when counts came from the results file rather than the exit-code fallback.
    pub results_file_found: bool,
    pub exit_status: ExitStatus,
    pub exit_code: Option<i32>,
    pub stdout_excerpt: String,
    pub stderr_excerpt: String,
    pub wall_time_secs: f64,
    /// Raw external quality scores the command wrote under `.crossloop/quality/`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub external_quality: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ExecutionReport {
    /// Text bundle fed back to the model for repair and extraction.
    pub fn render_feedback(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "Test outcome: {} of {} tests passed (status: {}",
            self.tests_passed,
            self.tests_total,
            serde_json::to_value(self.exit_status).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
        ));
        if let Some(code) = self.exit_code {
            out.push_str(&format!(", exit code {code}"));
        }
        out.push_str(&format!(", {:.1}s)\n", self.wall_time_secs));
        for note in &self.notes {
            out.push_str(&format!("Note: {note}\n"));
        }
        if !self.stdout_excerpt.is_empty() {
            out.push_str("\n--- stdout ---\n");
            out.push_str(&self.stdout_excerpt);
            if !self.stdout_excerpt.ends_with('\n') {
                out.push('\n');
            }
        }
        if !self.stderr_excerpt.is_empty() {
            out.push_str("\n--- stderr ---\n");
            out.push_str(&self.stderr_excerpt);
            if !self.stderr_excerpt.ends_with('\n') {
                out.push('\n');
            }
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SandboxError {
    #[error("path `{0}` escapes the run directory")]
    PathEscape(String),
    #[error("run directory {0} is not empty")]
    RunDirNotEmpty(PathBuf),
    #[error("failed to spawn test command: {0}")]
    Spawn(io::Error),
    #[error("i/o failure at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Repo(#[from] RepoError),
}

#[derive(Debug, Clone)]
pub struct SandboxConfig {
    pub grace: Duration,
    /// Environment variables passed through from the parent; everything else is scrubbed.
    pub env_allow: Vec<String>,
    pub extra_env: BTreeMap<String, String>,
    pub log_cap_bytes: usize,
    /// Parent directory for scratch run directories; system temp when unset.
    pub scratch_root: Option<PathBuf>,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        SandboxConfig {
            grace: DEFAULT_GRACE,
            env_allow: ["PATH", "HOME", "LANG", "LC_ALL", "TERM", "TMPDIR"].iter().map(|s| s.to_string()).collect(),
            extra_env: BTreeMap::new(),
            log_cap_bytes: DEFAULT_LOG_CAP,
            scratch_root: None,
        }
    }
}

/// Something that can score a candidate repository by running its tests.
pub trait Sandbox: Send + Sync {
    fn run(
        &self,
        repo: &RepositoryArtifact,
        test_command: &str,
        timeout: Duration,
    ) -> Result<ExecutionReport, SandboxError>;
}

/// Runs each candidate in a fresh scratch directory as a child process group.
#[derive(Debug, Clone, Default)]
pub struct ProcessSandbox {
    pub config: SandboxConfig,
}

impl ProcessSandbox {
    pub fn new(config: SandboxConfig) -> Self {
        ProcessSandbox { config }
    }
}

impl Sandbox for ProcessSandbox {
    fn run(
        &self,
        repo: &RepositoryArtifact,
        test_command: &str,
        timeout: Duration,
    ) -> Result<ExecutionReport, SandboxError> {
        let mut builder = tempfile::Builder::new();
        builder.prefix("crossloop-run-");
        let scratch = match &self.config.scratch_root {
            Some(root) => {
                std::fs::create_dir_all(root).map_err(|source| SandboxError::Io { path: root.clone(), source })?;
                builder.tempdir_in(root)
            }
            None => builder.tempdir(),
        }
        .map_err(|source| SandboxError::Io { path: std::env::temp_dir(), source })?;
        let run_dir = materialize(repo, &scratch.path().join("repo"))?;
        execute_tests(&run_dir, test_command, timeout, &self.config)
    }
}
