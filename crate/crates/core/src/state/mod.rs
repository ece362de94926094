//! Persistent per-task state: knowledge lists, the historical-best repository
//! and the append-only attempt log.

mod lock;
mod persist;

use std::collections::HashSet;
use std::io;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::backend::BackendUsage;
use crate::canonical::Digest;
use crate::knowledge::{admit_entries, AdmitReport, ExtractedEntries, KnowledgeEntry, KnowledgeKind};
use crate::quality::QualityReport;
use crate::repo::{RepoError, RepositoryArtifact};
use crate::score::{Fraction, Score};

pub use lock::TaskLock;
pub use persist::{list_tasks, load, persist, state_exists, task_dir, SCHEMA_VERSION};

pub const DEFAULT_ATTEMPT_BUDGET: u32 = 4;
pub const DEFAULT_INTERNAL_ITERATIONS: u32 = 4;
pub const DEFAULT_TIMEOUT_SECONDS: u64 = 300;

#[derive(Debug, thiserror::Error)]
pub enum StateError {
    #[error("invalid task spec: {0}")]
    InvalidSpec(String),
    #[error("attempt index gap: expected {expected}, got {got}")]
    IndexGap { expected: u32, got: u32 },
    #[error("invalid attempt record: {0}")]
    InvalidRecord(String),
    #[error("knowledge provenance: {0}")]
    Provenance(String),
    #[error("no persisted state for task `{0}`")]
    NotFound(String),
    #[error("task `{0}` is locked by another writer")]
    LockContention(String),
    #[error("corrupt state at {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("i/o failure at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Repo(#[from] RepoError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub task_id: String,
    pub requirement: String,
    /// Functional score at which the task counts as solved.
    pub full_score: Fraction,
    pub attempt_budget: u32,
    pub test_command: String,
    pub internal_iteration_budget: u32,
    pub timeout_seconds: u64,
}

/// Task ids double as directory names.
pub fn validate_task_id(task_id: &str) -> Result<(), String> {
    if task_id.is_empty() {
        return Err("task_id is empty".into());
    }
    if task_id.starts_with('.') {
        return Err("task_id must not start with `.`".into());
    }
    if !task_id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-')) {
        return Err(format!("task_id `{task_id}` may only contain ASCII letters, digits, `.`, `_` and `-`"));
    }
    Ok(())
}

impl TaskSpec {
    pub fn new(task_id: impl Into<String>, requirement: impl Into<String>, test_command: impl Into<String>) -> Self {
        TaskSpec {
            task_id: task_id.into(),
            requirement: requirement.into(),
            full_score: Fraction::from_integer(1),
            attempt_budget: DEFAULT_ATTEMPT_BUDGET,
            test_command: test_command.into(),
            internal_iteration_budget: DEFAULT_INTERNAL_ITERATIONS,
            timeout_seconds: DEFAULT_TIMEOUT_SECONDS,
        }
    }

    pub fn validate(&self) -> Result<(), StateError> {
        let bad = |m: String| Err(StateError::InvalidSpec(m));
        if let Err(m) = validate_task_id(&self.task_id) {
            return bad(m);
        }
        if self.requirement.trim().is_empty() {
            return bad("requirement is empty".into());
        }
        if *self.full_score.denom() == 0
            || *self.full_score.numer() == 0
            || self.full_score > Fraction::from_integer(1)
        {
            return bad(format!("full_score {} is outside (0, 1]", self.full_score));
        }
        if self.attempt_budget == 0 {
            return bad("attempt_budget must be at least 1".into());
        }
        if self.internal_iteration_budget == 0 {
            return bad("internal_iteration_budget must be at least 1".into());
        }
        if self.timeout_seconds == 0 {
            return bad("timeout_seconds must be at least 1".into());
        }
        if self.test_command.trim().is_empty() {
            return bad("test_command is empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttemptRecord {
    pub attempt_index: u32,
    pub functional_score: Score,
    #[serde(default)]
    pub nonfunctional: Option<QualityReport>,
    pub reused_historical_best: bool,
    pub internal_iterations_used: u32,
    pub generator_calls: u32,
    pub extraction_calls: u32,
    pub usage: BackendUsage,
    pub repository_digest: Option<Digest>,
    #[serde(default)]
    pub failure_tag: Option<String>,
}

impl AttemptRecord {
    /// Record for an attempt that returned the historical best without generating.
    pub fn reuse(attempt_index: u32, best: &HistoricalBest) -> Self {
        AttemptRecord {
            attempt_index,
            functional_score: best.score,
            nonfunctional: None,
            reused_historical_best: true,
            internal_iterations_used: 0,
            generator_calls: 0,
            extraction_calls: 0,
            usage: BackendUsage::default(),
            repository_digest: Some(best.repo.digest()),
            failure_tag: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoricalBest {
    pub repo: RepositoryArtifact,
    pub score: Score,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskState {
    schema_version: u32,
    spec: TaskSpec,
    success_knowledge: Vec<KnowledgeEntry>,
    failure_knowledge: Vec<KnowledgeEntry>,
    historical_best: Option<HistoricalBest>,
    attempts: Vec<AttemptRecord>,
}

impl TaskState {
    /// Empty knowledge, no historical best (any first score beats it), empty log.
    pub fn init(spec: TaskSpec) -> Result<Self, StateError> {
        spec.validate()?;
        Ok(TaskState {
            schema_version: SCHEMA_VERSION,
            spec,
            success_knowledge: Vec::new(),
            failure_knowledge: Vec::new(),
            historical_best: None,
            attempts: Vec::new(),
        })
    }

    pub fn schema_version(&self) -> u32 {
        self.schema_version
    }

    pub fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    pub fn task_id(&self) -> &str {
        &self.spec.task_id
    }

    pub fn success_knowledge(&self) -> &[KnowledgeEntry] {
        &self.success_knowledge
    }

    pub fn failure_knowledge(&self) -> &[KnowledgeEntry] {
        &self.failure_knowledge
    }

    pub fn knowledge(&self, kind: KnowledgeKind) -> &[KnowledgeEntry] {
        match kind {
            KnowledgeKind::Success => &self.success_knowledge,
            KnowledgeKind::Failure => &self.failure_knowledge,
        }
    }

    pub fn historical_best(&self) -> Option<&HistoricalBest> {
        self.historical_best.as_ref()
    }

    pub fn best_score(&self) -> Option<Score> {
        self.historical_best.as_ref().map(|b| b.score)
    }

    pub fn attempts(&self) -> &[AttemptRecord] {
        &self.attempts
    }

    pub fn next_attempt_index(&self) -> u32 {
        self.attempts.len() as u32 + 1
    }

    /// Replaces the incumbent only on a strictly higher score. Returns whether
    /// it was replaced.
    pub fn update_historical_best(&mut self, repo: RepositoryArtifact, score: Score) -> bool {
        let replace = match &self.historical_best {
            None => true,
            Some(best) => score.beats(&best.score),
        };
        if replace {
            self.historical_best = Some(HistoricalBest { repo, score });
        }
        replace
    }

    pub fn append_attempt(&mut self, record: AttemptRecord) -> Result<(), StateError> {
        let expected = self.next_attempt_index();
        if record.attempt_index != expected {
            return Err(StateError::IndexGap { expected, got: record.attempt_index });
        }
        if !record.functional_score.is_valid() {
            return Err(StateError::InvalidRecord(format!("score {:?} has passed > total", record.functional_score)));
        }
        if record.reused_historical_best && (record.internal_iterations_used != 0 || record.generator_calls != 0) {
            return Err(StateError::InvalidRecord("a reused attempt performs no iterations or generation calls".into()));
        }
        self.attempts.push(record);
        Ok(())
    }

    /// Adds freshly extracted entries after checking their provenance against
    /// the attempt log.
    pub fn admit_knowledge(
        &mut self,
        extracted: ExtractedEntries,
        cap: Option<usize>,
        requirement_embedding: Option<&[f64]>,
    ) -> Result<(AdmitReport, AdmitReport), StateError> {
        for entry in extracted.success.iter().chain(&extracted.failure) {
            self.check_provenance(entry)?;
        }
        if let Some(e) = extracted.success.iter().find(|e| e.kind() != KnowledgeKind::Success) {
            return Err(StateError::Provenance(format!("entry `{}` is not a success entry", e.entry_id)));
        }
        if let Some(e) = extracted.failure.iter().find(|e| e.kind() != KnowledgeKind::Failure) {
            return Err(StateError::Provenance(format!("entry `{}` is not a failure entry", e.entry_id)));
        }
        let existing: HashSet<&str> = self
            .success_knowledge
            .iter()
            .chain(&self.failure_knowledge)
            .map(|e| e.entry_id.as_str())
            .collect();
        if let Some(e) = extracted.success.iter().chain(&extracted.failure).find(|e| existing.contains(e.entry_id.as_str())) {
            return Err(StateError::Provenance(format!("entry id `{}` already exists", e.entry_id)));
        }
        let s = admit_entries(&mut self.success_knowledge, extracted.success, cap, requirement_embedding);
        let f = admit_entries(&mut self.failure_knowledge, extracted.failure, cap, requirement_embedding);
        Ok((s, f))
    }

    fn check_provenance(&self, entry: &KnowledgeEntry) -> Result<(), StateError> {
        let record = entry
            .source_attempt
            .checked_sub(1)
            .and_then(|i| self.attempts.get(i as usize))
            .ok_or_else(|| {
                StateError::Provenance(format!("entry `{}` cites missing attempt {}", entry.entry_id, entry.source_attempt))
            })?;
        if record.functional_score != entry.associated_score {
            return Err(StateError::Provenance(format!(
                "entry `{}` carries score {:?} but attempt {} scored {:?}",
                entry.entry_id, entry.associated_score, record.attempt_index, record.functional_score
            )));
        }
        Ok(())
    }

    /// Best score after each attempt; `None` until some attempt produced a repository.
    pub fn best_trajectory(&self) -> Vec<Option<Score>> {
        let mut best: Option<Score> = None;
        self.attempts
            .iter()
            .map(|a| {
                if a.repository_digest.is_some() && best.is_none_or(|b| a.functional_score.beats(&b)) {
                    best = Some(a.functional_score);
                }
                best
            })
            .collect()
    }

    /// Checks every cross-field invariant; used after loading.
    pub fn validate(&self) -> Result<(), String> {
        self.spec.validate().map_err(|e| e.to_string())?;
        for (i, a) in self.attempts.iter().enumerate() {
            if a.attempt_index as usize != i + 1 {
                return Err(format!("attempt {} recorded at position {}", a.attempt_index, i + 1));
            }
            if !a.functional_score.is_valid() {
                return Err(format!("attempt {} has an invalid score", a.attempt_index));
            }
        }
        let earliest_max = self
            .attempts
            .iter()
            .filter(|a| a.repository_digest.is_some())
            .fold(None::<&AttemptRecord>, |best, a| match best {
                Some(b) if !a.functional_score.beats(&b.functional_score) => Some(b),
                _ => Some(a),
            });
        match (&self.historical_best, earliest_max) {
            (None, None) => {}
            (None, Some(a)) => return Err(format!("attempt {} produced a repository but no best is stored", a.attempt_index)),
            (Some(_), None) => return Err("historical best stored but no attempt produced a repository".into()),
            (Some(best), Some(a)) => {
                if best.score.value() != a.functional_score.value() {
                    return Err(format!("best score {:?} differs from log maximum {:?}", best.score, a.functional_score));
                }
                if Some(best.repo.digest()) != a.repository_digest || best.repo.created_in_attempt() != a.attempt_index {
                    return Err(format!("best repository is not the one from attempt {}", a.attempt_index));
                }
            }
        }
        let mut ids = HashSet::new();
        for (kind, list) in [(KnowledgeKind::Success, &self.success_knowledge), (KnowledgeKind::Failure, &self.failure_knowledge)] {
            for e in list {
                if e.kind() != kind {
                    return Err(format!("entry `{}` stored in the wrong list", e.entry_id));
                }
                if !ids.insert(e.entry_id.as_str()) {
                    return Err(format!("duplicate entry id `{}`", e.entry_id));
                }
                self.check_provenance(e).map_err(|e| e.to_string())?;
            }
        }
        Ok(())
    }
}
