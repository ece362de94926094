//! On-disk layout of one task:
//!
//! ```text
//! <workspace>/<task_id>/state.json
//! <workspace>/<task_id>/knowledge/<entry_id>.json
//! <workspace>/<task_id>/best_repo/...
//! ```
//!
//! `state.json` is written last, so a crash mid-persist leaves the previous
//! index in place. Every file is written to a temporary name and renamed.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{validate_task_id, AttemptRecord, HistoricalBest, StateError, TaskSpec, TaskState};
use crate::canonical::{to_canonical_compact, to_canonical_vec, Digest};
use crate::knowledge::{KnowledgeEntry, KnowledgeKind};
use crate::repo::RepositoryArtifact;
use crate::score::Score;

pub const SCHEMA_VERSION: u32 = 1;

const STATE_FILE: &str = "state.json";
const KNOWLEDGE_DIR: &str = "knowledge";
const BEST_DIR: &str = "best_repo";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexEntry {
    entry_id: String,
    sha256: Digest,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BestIndex {
    score: Score,
    digest: Digest,
    created_in_attempt: u32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateBody {
    schema_version: u32,
    spec: TaskSpec,
    attempts: Vec<AttemptRecord>,
    success_knowledge: Vec<IndexEntry>,
    failure_knowledge: Vec<IndexEntry>,
    historical_best: Option<BestIndex>,
}

pub fn task_dir(workspace: &Path, task_id: &str) -> PathBuf {
    workspace.join(task_id)
}

pub fn state_exists(workspace: &Path, task_id: &str) -> bool {
    task_dir(workspace, task_id).join(STATE_FILE).is_file()
}

/// Task ids with a persisted state, sorted.
pub fn list_tasks(workspace: &Path) -> Result<Vec<String>, StateError> {
    let entries = match fs::read_dir(workspace) {
        Ok(entries) => entries,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => return Err(StateError::Io { path: workspace.to_path_buf(), source }),
    };
    let mut ids = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| StateError::Io { path: workspace.to_path_buf(), source })?;
        if let Some(name) = entry.file_name().to_str() {
            if validate_task_id(name).is_ok() && state_exists(workspace, name) {
                ids.push(name.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StateError + '_ {
    move |source| StateError::Io { path: path.to_path_buf(), source }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StateError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn checksum_of(body: &Value) -> Digest {
    Digest::of(&to_canonical_compact(body).expect("json value serializes"))
}

fn encode<T: Serialize>(value: &T) -> Vec<u8> {
    to_canonical_vec(value).expect("state types serialize")
}

fn index(entries: &[KnowledgeEntry]) -> Vec<IndexEntry> {
    entries
        .iter()
        .map(|e| IndexEntry { entry_id: e.entry_id.clone(), sha256: Digest::of(&encode(e)) })
        .collect()
}

/// Writes the whole state. Persisting an unchanged state rewrites identical bytes.
pub fn persist(state: &TaskState, workspace: &Path) -> Result<(), StateError> {
    let dir = task_dir(workspace, state.task_id());
    let kdir = dir.join(KNOWLEDGE_DIR);
    fs::create_dir_all(&kdir).map_err(io_err(&kdir))?;

    let mut keep = std::collections::HashSet::new();
    for entry in state.success_knowledge.iter().chain(&state.failure_knowledge) {
        let name = format!("{}.json", entry.entry_id);
        write_atomic(&kdir.join(&name), &encode(entry))?;
        keep.insert(name);
    }
    for stale in fs::read_dir(&kdir).map_err(io_err(&kdir))? {
        let stale = stale.map_err(io_err(&kdir))?;
        if !stale.file_name().to_str().is_some_and(|n| keep.contains(n)) {
            let path = stale.path();
            fs::remove_file(&path).map_err(io_err(&path))?;
        }
    }

    let best_dir = dir.join(BEST_DIR);
    match &state.historical_best {
        Some(best) => write_best(&dir, &best_dir, &best.repo)?,
        None if best_dir.exists() => fs::remove_dir_all(&best_dir).map_err(io_err(&best_dir))?,
        None => {}
    }

    let body = StateBody {
        schema_version: state.schema_version,
        spec: state.spec.clone(),
        attempts: state.attempts.clone(),
        success_knowledge: index(&state.success_knowledge),
        failure_knowledge: index(&state.failure_knowledge),
        historical_best: state.historical_best.as_ref().map(|b| BestIndex {
            score: b.score,
            digest: b.repo.digest(),
            created_in_attempt: b.repo.created_in_attempt(),
        }),
    };
    let mut value = serde_json::to_value(&body).expect("state body serializes");
    let checksum = checksum_of(&value);
    value
        .as_object_mut()
        .expect("state body is an object")
        .insert("checksum".into(), Value::String(checksum.to_hex()));
    write_atomic(&dir.join(STATE_FILE), &encode(&value))
}

fn write_best(task_dir: &Path, best_dir: &Path, repo: &RepositoryArtifact) -> Result<(), StateError> {
    if best_dir.is_dir() {
        if let Ok(current) = RepositoryArtifact::read_tree(best_dir, repo.created_in_attempt()) {
            if current.digest() == repo.digest() {
                return Ok(());
            }
        }
    }
    let staging = task_dir.join(format!("{BEST_DIR}.tmp"));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(io_err(&staging))?;
    }
    for (path, bytes) in repo.files() {
        let target = staging.join(path);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(&target, bytes).map_err(io_err(&target))?;
    }
    let old = task_dir.join(format!("{BEST_DIR}.old"));
    if old.exists() {
        fs::remove_dir_all(&old).map_err(io_err(&old))?;
    }
    if best_dir.exists() {
        fs::rename(best_dir, &old).map_err(io_err(best_dir))?;
    }
    fs::rename(&staging, best_dir).map_err(io_err(best_dir))?;
    if old.exists() {
        fs::remove_dir_all(&old).map_err(io_err(&old))?;
    }
    Ok(())
}

/// Loads and fully re-validates a persisted state.
pub fn load(workspace: &Path, task_id: &str) -> Result<TaskState, StateError> {
    validate_task_id(task_id).map_err(StateError::InvalidSpec)?;
    let dir = task_dir(workspace, task_id);
    let path = dir.join(STATE_FILE);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(StateError::NotFound(task_id.to_string())),
        Err(source) => return Err(StateError::Io { path, source }),
    };
    let corrupt = |path: &Path, reason: String| StateError::Corrupt { path: path.to_path_buf(), reason };

    let mut value: Value = serde_json::from_slice(&bytes).map_err(|e| corrupt(&path, e.to_string()))?;
    let stored = value
        .as_object_mut()
        .and_then(|o| o.remove("checksum"))
        .ok_or_else(|| corrupt(&path, "missing checksum".into()))?;
    let stored = stored.as_str().ok_or_else(|| corrupt(&path, "checksum is not a string".into()))?;
    if stored != checksum_of(&value).to_hex() {
        return Err(corrupt(&path, "checksum mismatch".into()));
    }
    if value.get("schema_version").and_then(Value::as_u64) != Some(SCHEMA_VERSION as u64) {
        return Err(corrupt(&path, format!("unsupported schema version (expected {SCHEMA_VERSION})")));
    }
    let body: StateBody = serde_json::from_value(value).map_err(|e| corrupt(&path, e.to_string()))?;
    if body.spec.task_id != task_id {
        return Err(corrupt(&path, format!("state belongs to task `{}`", body.spec.task_id)));
    }

    let kdir = dir.join(KNOWLEDGE_DIR);
    let load_list = |list: &[IndexEntry], kind: KnowledgeKind| -> Result<Vec<KnowledgeEntry>, StateError> {
        list.iter()
            .map(|ix| {
                let p = kdir.join(format!("{}.json", ix.entry_id));
                let raw = fs::read(&p).map_err(|e| corrupt(&p, e.to_string()))?;
                if Digest::of(&raw) != ix.sha256 {
                    return Err(corrupt(&p, "knowledge file checksum mismatch".into()));
                }
                let entry: KnowledgeEntry = serde_json::from_slice(&raw).map_err(|e| corrupt(&p, e.to_string()))?;
                if entry.entry_id != ix.entry_id || entry.kind() != kind {
                    return Err(corrupt(&p, "knowledge file does not match its index entry".into()));
                }
                Ok(entry)
            })
            .collect()
    };
    let success_knowledge = load_list(&body.success_knowledge, KnowledgeKind::Success)?;
    let failure_knowledge = load_list(&body.failure_knowledge, KnowledgeKind::Failure)?;

    let best_dir = dir.join(BEST_DIR);
    let historical_best = match body.historical_best {
        None => None,
        Some(ix) => {
            let repo = RepositoryArtifact::read_tree(&best_dir, ix.created_in_attempt)
                .map_err(|e| corrupt(&best_dir, e.to_string()))?;
            if repo.digest() != ix.digest {
                return Err(corrupt(&best_dir, "best repository digest mismatch".into()));
            }
            Some(HistoricalBest { repo, score: ix.score })
        }
    };

    let state = TaskState {
        schema_version: body.schema_version,
        spec: body.spec,
        success_knowledge,
        failure_knowledge,
        historical_best,
        attempts: body.attempts,
    };
    state.validate().map_err(|reason| corrupt(&path, reason))?;
    Ok(state)
}
