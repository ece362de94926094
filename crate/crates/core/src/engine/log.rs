use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::repo::RepositoryArtifact;

/// Engine event log and per-attempt artifact writer.
///
/// Events go to `attempts/<t>/logs/engine.jsonl` under the task directory and,
/// when verbose, to stderr. A log without a directory only mirrors.
#[derive(Debug)]
pub struct RunLog {
    task_id: String,
    dir: Option<PathBuf>,
    verbose: bool,
    current: Option<(u32, File)>,
}

impl RunLog {
    pub fn new(task_id: impl Into<String>, task_dir: Option<PathBuf>, verbose: bool) -> Self {
        RunLog { task_id: task_id.into(), dir: task_dir, verbose, current: None }
    }

    pub fn attempt_dir(&self, attempt: u32) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join("attempts").join(attempt.to_string()))
    }

    /// Clears leftovers of an interrupted run of the same attempt.
    pub fn begin_attempt(&mut self, attempt: u32) -> std::io::Result<()> {
        self.current = None;
        let Some(dir) = self.attempt_dir(attempt) else { return Ok(()) };
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir_all(dir.join("logs"))?;
        let file = OpenOptions::new().create(true).append(true).open(dir.join("logs").join("engine.jsonl"))?;
        self.current = Some((attempt, file));
        Ok(())
    }

    pub fn event(&mut self, attempt: u32, kind: &str, fields: Value) {
        let mut obj = Map::new();
        obj.insert("event".into(), json!(kind));
        obj.insert("task_id".into(), json!(self.task_id));
        obj.insert("attempt".into(), json!(attempt));
        let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        obj.insert("ts".into(), json!(ts));
        if let Value::Object(extra) = fields {
            obj.extend(extra);
        }
        let line = Value::Object(obj).to_string();
        if self.verbose {
            eprintln!("{line}");
        }
        if let Some((a, file)) = &mut self.current {
            if *a == attempt {
                // A failed log write must not fail the attempt.
                let _ = writeln!(file, "{line}");
            }
        }
    }

    pub fn write_text(&self, attempt: u32, relative: &str, text: &str) {
        if let Some(path) = self.attempt_dir(attempt).map(|d| d.join(relative)) {
            let _ = write_file(&path, text.as_bytes());
        }
    }

    pub fn write_json<T: Serialize>(&self, attempt: u32, relative: &str, value: &T) {
        if let Ok(bytes) = crate::canonical::to_canonical_vec(value) {
            if let Some(path) = self.attempt_dir(attempt).map(|d| d.join(relative)) {
                let _ = write_file(&path, &bytes);
            }
        }
    }

    pub fn write_repo(&self, attempt: u32, relative: &str, repo: &RepositoryArtifact) {
        let Some(root) = self.attempt_dir(attempt).map(|d| d.join(relative)) else { return };
        for (path, bytes) in repo.files() {
            let _ = write_file(&root.join(path), bytes);
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes)
}
