use std::fs;
use std::path::{Component, Path, PathBuf};

use super::SandboxError;
use crate::repo::RepositoryArtifact;

/// Writes `repo` byte-exactly under `run_dir`, which must be absent or empty.
/// Returns the run directory.
pub fn materialize(repo: &RepositoryArtifact, run_dir: &Path) -> Result<PathBuf, SandboxError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SandboxError::Io { path, source }
    };
    if run_dir.exists() {
        let mut entries = fs::read_dir(run_dir).map_err(io(run_dir))?;
        if entries.next().is_some() {
            return Err(SandboxError::RunDirNotEmpty(run_dir.to_path_buf()));
        }
    } else {
        fs::create_dir_all(run_dir).map_err(io(run_dir))?;
    }
    for (rel, bytes) in repo.files() {
        let target = confined_join(run_dir, rel)?;
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent).map_err(io(parent))?;
        }
        fs::write(&target, bytes).map_err(io(&target))?;
    }
    Ok(run_dir.to_path_buf())
}

/// Joins a repository-relative path onto `root`, refusing anything that could
/// resolve outside it.
pub(crate) fn confined_join(root: &Path, rel: &str) -> Result<PathBuf, SandboxError> {
    let rel_path = Path::new(rel);
    if rel.is_empty() || !rel_path.components().all(|c| matches!(c, Component::Normal(_))) {
        return Err(SandboxError::PathEscape(rel.to_string()));
    }
    // refuse to write through a symlink planted earlier in the tree
    let mut cursor = root.to_path_buf();
    for component in rel_path.components() {
        cursor.push(component);
        if let Ok(meta) = fs::symlink_metadata(&cursor) {
            if meta.file_type().is_symlink() {
                return Err(SandboxError::PathEscape(rel.to_string()));
            }
        }
    }
    Ok(root.join(rel_path))
}
