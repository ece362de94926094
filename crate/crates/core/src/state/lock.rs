use std::fs::{self, File, OpenOptions, TryLockError};
use std::path::Path;

use super::{task_dir, StateError};

/// Exclusive advisory lock on a task directory, released on drop.
#[derive(Debug)]
pub struct TaskLock {
    _file: File,
}

impl TaskLock {
    pub fn acquire(workspace: &Path, task_id: &str) -> Result<Self, StateError> {
        let dir = task_dir(workspace, task_id);
        fs::create_dir_all(&dir).map_err(|source| StateError::Io { path: dir.clone(), source })?;
        let path = dir.join(".lock");
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(|source| StateError::Io { path: path.clone(), source })?;
        match file.try_lock() {
            Ok(()) => Ok(TaskLock { _file: file }),
            Err(TryLockError::WouldBlock) => Err(StateError::LockContention(task_id.to_string())),
            Err(TryLockError::Error(source)) => Err(StateError::Io { path, source }),
        }
    }
}
