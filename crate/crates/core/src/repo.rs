//! Complete generated repositories as ordered path -> bytes maps.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest as _, Sha256};

use crate::canonical::Digest;

#[derive(Debug, thiserror::Error)]
pub enum RepoError {
    #[error("repository has no files")]
    Empty,
    #[error("duplicate path `{0}`")]
    DuplicatePath(String),
    #[error("invalid path `{path}`: {reason}")]
    InvalidPath { path: String, reason: &'static str },
    #[error("path `{file}` is also used as a directory by `{other}`")]
    PathConflict { file: String, other: String },
    #[error("attempt index must be >= 1")]
    InvalidAttempt,
    #[error("unsupported entry in tree: {0}")]
    Unsupported(PathBuf),
    #[error("i/o failure at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// Checks one relative, forward-slash path.
pub fn validate_path(path: &str) -> Result<(), RepoError> {
    let bad = |reason| Err(RepoError::InvalidPath { path: path.to_string(), reason });
    if path.is_empty() {
        return bad("empty path");
    }
    if path.starts_with('/') {
        return bad("absolute path");
    }
    if path.contains('\\') {
        return bad("backslash separator");
    }
    if path.contains('\0') {
        return bad("NUL byte");
    }
    for segment in path.split('/') {
        match segment {
            "" => return bad("empty segment"),
            "." => return bad("`.` segment"),
            ".." => return bad("`..` segment"),
            _ => {}
        }
    }
    Ok(())
}

/// A full repository produced by one attempt.
///
/// The digest covers only the file map, so two artifacts with the same files
/// have the same digest whatever attempt produced them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepositoryArtifact {
    files: BTreeMap<String, Vec<u8>>,
    created_in_attempt: u32,
    digest: Digest,
}

impl RepositoryArtifact {
    pub fn new<I, P, C>(files: I, created_in_attempt: u32) -> Result<Self, RepoError>
    where
        I: IntoIterator<Item = (P, C)>,
        P: Into<String>,
        C: Into<Vec<u8>>,
    {
        if created_in_attempt == 0 {
            return Err(RepoError::InvalidAttempt);
        }
        let mut map = BTreeMap::new();
        for (path, content) in files {
            let path = path.into();
            validate_path(&path)?;
            if map.contains_key(&path) {
                return Err(RepoError::DuplicatePath(path));
            }
            map.insert(path, content.into());
        }
        if map.is_empty() {
            return Err(RepoError::Empty);
        }
        // In sorted order a path that is a directory prefix of another sorts
        // before its children, though not necessarily adjacent ("a", "a.txt", "a/b").
        for path in map.keys() {
            let prefix = format!("{path}/");
            if let Some((other, _)) = map.range(prefix.clone()..).next() {
                if other.starts_with(&prefix) {
                    return Err(RepoError::PathConflict { file: path.clone(), other: other.clone() });
                }
            }
        }
        let digest = content_digest(&map);
        Ok(RepositoryArtifact { files: map, created_in_attempt, digest })
    }

    pub fn files(&self) -> &BTreeMap<String, Vec<u8>> {
        &self.files
    }

    pub fn file(&self, path: &str) -> Option<&[u8]> {
        self.files.get(path).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn created_in_attempt(&self) -> u32 {
        self.created_in_attempt
    }

    pub fn digest(&self) -> Digest {
        self.digest
    }

    pub fn total_bytes(&self) -> usize {
        self.files.values().map(Vec::len).sum()
    }

    /// Reads every regular file under `root` into an artifact.
    pub fn read_tree(root: &Path, created_in_attempt: u32) -> Result<Self, RepoError> {
        let mut files = Vec::new();
        collect_tree(root, root, &mut files)?;
        Self::new(files, created_in_attempt)
    }
}

fn collect_tree(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) -> Result<(), RepoError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RepoError::Io { path, source }
    };
    let mut entries = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .collect::<Result<Vec<_>, _>>()
        .map_err(io_err(dir))?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        let kind = entry.file_type().map_err(io_err(&path))?;
        if kind.is_dir() {
            collect_tree(root, &path, out)?;
        } else if kind.is_file() {
            let rel = path
                .strip_prefix(root)
                .expect("walk stays under root")
                .components()
                .map(|c| c.as_os_str().to_str().ok_or_else(|| RepoError::Unsupported(path.clone())))
                .collect::<Result<Vec<_>, _>>()?
                .join("/");
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            out.push((rel, bytes));
        } else {
            return Err(RepoError::Unsupported(path));
        }
    }
    Ok(())
}

/// SHA-256 over a length-prefixed encoding of the sorted file map.
pub fn content_digest(files: &BTreeMap<String, Vec<u8>>) -> Digest {
    let mut hasher = Sha256::new();
    hasher.update(b"crossloop-repo-v1\0");
    hasher.update((files.len() as u64).to_le_bytes());
    for (path, content) in files {
        hasher.update((path.len() as u64).to_le_bytes());
        hasher.update(path.as_bytes());
        hasher.update((content.len() as u64).to_le_bytes());
        hasher.update(content);
    }
    let bytes: [u8; 32] = hasher.finalize().into();
    Digest::from(bytes)
}
