//! The multi-file reply format: `### FILE: <path>` headers, each followed by
//! a fenced block. A fence of N backticks is closed by a line of at least N
//! backticks, so files that contain fences can be wrapped in longer ones.

use crate::repo::{RepoError, RepositoryArtifact};

const HEADER: &str = "### FILE:";

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("no `### FILE:` sections found")]
    NoFiles,
    #[error("file `{0}` has no fenced block after its header")]
    MissingFence(String),
    #[error("fenced block for `{0}` is never closed")]
    UnterminatedFence(String),
    #[error(transparent)]
    Repo(#[from] RepoError),
}

fn fence_len(line: &str) -> usize {
    line.bytes().take_while(|b| *b == b'`').count()
}

pub fn parse_multifile(text: &str, attempt_index: u32) -> Result<RepositoryArtifact, FormatError> {
    let mut files: Vec<(String, String)> = Vec::new();
    let mut lines = text.lines().peekable();
    while let Some(line) = lines.next() {
        let Some(path) = line.trim().strip_prefix(HEADER) else { continue };
        let path = path.trim().trim_matches('`').to_string();
        while lines.peek().is_some_and(|l| l.trim().is_empty()) {
            lines.next();
        }
        let opening = lines.next().map(str::trim_start).unwrap_or("");
        let width = fence_len(opening);
        if width < 3 {
            return Err(FormatError::MissingFence(path));
        }
        let mut body: Vec<&str> = Vec::new();
        let mut closed = false;
        for inner in lines.by_ref() {
            let trimmed = inner.trim();
            if fence_len(trimmed) >= width && trimmed.bytes().all(|b| b == b'`') {
                closed = true;
                break;
            }
            body.push(inner);
        }
        if !closed {
            return Err(FormatError::UnterminatedFence(path));
        }
        let mut content = body.join("\n");
        if !body.is_empty() {
            content.push('\n');
        }
        files.push((path, content));
    }
    if files.is_empty() {
        return Err(FormatError::NoFiles);
    }
    // RepositoryArtifact::new reports duplicates and bad paths
    Ok(RepositoryArtifact::new(files, attempt_index)?)
}

/// Renders a repository in the reply format. Non-UTF-8 files are rendered
/// lossily. Used for scripted fixtures.
pub fn render_multifile(repo: &RepositoryArtifact) -> String {
    let mut out = String::new();
    for (path, bytes) in repo.files() {
        let content = String::from_utf8_lossy(bytes);
        let longest_run = content
            .lines()
            .map(|l| fence_len(l.trim()))
            .max()
            .unwrap_or(0);
        let fence = "`".repeat(longest_run.max(2) + 1);
        out.push_str(&format!("{HEADER} {path}\n{fence}\n{content}"));
        if !content.is_empty() && !content.ends_with('\n') {
            out.push('\n');
        }
        out.push_str(&format!("{fence}\n\n"));
    }
    out
}
