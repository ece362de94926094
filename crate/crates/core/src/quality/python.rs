//! A small Python source analyzer producing Halstead volume, cyclomatic
//! complexity and source lines for the maintainability index.

use std::collections::HashMap;

use super::maintainability::{maintainability_index, FileStats};
use crate::par::Exec;
use crate::repo::RepositoryArtifact;

pub trait SourceAnalyzer: Send + Sync {
    fn handles(&self, path: &str) -> bool;
    fn analyze(&self, source: &str) -> Option<FileStats>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PythonAnalyzer;

impl SourceAnalyzer for PythonAnalyzer {
    fn handles(&self, path: &str) -> bool {
        path.ends_with(".py")
    }

    fn analyze(&self, source: &str) -> Option<FileStats> {
        analyze_python_source(source)
    }
}

/// Normalized maintainability (0..=1) over every file some analyzer handles,
/// or `None` when the repository has no analyzable source.
pub fn repository_maintainability(
    repo: &RepositoryArtifact,
    analyzers: &[&dyn SourceAnalyzer],
    exec: Exec,
) -> Option<f64> {
    let files: Vec<(&String, &Vec<u8>)> = repo.files().iter().collect();
    let stats: Vec<FileStats> = exec
        .map(&files, |(path, bytes)| {
            let analyzer = analyzers.iter().find(|a| a.handles(path))?;
            let source = std::str::from_utf8(bytes).ok()?;
            analyzer.analyze(source)
        })
        .into_iter()
        .flatten()
        .collect();
    if stats.is_empty() {
        return None;
    }
    maintainability_index(&stats).ok().map(|mi| mi / 100.0)
}

const KEYWORDS: &[&str] = &[
    "and", "as", "assert", "async", "await", "break", "class", "continue", "def", "del", "elif", "else", "except",
    "finally", "for", "from", "global", "if", "import", "in", "is", "lambda", "nonlocal", "not", "or", "pass",
    "raise", "return", "try", "while", "with", "yield",
];
const DECISIONS: &[&str] = &["if", "elif", "for", "while", "except", "and", "or", "assert"];
const OPERATORS: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "==", "!=", "<=", ">=", "**", "//", "<<", ">>", "+=", "-=", "*=",
    "/=", "%=", "&=", "|=", "^=", "@=", "+", "-", "*", "/", "%", "@", "&", "|", "^", "~", "<", ">", "(", "[", "{",
    ",", ":", ".", ";", "=",
];

#[derive(Debug, PartialEq)]
enum Token<'a> {
    Operator(&'a str),
    Operand(&'a str),
}

/// Source lines of code: non-blank lines that are not only a comment.
fn count_sloc(source: &str) -> u64 {
    source
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .count() as u64
}

fn string_end(bytes: &[u8], start: usize) -> usize {
    // start points at the opening quote
    let quote = bytes[start];
    let triple = bytes.len() >= start + 3 && bytes[start + 1] == quote && bytes[start + 2] == quote;
    let mut i = start + if triple { 3 } else { 1 };
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'\n' if !triple => return i,
            c if c == quote => {
                if !triple {
                    return i + 1;
                }
                if bytes.len() >= i + 3 && bytes[i + 1] == quote && bytes[i + 2] == quote {
                    return i + 3;
                }
                i += 1;
            }
            _ => i += 1,
        }
    }
    bytes.len()
}

fn tokenize(source: &str) -> Vec<Token<'_>> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
        } else if c.is_ascii_whitespace() || c == b'\\' || matches!(c, b')' | b']' | b'}') {
            i += 1;
        } else if c == b'"' || c == b'\'' {
            let end = string_end(bytes, i);
            tokens.push(Token::Operand(&source[i..end]));
            i = end;
        } else if c.is_ascii_alphabetic() || c == b'_' || c >= 0x80 {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] >= 0x80) {
                i += 1;
            }
            // string prefixes such as f"", rb''
            if i < bytes.len() && (bytes[i] == b'"' || bytes[i] == b'\'') && i - start <= 2 {
                let end = string_end(bytes, i);
                tokens.push(Token::Operand(&source[start..end]));
                i = end;
                continue;
            }
            let word = &source[start..i];
            if KEYWORDS.contains(&word) {
                tokens.push(Token::Operator(word));
            } else {
                tokens.push(Token::Operand(word));
            }
        } else if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'.' || bytes[i] == b'_') {
                i += 1;
            }
            tokens.push(Token::Operand(&source[start..i]));
        } else {
            let rest = &source[i..];
            match OPERATORS.iter().find(|op| rest.starts_with(**op)) {
                Some(op) => {
                    tokens.push(Token::Operator(op));
                    i += op.len();
                }
                None => i += rest.chars().next().map_or(1, char::len_utf8),
            }
        }
    }
    tokens
}

/// Halstead volume (at least 1), cyclomatic complexity and SLOC of one file.
/// `None` for files without source lines.
pub fn analyze_python_source(source: &str) -> Option<FileStats> {
    let loc = count_sloc(source);
    if loc == 0 {
        return None;
    }
    let tokens = tokenize(source);
    let mut operators: HashMap<&str, u64> = HashMap::new();
    let mut operands: HashMap<&str, u64> = HashMap::new();
    let mut decisions = 0u64;
    for token in &tokens {
        match token {
            Token::Operator(op) => {
                *operators.entry(op).or_default() += 1;
                if DECISIONS.contains(op) {
                    decisions += 1;
                }
            }
            Token::Operand(word) => {
                if *word == "case" {
                    continue;
                }
                *operands.entry(word).or_default() += 1;
            }
        }
    }
    // `case` is a soft keyword; count it as a branch only at statement start
    decisions += source
        .lines()
        .filter(|l| l.trim_start().starts_with("case ") && l.trim_end().ends_with(':'))
        .count() as u64;
    let vocabulary = (operators.len() + operands.len()) as f64;
    let length = (operators.values().sum::<u64>() + operands.values().sum::<u64>()) as f64;
    let volume = if vocabulary >= 2.0 { length * vocabulary.log2() } else { 0.0 };
    Some(FileStats {
        halstead_volume: volume.max(1.0),
        cyclomatic_complexity: (1 + decisions) as f64,
        loc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizes_strings_and_comments() {
        let toks = tokenize("x = 'a # not comment' # real comment\n");
        assert_eq!(toks, vec![Token::Operand("x"), Token::Operator("="), Token::Operand("'a # not comment'")]);
        let toks = tokenize("s = \"\"\"multi\nline\"\"\" + f'x'\n");
        assert_eq!(toks.len(), 5);
    }

    #[test]
    fn counts_for_simple_function() {
        let src = "# header\n\ndef add(a, b):\n    if a and b:\n        return a + b\n    return 0\n";
        let stats = analyze_python_source(src).unwrap();
        assert_eq!(stats.loc, 4);
        // if + and
        assert_eq!(stats.cyclomatic_complexity, 3.0);
        // operators: def ( , : if and : return + return  -> 10 total, 8 distinct
        // operands: add a b a b a b 0 -> 8 total, 4 distinct
        let expected = 18.0 * 12f64.log2();
        assert!((stats.halstead_volume - expected).abs() < 1e-9, "{}", stats.halstead_volume);
    }

    #[test]
    fn empty_and_comment_only_files_are_skipped() {
        assert!(analyze_python_source("").is_none());
        assert!(analyze_python_source("# only\n\n").is_none());
        let one = analyze_python_source("pass\n").unwrap();
        assert_eq!(one.halstead_volume, 1.0);
    }

    #[test]
    fn repository_level_score() {
        let repo = RepositoryArtifact::new(
            [("README.md", "# docs"), ("pkg/a.py", "x = 1\n"), ("pkg/b.py", "def f(y):\n    return y * 2\n")],
            1,
        )
        .unwrap();
        let seq = repository_maintainability(&repo, &[&PythonAnalyzer], Exec::Sequential).unwrap();
        let par = repository_maintainability(&repo, &[&PythonAnalyzer], Exec::Parallel).unwrap();
        assert_eq!(seq, par);
        assert!(seq > 0.0 && seq <= 1.0);
        let docs = RepositoryArtifact::new([("README.md", "# docs")], 1).unwrap();
        assert!(repository_maintainability(&docs, &[&PythonAnalyzer], Exec::Sequential).is_none());
    }
}
