//! Turning an attempt's repository and execution feedback into knowledge
//! entries through one structured model call.

use serde::{Deserialize, Serialize};

use super::{FailureSignals, KnowledgeEntry, KnowledgeError, KnowledgeKind, SignalSet, SuccessSignals};
use crate::backend::{extract_structured, ChatModel, Decoding, Embedder, RetryPolicy, StructuredError, UsageMeter};
use crate::repo::RepositoryArtifact;
use crate::score::Score;

pub const EXTRACTION_SCHEMA_ID: &str = "crossloop.knowledge.v1";

const OBSERVATION_BUDGET: usize = 16 * 1024;
const FEEDBACK_BUDGET: usize = 16 * 1024;
const INTERFACE_LINES_PER_FILE: usize = 40;

const EXTRACTION_SYSTEM: &str = "You analyse one attempt at generating a software repository and distill \
reusable lessons for later attempts on the same task. Reply with a single ```json fenced block and nothing else.";

const SCHEMA_TEXT: &str = r#"{
  "success": [
    {
      "repository_level_signals": ["effective structure, interfaces or dependency organization worth keeping"],
      "functionally_validated_signals": ["behaviour confirmed by passing tests"],
      "carry_over_signals": ["concrete guidance to carry into the next attempt"]
    }
  ],
  "failure": [
    {
      "observed_failure_signals": ["failing tests, runtime errors, unmet requirements"],
      "repository_level_failure_signals": ["missing components, broken inter-file dependencies, violated contracts"],
      "carry_over_constraints": ["concrete constraint the next attempt must respect"]
    }
  ]
}"#;

/// The document the model must return.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractionDocument {
    #[serde(default)]
    pub success: Vec<SuccessSignals>,
    #[serde(default)]
    pub failure: Vec<FailureSignals>,
}

impl ExtractionDocument {
    pub fn validate(&self) -> Result<(), String> {
        for (i, s) in self.success.iter().enumerate() {
            SignalSet::Success(s.clone()).validate().map_err(|e| format!("success[{i}]: {e}"))?;
        }
        for (i, f) in self.failure.iter().enumerate() {
            SignalSet::Failure(f.clone()).validate().map_err(|e| format!("failure[{i}]: {e}"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExtractionInput<'a> {
    pub requirement: &'a str,
    /// Absent when generation failed before producing any repository.
    pub repo: Option<&'a RepositoryArtifact>,
    pub feedback: &'a str,
    pub score: Score,
    pub attempt_index: u32,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractionSettings {
    pub decoding: Decoding,
    pub retry: RetryPolicy,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExtractedEntries {
    pub success: Vec<KnowledgeEntry>,
    pub failure: Vec<KnowledgeEntry>,
}

fn truncate_to(text: &str, budget: usize) -> (&str, bool) {
    if text.len() <= budget {
        return (text, false);
    }
    let mut end = budget;
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    (&text[..end], true)
}

fn is_interface_line(line: &str) -> bool {
    const PREFIXES: &[&str] = &[
        "def ", "async def ", "class ", "import ", "from ", "fn ", "pub fn ", "pub struct ", "pub enum ", "pub trait ",
        "use ", "export ", "module.exports", "function ", "interface ",
    ];
    PREFIXES.iter().any(|p| line.starts_with(p))
}

/// File organization, sizes and top-level interface lines.
fn repository_observations(repo: &RepositoryArtifact) -> String {
    let mut out = format!("{} files, {} bytes\n", repo.len(), repo.total_bytes());
    for (path, bytes) in repo.files() {
        match std::str::from_utf8(bytes) {
            Ok(text) => {
                out.push_str(&format!("\n{path} ({} lines)\n", text.lines().count()));
                for line in text.lines().filter(|l| is_interface_line(l)).take(INTERFACE_LINES_PER_FILE) {
                    out.push_str("  ");
                    out.push_str(line.trim_end());
                    out.push('\n');
                }
            }
            Err(_) => out.push_str(&format!("\n{path} (binary, {} bytes)\n", bytes.len())),
        }
    }
    let (kept, cut) = truncate_to(&out, OBSERVATION_BUDGET);
    if cut {
        format!("{kept}\n[observations truncated]\n")
    } else {
        out
    }
}

pub fn extraction_prompt(input: &ExtractionInput<'_>) -> String {
    let observations = match input.repo {
        Some(repo) => repository_observations(repo),
        None => "No repository was produced in this attempt.\n".to_string(),
    };
    let (feedback, cut) = truncate_to(input.feedback, FEEDBACK_BUDGET);
    format!(
        "## Requirement\n\n{req}\n\n## Attempt {attempt}: functional score {score}\n\n\
         ## Repository observations\n\n{observations}\n## Execution feedback\n\n{feedback}{cut}\n\n\
         ## Task\n\nSummarize reusable positive signals under `success` and reusable failure signals under \
         `failure`. Fill both whenever the attempt offers evidence for them; either list may be empty. Every item \
         must be a single non-empty line. Use schema `{schema}`:\n\n```json\n{schema_text}\n```\n",
        req = input.requirement.trim_end(),
        attempt = input.attempt_index,
        score = input.score,
        cut = if cut { "\n[feedback truncated]" } else { "" },
        schema = EXTRACTION_SCHEMA_ID,
        schema_text = SCHEMA_TEXT,
    )
}

/// One extraction call per attempt. Both kinds are requested every time;
/// entries carry the attempt index and score as provenance.
pub fn extract_entries(
    input: &ExtractionInput<'_>,
    model: &mut dyn ChatModel,
    embedder: &dyn Embedder,
    settings: &ExtractionSettings,
    meter: &mut UsageMeter,
) -> Result<ExtractedEntries, KnowledgeError> {
    let prompt = extraction_prompt(input);
    let doc: ExtractionDocument = extract_structured(
        model,
        EXTRACTION_SYSTEM,
        &prompt,
        EXTRACTION_SCHEMA_ID,
        ExtractionDocument::validate,
        settings.decoding,
        &settings.retry,
        meter,
    )
    .map_err(|e| match e {
        StructuredError::Backend(b) => KnowledgeError::Backend(b),
        StructuredError::SchemaViolation { reason, .. } => KnowledgeError::SchemaViolation(reason),
    })?;

    let build = |kind: KnowledgeKind, ordinal: usize, signals: SignalSet| {
        KnowledgeEntry::build(
            KnowledgeEntry::make_id(kind, input.attempt_index, ordinal + 1),
            input.attempt_index,
            input.score,
            signals,
            embedder,
        )
    };
    let success = doc
        .success
        .into_iter()
        .enumerate()
        .map(|(i, s)| build(KnowledgeKind::Success, i, SignalSet::Success(s)))
        .collect::<Result<Vec<_>, _>>()?;
    let failure = doc
        .failure
        .into_iter()
        .enumerate()
        .map(|(i, f)| build(KnowledgeKind::Failure, i, SignalSet::Failure(f)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExtractedEntries { success, failure })
}
