//! Model capabilities: chat completion (used for repository generation and
//! knowledge extraction) and text embedding.
//!
//! Adapters only move text. Prompt rendering, response parsing, retries and
//! usage accounting live here so every adapter gets them for free.

mod embedding;
mod format;
mod http;
mod pricing;
mod scripted;
mod structured;

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::repo::RepositoryArtifact;

pub use embedding::{HashEmbedder, HttpEmbedder, HASH_EMBEDDER_DIMENSION};
pub use format::{parse_multifile, render_multifile, FormatError};
pub use http::{HttpChatModel, HttpSettings};
pub use pricing::{BackendUsage, Cost, PriceError, PriceTable};
pub use scripted::{ScriptFile, ScriptStep, ScriptedModel};
pub use structured::{extract_fenced_json, extract_structured, StructuredError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: Role::System, content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: Role::Assistant, content: content.into() }
    }
}

/// Which capability a chat call serves. Scripted adapters replay separate
/// queues per purpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Purpose {
    Generation,
    Extraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for Decoding {
    fn default() -> Self {
        Decoding { temperature: 0.0, max_output_tokens: 32_768 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub purpose: Purpose,
    pub messages: Vec<Message>,
    pub decoding: Decoding,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Network-level or server-side failure; worth retrying.
    #[error("transport failure: {0}")]
    Transport(String),
    /// The service answered but not in a usable shape.
    #[error("protocol failure: {0}")]
    Protocol(String),
    #[error("script exhausted: no {0:?} response left")]
    ScriptExhausted(Purpose),
    #[error("embedding has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("configuration error: {0}")]
    Config(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }
}

pub trait ChatModel: Send {
    fn model_id(&self) -> &str;
    fn complete(&mut self, request: &ChatRequest) -> Result<Completion, BackendError>;
}

pub trait Embedder: Send + Sync {
    /// Stable identifier of the embedding space; vectors from different ids
    /// are never compared.
    fn embedder_id(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 2, initial_backoff: Duration::from_secs(1) }
    }
}

impl RetryPolicy {
    pub fn immediate(max_retries: u32) -> Self {
        RetryPolicy { max_retries, initial_backoff: Duration::ZERO }
    }
}

/// Accumulates usage and call counts across every model call of an attempt.
#[derive(Debug, Clone, Default)]
pub struct UsageMeter {
    pub prices: PriceTable,
    pub usage: BackendUsage,
    pub generation_calls: u32,
    pub extraction_calls: u32,
}

impl UsageMeter {
    pub fn new(prices: PriceTable) -> Self {
        UsageMeter { prices, ..Default::default() }
    }

    fn count(&mut self, purpose: Purpose) {
        match purpose {
            Purpose::Generation => self.generation_calls += 1,
            Purpose::Extraction => self.extraction_calls += 1,
        }
    }

    fn record(&mut self, completion: &Completion) {
        self.usage += self.prices.usage(completion.prompt_tokens, completion.completion_tokens);
    }
}

/// One call with bounded retries on transport errors and exponential backoff.
pub fn complete_with_retries(
    model: &mut dyn ChatModel,
    request: &ChatRequest,
    policy: &RetryPolicy,
    meter: &mut UsageMeter,
) -> Result<Completion, BackendError> {
    let mut backoff = policy.initial_backoff;
    let mut tries = 0;
    loop {
        meter.count(request.purpose);
        match model.complete(request) {
            Ok(completion) => {
                meter.record(&completion);
                return Ok(completion);
            }
            Err(err) if err.is_retryable() && tries < policy.max_retries => {
                tries += 1;
                if !backoff.is_zero() {
                    thread::sleep(backoff);
                }
                backoff *= 2;
            }
            Err(err) => return Err(err),
        }
    }
}

pub const DEFAULT_SYSTEM_PREAMBLE: &str = "You are an expert software engineer. You write complete, runnable, \
multi-file repositories that satisfy a natural-language requirement and pass its test suite.";

const FORMAT_INSTRUCTIONS: &str = "Output format: emit every file of the repository as a section that starts \
with a line `### FILE: <relative/path>` followed immediately by a fenced code block holding the full file \
content. Use forward slashes, no absolute paths and no `..` segments. Emit each path once. Text outside \
these sections is ignored.";

const FORMAT_REMINDER: &str = "Your previous reply could not be parsed into a repository";

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub system_preamble: String,
    pub requirement: String,
    pub knowledge_context: String,
    pub repair_feedback: Option<String>,
    /// Repository the feedback refers to, in the multi-file reply format.
    pub previous_repository: Option<String>,
    pub decoding: Decoding,
}

impl GenerationRequest {
    pub fn messages(&self) -> Vec<Message> {
        let system = format!("{}\n\n{}", self.system_preamble, FORMAT_INSTRUCTIONS);
        let mut user = format!(
            "## Requirement\n\n{}\n\n## Knowledge from earlier attempts on this task\n\n{}\n",
            self.requirement.trim_end(),
            self.knowledge_context.trim_end()
        );
        if let Some(previous) = &self.previous_repository {
            user.push_str(&format!("\n## Your previous repository\n\n{}\n", previous.trim_end()));
        }
        if let Some(feedback) = &self.repair_feedback {
            user.push_str(&format!(
                "\n## Execution feedback from your previous iteration\n\n{}\n\nRepair the repository so that \
                 the failing tests pass. Emit the complete repository again, not a diff.\n",
                feedback.trim_end()
            ));
        } else {
            user.push_str("\nGenerate the complete repository.\n");
        }
        vec![Message::system(system), Message::user(user)]
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GenerationError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("model output is not a valid repository: {0}")]
    MalformedOutput(FormatError),
}

/// Asks the model for a repository and parses the multi-file reply. A reply
/// that fails to parse gets one re-prompt quoting the parse error.
pub fn generate_repository(
    model: &mut dyn ChatModel,
    request: &GenerationRequest,
    attempt_index: u32,
    policy: &RetryPolicy,
    meter: &mut UsageMeter,
) -> Result<RepositoryArtifact, GenerationError> {
    let mut chat = ChatRequest { purpose: Purpose::Generation, messages: request.messages(), decoding: request.decoding };
    let mut last_error = None;
    for round in 0..2 {
        let completion = complete_with_retries(model, &chat, policy, meter)?;
        match parse_multifile(&completion.text, attempt_index.max(1)) {
            Ok(repo) => return Ok(repo),
            Err(err) => {
                if round == 0 {
                    chat.messages.push(Message::assistant(completion.text));
                    chat.messages.push(Message::user(format!(
                        "{FORMAT_REMINDER}: {err}.\n\n{FORMAT_INSTRUCTIONS}\n\nReply again with the complete repository."
                    )));
                }
                last_error = Some(err);
            }
        }
    }
    Err(GenerationError::MalformedOutput(last_error.expect("two rounds ran")))
}
