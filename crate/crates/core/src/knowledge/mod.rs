//! Success and Failure Knowledge: structured textual entries distilled from
//! each attempt, embedded for retrieval against the task requirement.

mod extract;
mod render;
mod retrieve;
mod store;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, Embedder};
use crate::score::Score;

pub use extract::{
    extract_entries, extraction_prompt, ExtractedEntries, ExtractionDocument, ExtractionInput, ExtractionSettings,
    EXTRACTION_SCHEMA_ID,
};
pub use render::{render_prompt_context, NO_PRIOR_KNOWLEDGE};
pub use retrieve::{rank_entries, retrieve, Hit, RetrievalResult};
pub use store::{admit_entries, AdmitReport};

pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnowledgeKind {
    Success,
    Failure,
}

impl KnowledgeKind {
    fn id_prefix(self) -> char {
        match self {
            KnowledgeKind::Success => 's',
            KnowledgeKind::Failure => 'f',
        }
    }
}

/// Positive signals from a strong attempt.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuccessSignals {
    #[serde(default)]
    pub repository_level_signals: Vec<String>,
    #[serde(default)]
    pub functionally_validated_signals: Vec<String>,
    #[serde(default)]
    pub carry_over_signals: Vec<String>,
}

/// Negative signals from a weak attempt.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureSignals {
    #[serde(default)]
    pub observed_failure_signals: Vec<String>,
    #[serde(default)]
    pub repository_level_failure_signals: Vec<String>,
    #[serde(default)]
    pub carry_over_constraints: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SignalSet {
    Success(SuccessSignals),
    Failure(FailureSignals),
}

impl SignalSet {
    pub fn kind(&self) -> KnowledgeKind {
        match self {
            SignalSet::Success(_) => KnowledgeKind::Success,
            SignalSet::Failure(_) => KnowledgeKind::Failure,
        }
    }

    fn sections(&self) -> [(&'static str, &[String]); 3] {
        match self {
            SignalSet::Success(s) => [
                ("Repository-level signals", &s.repository_level_signals),
                ("Functionally validated signals", &s.functionally_validated_signals),
                ("Carry-over signals", &s.carry_over_signals),
            ],
            SignalSet::Failure(f) => [
                ("Observed failure signals", &f.observed_failure_signals),
                ("Repository-level failure signals", &f.repository_level_failure_signals),
                ("Carry-over constraints", &f.carry_over_constraints),
            ],
        }
    }

    /// Every item is a non-empty single line and at least one list has items.
    pub fn validate(&self) -> Result<(), String> {
        let sections = self.sections();
        if sections.iter().all(|(_, items)| items.is_empty()) {
            return Err("all signal lists are empty".into());
        }
        for (name, items) in sections {
            for item in items {
                if item.trim().is_empty() {
                    return Err(format!("{name}: empty item"));
                }
                if item.contains(['\n', '\r']) {
                    return Err(format!("{name}: item spans multiple lines"));
                }
            }
        }
        Ok(())
    }

    /// The fixed textual template injected into prompts.
    pub fn render_summary(&self) -> String {
        let mut out = String::new();
        for (name, items) in self.sections() {
            out.push_str(name);
            out.push_str(":\n");
            if items.is_empty() {
                out.push_str("- (none)\n");
            }
            for item in items {
                out.push_str("- ");
                out.push_str(item.trim());
                out.push('\n');
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KnowledgeError {
    #[error("text to embed is empty")]
    EmptyText,
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero-norm vector")]
    ZeroVector,
    #[error("vector has non-finite components")]
    NonFinite,
    #[error("entry `{entry_id}` was embedded by `{found}`, retrieval uses `{expected}`")]
    EmbedderMismatch { entry_id: String, expected: String, found: String },
    #[error("invalid signals: {0}")]
    InvalidSignals(String),
    #[error("extraction output violates schema: {0}")]
    SchemaViolation(String),
    #[error("backend failure: {0}")]
    Backend(#[from] BackendError),
}

/// One stored experience record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EntryRepr", into = "EntryRepr")]
pub struct KnowledgeEntry {
    pub entry_id: String,
    pub source_attempt: u32,
    pub associated_score: Score,
    pub signals: SignalSet,
    pub summary_text: String,
    pub embedding: Vec<f64>,
    pub embedder_id: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryRepr {
    entry_id: String,
    kind: KnowledgeKind,
    source_attempt: u32,
    associated_score: Score,
    signals: SignalSet,
    summary_text: String,
    embedding: Vec<f64>,
    embedder_id: String,
}

impl TryFrom<EntryRepr> for KnowledgeEntry {
    type Error = String;

    fn try_from(r: EntryRepr) -> Result<Self, String> {
        if r.signals.kind() != r.kind {
            return Err(format!("entry `{}` declares kind {:?} but carries {:?} signals", r.entry_id, r.kind, r.signals.kind()));
        }
        Ok(KnowledgeEntry {
            entry_id: r.entry_id,
            source_attempt: r.source_attempt,
            associated_score: r.associated_score,
            signals: r.signals,
            summary_text: r.summary_text,
            embedding: r.embedding,
            embedder_id: r.embedder_id,
        })
    }
}

impl From<KnowledgeEntry> for EntryRepr {
    fn from(e: KnowledgeEntry) -> Self {
        EntryRepr {
            entry_id: e.entry_id,
            kind: e.signals.kind(),
            source_attempt: e.source_attempt,
            associated_score: e.associated_score,
            signals: e.signals,
            summary_text: e.summary_text,
            embedding: e.embedding,
            embedder_id: e.embedder_id,
        }
    }
}

impl KnowledgeEntry {
    /// Validates the signals, renders the summary and embeds it.
    pub fn build(
        entry_id: String,
        source_attempt: u32,
        associated_score: Score,
        signals: SignalSet,
        embedder: &dyn Embedder,
    ) -> Result<Self, KnowledgeError> {
        signals.validate().map_err(KnowledgeError::InvalidSignals)?;
        let summary_text = signals.render_summary();
        let embedding = embed_text(&summary_text, embedder)?;
        Ok(KnowledgeEntry {
            entry_id,
            source_attempt,
            associated_score,
            signals,
            summary_text,
            embedding,
            embedder_id: embedder.embedder_id().to_string(),
        })
    }

    pub fn kind(&self) -> KnowledgeKind {
        self.signals.kind()
    }

    /// `s0003-01` style ids: kind, attempt, ordinal within the attempt.
    pub fn make_id(kind: KnowledgeKind, attempt: u32, ordinal: usize) -> String {
        format!("{}{:04}-{:02}", kind.id_prefix(), attempt, ordinal)
    }
}

/// Embeds non-empty text and checks the configured dimension.
pub fn embed_text(text: &str, embedder: &dyn Embedder) -> Result<Vec<f64>, KnowledgeError> {
    if text.trim().is_empty() {
        return Err(KnowledgeError::EmptyText);
    }
    let v = embedder.embed(text)?;
    if v.len() != embedder.dimension() {
        return Err(KnowledgeError::DimensionMismatch(v.len(), embedder.dimension()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(KnowledgeError::NonFinite);
    }
    Ok(v)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, KnowledgeError> {
    if a.len() != b.len() {
        return Err(KnowledgeError::DimensionMismatch(a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if !(dot.is_finite() && na.is_finite() && nb.is_finite()) {
        return Err(KnowledgeError::NonFinite);
    }
    if na == 0.0 || nb == 0.0 {
        return Err(KnowledgeError::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}
