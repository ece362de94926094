use std::cmp::Ordering;

use super::{cosine_similarity, embed_text, KnowledgeEntry, KnowledgeError};
use crate::backend::Embedder;
use crate::par::Exec;

#[derive(Debug, Clone, PartialEq)]
pub struct Hit<'a> {
    pub entry: &'a KnowledgeEntry,
    pub similarity: f64,
}

/// Entries ordered by descending similarity, ties by ascending `entry_id`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RetrievalResult<'a> {
    pub hits: Vec<Hit<'a>>,
}

impl<'a> RetrievalResult<'a> {
    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn entry_ids(&self) -> Vec<&'a str> {
        self.hits.iter().map(|h| h.entry.entry_id.as_str()).collect()
    }
}

fn rank_order(a: &Hit<'_>, b: &Hit<'_>) -> Ordering {
    b.similarity
        .total_cmp(&a.similarity)
        .then_with(|| a.entry.entry_id.cmp(&b.entry.entry_id))
}

/// Linear scan: cosine against every entry, then the best `top_k`.
pub fn rank_entries<'a>(
    query: &[f64],
    entries: &'a [KnowledgeEntry],
    top_k: usize,
    exec: Exec,
) -> Result<RetrievalResult<'a>, KnowledgeError> {
    if top_k == 0 || entries.is_empty() {
        return Ok(RetrievalResult::default());
    }
    let mut hits = exec
        .try_map(entries, |entry| {
            cosine_similarity(query, &entry.embedding).map(|similarity| Hit { entry, similarity })
        })?;
    if top_k < hits.len() {
        hits.select_nth_unstable_by(top_k - 1, rank_order);
        hits.truncate(top_k);
    }
    hits.sort_unstable_by(rank_order);
    Ok(RetrievalResult { hits })
}

/// Embeds the requirement and ranks `entries` (one kind at a time) against it.
/// Entries must all come from `embedder`'s embedding space.
pub fn retrieve<'a>(
    requirement: &str,
    entries: &'a [KnowledgeEntry],
    top_k: usize,
    embedder: &dyn Embedder,
    exec: Exec,
) -> Result<RetrievalResult<'a>, KnowledgeError> {
    if top_k == 0 || entries.is_empty() {
        return Ok(RetrievalResult::default());
    }
    if let Some(e) = entries.iter().find(|e| e.embedder_id != embedder.embedder_id()) {
        return Err(KnowledgeError::EmbedderMismatch {
            entry_id: e.entry_id.clone(),
            expected: embedder.embedder_id().to_string(),
            found: e.embedder_id.clone(),
        });
    }
    let query = embed_text(requirement, embedder)?;
    rank_entries(&query, entries, top_k, exec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::HashEmbedder;
    use crate::knowledge::{SignalSet, SuccessSignals};
    use crate::score::Score;

    fn entry(id: &str, embedding: Vec<f64>) -> KnowledgeEntry {
        KnowledgeEntry {
            entry_id: id.into(),
            source_attempt: 1,
            associated_score: Score::ZERO,
            signals: SignalSet::Success(SuccessSignals { carry_over_signals: vec!["x".into()], ..Default::default() }),
            summary_text: "x".into(),
            embedding,
            embedder_id: "hash-v1-2".into(),
        }
    }

    #[test]
    fn top_k_ordering() {
        // unit vectors whose cosine with (1, 0) is 0.9, 0.2 and 0.5
        let unit = |c: f64| vec![c, (1.0 - c * c).sqrt()];
        let entries = vec![entry("a", unit(0.9)), entry("b", unit(0.2)), entry("c", unit(0.5))];
        let got = rank_entries(&[1.0, 0.0], &entries, 2, Exec::Sequential).unwrap();
        assert_eq!(got.entry_ids(), ["a", "c"]);
        assert!((got.hits[0].similarity - 0.9).abs() < 1e-12);
        assert!(rank_entries(&[1.0, 0.0], &entries, 0, Exec::Sequential).unwrap().is_empty());
        assert_eq!(rank_entries(&[1.0, 0.0], &entries, 10, Exec::Parallel).unwrap().len(), 3);
    }

    #[test]
    fn ties_break_on_entry_id() {
        let entries = vec![entry("s0002-01", vec![1.0, 1.0]), entry("s0001-01", vec![1.0, 1.0])];
        let got = rank_entries(&[1.0, 0.0], &entries, 1, Exec::Sequential).unwrap();
        assert_eq!(got.entry_ids(), ["s0001-01"]);
    }

    #[test]
    fn embedder_mismatch_is_refused() {
        let entries = vec![entry("a", vec![1.0, 0.0])];
        let err = retrieve("req", &entries, 1, &HashEmbedder::default(), Exec::Sequential).unwrap_err();
        assert!(matches!(err, KnowledgeError::EmbedderMismatch { .. }));
    }
}
