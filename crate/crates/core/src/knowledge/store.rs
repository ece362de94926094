use std::collections::HashSet;

use super::{cosine_similarity, KnowledgeEntry};
use crate::canonical::Digest;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AdmitReport {
    pub added: Vec<String>,
    pub duplicates: Vec<String>,
    pub evicted: Vec<String>,
}

/// Appends `incoming` to one knowledge list.
///
/// An entry whose summary text matches one already present (or earlier in
/// the same batch) is dropped. With a cap, the entries least similar to the
/// requirement are evicted after appending; ties evict the larger id.
pub fn admit_entries(
    existing: &mut Vec<KnowledgeEntry>,
    incoming: Vec<KnowledgeEntry>,
    cap: Option<usize>,
    requirement_embedding: Option<&[f64]>,
) -> AdmitReport {
    let mut report = AdmitReport::default();
    let mut seen: HashSet<Digest> = existing.iter().map(|e| Digest::of(e.summary_text.as_bytes())).collect();
    for entry in incoming {
        if seen.insert(Digest::of(entry.summary_text.as_bytes())) {
            report.added.push(entry.entry_id.clone());
            existing.push(entry);
        } else {
            report.duplicates.push(entry.entry_id);
        }
    }
    if let (Some(cap), Some(query)) = (cap, requirement_embedding) {
        while existing.len() > cap {
            let similarity = |e: &KnowledgeEntry| cosine_similarity(query, &e.embedding).unwrap_or(f64::NEG_INFINITY);
            let victim = existing
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    similarity(a).total_cmp(&similarity(b)).then_with(|| b.entry_id.cmp(&a.entry_id))
                })
                .map(|(i, _)| i)
                .expect("non-empty");
            report.evicted.push(existing.remove(victim).entry_id);
        }
    }
    report
}
