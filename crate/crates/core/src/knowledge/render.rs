use super::RetrievalResult;
use crate::score::percent_2dp;

pub const NO_PRIOR_KNOWLEDGE: &str = "No prior knowledge.";

const POSITIVE_HEADER: &str = "### Positive guidance (Success Knowledge)\n\
Preserve these repository-level decisions; they were validated by earlier attempts on this task.\n";
const NEGATIVE_HEADER: &str = "### Negative guidance (Failure Knowledge)\n\
Avoid these structures, dependencies and repair directions; earlier attempts on this task failed with them.\n";

fn section(out: &mut String, header: &str, result: &RetrievalResult<'_>) {
    out.push_str(header);
    out.push('\n');
    if result.is_empty() {
        out.push_str(NO_PRIOR_KNOWLEDGE);
        out.push('\n');
        return;
    }
    for (i, hit) in result.hits.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let score = hit.entry.associated_score;
        out.push_str(&format!(
            "[attempt {} | score {}]\n",
            hit.entry.source_attempt,
            percent_2dp(score.passed as u128, score.total as u128)
        ));
        out.push_str(&hit.entry.summary_text);
        if !hit.entry.summary_text.ends_with('\n') {
            out.push('\n');
        }
    }
}

/// Knowledge block injected into generation prompts: positive guidance first,
/// then negative guidance, in retrieval order.
pub fn render_prompt_context(success: &RetrievalResult<'_>, failure: &RetrievalResult<'_>) -> String {
    let mut out = String::new();
    section(&mut out, POSITIVE_HEADER, success);
    out.push('\n');
    section(&mut out, NEGATIVE_HEADER, failure);
    out
}
