use serde::de::DeserializeOwned;

use super::{complete_with_retries, BackendError, ChatModel, ChatRequest, Decoding, Message, Purpose, RetryPolicy, UsageMeter};

#[derive(Debug, thiserror::Error)]
pub enum StructuredError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("reply does not match schema `{schema}` after one repair round: {reason}")]
    SchemaViolation { schema: &'static str, reason: String },
}

/// Pulls the JSON document out of a reply: the first ```json (or bare ```)
/// fenced block, else the whole reply.
pub fn extract_fenced_json(text: &str) -> &str {
    let mut start = None;
    for (offset, line) in line_offsets(text) {
        let trimmed = line.trim();
        match start {
            None if trimmed == "```json" || trimmed == "```JSON" || trimmed == "```" => {
                start = Some(offset + line.len() + 1);
            }
            Some(s) if trimmed == "```" => return text[s.min(offset)..offset].trim(),
            _ => {}
        }
    }
    text.trim()
}

fn line_offsets(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut offset = 0;
    text.split('\n').map(move |line| {
        let here = offset;
        offset += line.len() + 1;
        (here, line)
    })
}

/// Requests a structured document, validates it, and re-prompts once with
/// the parse or validation error before giving up.
#[allow(clippy::too_many_arguments)]
pub fn extract_structured<T, V>(
    model: &mut dyn ChatModel,
    system: &str,
    prompt: &str,
    schema: &'static str,
    validate: V,
    decoding: Decoding,
    policy: &RetryPolicy,
    meter: &mut UsageMeter,
) -> Result<T, StructuredError>
where
    T: DeserializeOwned,
    V: Fn(&T) -> Result<(), String>,
{
    let mut chat = ChatRequest {
        purpose: Purpose::Extraction,
        messages: vec![Message::system(system), Message::user(prompt)],
        decoding,
    };
    let mut reason = String::new();
    for round in 0..2 {
        let completion = complete_with_retries(model, &chat, policy, meter)?;
        let parsed = serde_json::from_str::<T>(extract_fenced_json(&completion.text))
            .map_err(|e| e.to_string())
            .and_then(|doc| validate(&doc).map(|_| doc));
        match parsed {
            Ok(doc) => return Ok(doc),
            Err(err) => {
                reason = err;
                if round == 0 {
                    chat.messages.push(Message::assistant(completion.text));
                    chat.messages.push(Message::user(format!(
                        "Your reply did not conform to schema `{schema}`: {reason}\nReply again with exactly one \
                         ```json fenced block that conforms to the schema."
                    )));
                }
            }
        }
    }
    Err(StructuredError::SchemaViolation { schema, reason })
}
