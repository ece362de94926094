//! Deterministic adapter that replays canned replies in call order.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::format::render_multifile;
use super::{BackendError, ChatModel, ChatRequest, Completion, Purpose};
use crate::repo::RepositoryArtifact;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptStep {
    Reply {
        reply: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prompt_tokens: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        completion_tokens: Option<u64>,
    },
    /// A repository reply given as a path -> text map.
    Files {
        files: BTreeMap<String, String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prompt_tokens: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        completion_tokens: Option<u64>,
    },
    TransportError { transport_error: String },
}

impl ScriptStep {
    pub fn reply(text: impl Into<String>) -> Self {
        ScriptStep::Reply { reply: text.into(), prompt_tokens: None, completion_tokens: None }
    }

    pub fn reply_with_usage(text: impl Into<String>, prompt_tokens: u64, completion_tokens: u64) -> Self {
        ScriptStep::Reply { reply: text.into(), prompt_tokens: Some(prompt_tokens), completion_tokens: Some(completion_tokens) }
    }

    pub fn repo(repo: &RepositoryArtifact) -> Self {
        ScriptStep::reply(render_multifile(repo))
    }

    pub fn transport_error(message: impl Into<String>) -> Self {
        ScriptStep::TransportError { transport_error: message.into() }
    }
}

/// On-disk script for the scripted adapter.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptFile {
    #[serde(default)]
    pub model_id: Option<String>,
    #[serde(default)]
    pub generations: Vec<ScriptStep>,
    #[serde(default)]
    pub extractions: Vec<ScriptStep>,
    /// Replayed for every extraction call once `extractions` runs out.
    #[serde(default)]
    pub extraction_fallback: Option<String>,
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
}

impl ScriptFile {
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let bytes = std::fs::read(path).map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_slice(&bytes).map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone)]
pub struct ScriptedModel {
    id: String,
    generation: VecDeque<ScriptStep>,
    extraction: VecDeque<ScriptStep>,
    extraction_fallback: Option<String>,
    default_usage: (u64, u64),
    requests: Vec<ChatRequest>,
}

impl ScriptedModel {
    pub fn new(id: impl Into<String>) -> Self {
        ScriptedModel {
            id: id.into(),
            generation: VecDeque::new(),
            extraction: VecDeque::new(),
            extraction_fallback: None,
            default_usage: (0, 0),
            requests: Vec::new(),
        }
    }

    pub fn from_script(script: ScriptFile) -> Self {
        ScriptedModel {
            id: script.model_id.unwrap_or_else(|| "scripted".into()),
            generation: script.generations.into(),
            extraction: script.extractions.into(),
            extraction_fallback: script.extraction_fallback,
            default_usage: (script.prompt_tokens, script.completion_tokens),
            requests: Vec::new(),
        }
    }

    pub fn with_generation(mut self, steps: impl IntoIterator<Item = ScriptStep>) -> Self {
        self.generation.extend(steps);
        self
    }

    pub fn with_extraction(mut self, steps: impl IntoIterator<Item = ScriptStep>) -> Self {
        self.extraction.extend(steps);
        self
    }

    pub fn with_extraction_fallback(mut self, reply: impl Into<String>) -> Self {
        self.extraction_fallback = Some(reply.into());
        self
    }

    pub fn with_default_usage(mut self, prompt_tokens: u64, completion_tokens: u64) -> Self {
        self.default_usage = (prompt_tokens, completion_tokens);
        self
    }

    /// Every request received, in order.
    pub fn requests(&self) -> &[ChatRequest] {
        &self.requests
    }

    pub fn calls(&self, purpose: Purpose) -> usize {
        self.requests.iter().filter(|r| r.purpose == purpose).count()
    }

    pub fn remaining(&self, purpose: Purpose) -> usize {
        match purpose {
            Purpose::Generation => self.generation.len(),
            Purpose::Extraction => self.extraction.len(),
        }
    }
}

impl ChatModel for ScriptedModel {
    fn model_id(&self) -> &str {
        &self.id
    }

    fn complete(&mut self, request: &ChatRequest) -> Result<Completion, BackendError> {
        self.requests.push(request.clone());
        let step = match request.purpose {
            Purpose::Generation => self.generation.pop_front(),
            Purpose::Extraction => self
                .extraction
                .pop_front()
                .or_else(|| self.extraction_fallback.clone().map(ScriptStep::reply)),
        };
        let (default_in, default_out) = self.default_usage;
        let (text, pin, pout) = match step {
            None => return Err(BackendError::ScriptExhausted(request.purpose)),
            Some(ScriptStep::TransportError { transport_error }) => return Err(BackendError::Transport(transport_error)),
            Some(ScriptStep::Reply { reply, prompt_tokens, completion_tokens }) => (reply, prompt_tokens, completion_tokens),
            Some(ScriptStep::Files { files, prompt_tokens, completion_tokens }) => {
                let repo = RepositoryArtifact::new(files, 1).map_err(|e| BackendError::Config(e.to_string()))?;
                (render_multifile(&repo), prompt_tokens, completion_tokens)
            }
        };
        Ok(Completion {
            text,
            prompt_tokens: pin.unwrap_or(default_in),
            completion_tokens: pout.unwrap_or(default_out),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{Decoding, Message};

    fn req(purpose: Purpose) -> ChatRequest {
        ChatRequest { purpose, messages: vec![Message::user("hi")], decoding: Decoding::default() }
    }

    #[test]
    fn queues_are_independent_and_deterministic() {
        let build = || {
            ScriptedModel::new("m")
                .with_generation([ScriptStep::reply("g1"), ScriptStep::reply("g2")])
                .with_extraction([ScriptStep::reply("e1")])
                .with_extraction_fallback("fb")
                .with_default_usage(7, 3)
        };
        let run = |mut m: ScriptedModel| {
            vec![
                m.complete(&req(Purpose::Extraction)).unwrap(),
                m.complete(&req(Purpose::Generation)).unwrap(),
                m.complete(&req(Purpose::Extraction)).unwrap(),
                m.complete(&req(Purpose::Generation)).unwrap(),
            ]
        };
        let a = run(build());
        assert_eq!(a, run(build()));
        let texts: Vec<_> = a.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(texts, ["e1", "g1", "fb", "g2"]);
        assert_eq!(a[0].prompt_tokens, 7);
        let mut m = build();
        m.complete(&req(Purpose::Generation)).unwrap();
        m.complete(&req(Purpose::Generation)).unwrap();
        assert_eq!(m.complete(&req(Purpose::Generation)), Err(BackendError::ScriptExhausted(Purpose::Generation)));
        assert_eq!(m.calls(Purpose::Generation), 3);
    }

    #[test]
    fn script_file_parses_all_step_shapes() {
        let json = r#"{
            "generations": [
                {"files": {"a.py": "x = 1\n"}, "prompt_tokens": 5},
                {"reply": "text"},
                {"transport_error": "reset"}
            ],
            "extraction_fallback": "{}",
            "prompt_tokens": 1,
            "completion_tokens": 2
        }"#;
        let script: ScriptFile = serde_json::from_str(json).unwrap();
        let mut m = ScriptedModel::from_script(script);
        let c = m.complete(&req(Purpose::Generation)).unwrap();
        assert!(c.text.contains("### FILE: a.py"));
        assert_eq!((c.prompt_tokens, c.completion_tokens), (5, 2));
        assert_eq!(m.complete(&req(Purpose::Generation)).unwrap().text, "text");
        assert!(matches!(m.complete(&req(Purpose::Generation)), Err(BackendError::Transport(_))));
    }
}
