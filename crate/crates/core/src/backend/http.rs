//! Adapter for chat-completions-style JSON HTTP APIs.

use std::time::Duration;

use serde_json::{json, Value};

use super::{BackendError, ChatModel, ChatRequest, Completion};

#[derive(Debug, Clone)]
pub struct HttpSettings {
    pub endpoint: String,
    pub model: String,
    /// Resolved API key; `None` sends no Authorization header.
    pub api_key: Option<String>,
    pub timeout: Duration,
}

pub(super) fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

/// POSTs `body` and returns the parsed JSON reply. 429 and 5xx map to
/// retryable transport errors, other non-2xx statuses to protocol errors.
pub(super) fn post_json(
    agent: &ureq::Agent,
    endpoint: &str,
    api_key: Option<&str>,
    body: &Value,
) -> Result<Value, BackendError> {
    let mut request = agent.post(endpoint).header("Content-Type", "application/json");
    if let Some(key) = api_key {
        request = request.header("Authorization", &format!("Bearer {key}"));
    }
    let mut response = request
        .send(body.to_string())
        .map_err(|e| BackendError::Transport(e.to_string()))?;
    let status = response.status().as_u16();
    let text = response
        .body_mut()
        .read_to_string()
        .map_err(|e| BackendError::Transport(e.to_string()))?;
    if status == 429 || status >= 500 {
        return Err(BackendError::Transport(format!("HTTP {status}: {}", snippet(&text))));
    }
    if !(200..300).contains(&status) {
        return Err(BackendError::Protocol(format!("HTTP {status}: {}", snippet(&text))));
    }
    serde_json::from_str(&text).map_err(|e| BackendError::Protocol(format!("invalid JSON reply: {e}")))
}

fn snippet(text: &str) -> &str {
    let end = text.char_indices().nth(300).map_or(text.len(), |(i, _)| i);
    &text[..end]
}

pub struct HttpChatModel {
    settings: HttpSettings,
    agent: ureq::Agent,
}

impl HttpChatModel {
    pub fn new(settings: HttpSettings) -> Self {
        let agent = agent(settings.timeout);
        HttpChatModel { settings, agent }
    }

    pub fn request_body(&self, request: &ChatRequest) -> Value {
        json!({
            "model": self.settings.model,
            "messages": request.messages,
            "temperature": request.decoding.temperature,
            "max_tokens": request.decoding.max_output_tokens,
        })
    }
}

impl ChatModel for HttpChatModel {
    fn model_id(&self) -> &str {
        &self.settings.model
    }

    fn complete(&mut self, request: &ChatRequest) -> Result<Completion, BackendError> {
        let body = self.request_body(request);
        let reply = post_json(&self.agent, &self.settings.endpoint, self.settings.api_key.as_deref(), &body)?;
        let text = reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| BackendError::Protocol("reply has no choices[0].message.content".into()))?
            .to_string();
        let tokens = |field: &str| reply.pointer(&format!("/usage/{field}")).and_then(Value::as_u64).unwrap_or(0);
        Ok(Completion { text, prompt_tokens: tokens("prompt_tokens"), completion_tokens: tokens("completion_tokens") })
    }
}
