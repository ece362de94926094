use std::time::Duration;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::http::{agent, post_json};
use super::{BackendError, Embedder};

pub const HASH_EMBEDDER_DIMENSION: usize = 64;

/// Feature-hashed token counts. Tokens are lowercase alphanumeric runs; each
/// lands in the bucket given by the first eight bytes of its SHA-256.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dimension: usize,
    id: String,
}

impl HashEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        HashEmbedder { dimension, id: format!("hash-v1-{dimension}") }
    }

    fn bucket(&self, token: &str) -> usize {
        let digest = Sha256::digest(token.as_bytes());
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        (u64::from_le_bytes(head) % self.dimension as u64) as usize
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder::new(HASH_EMBEDDER_DIMENSION)
    }
}

impl Embedder for HashEmbedder {
    fn embedder_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        let mut v = vec![0.0; self.dimension];
        let lowered = text.to_lowercase();
        let mut any = false;
        for token in lowered.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            v[self.bucket(token)] += 1.0;
            any = true;
        }
        if !any && !text.trim().is_empty() {
            // punctuation-only text still gets a non-zero vector
            v[self.bucket(text.trim())] += 1.0;
        }
        Ok(v)
    }
}

/// Embedding endpoint speaking the common `{model, input}` -> `data[0].embedding` shape.
pub struct HttpEmbedder {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    dimension: usize,
    id: String,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    pub fn new(endpoint: String, model: String, api_key: Option<String>, dimension: usize, timeout: Duration) -> Self {
        let id = format!("http:{model}:{dimension}");
        HttpEmbedder { endpoint, model, api_key, dimension, id, agent: agent(timeout) }
    }
}

impl Embedder for HttpEmbedder {
    fn embedder_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        let body = json!({ "model": self.model, "input": text });
        let reply = post_json(&self.agent, &self.endpoint, self.api_key.as_deref(), &body)?;
        let values = reply
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| BackendError::Protocol("reply has no data[0].embedding".into()))?;
        let vector = values
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| BackendError::Protocol("non-numeric embedding value".into())))
            .collect::<Result<Vec<_>, _>>()?;
        if vector.len() != self.dimension {
            return Err(BackendError::Dimension { expected: self.dimension, got: vector.len() });
        }
        Ok(vector)
    }
}
