//! Deterministic generator answering from a table of canned replies.

use std::collections::HashMap;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::{GatewayError, GenerationRequest, TextGenerator};

/// Lowercase hex SHA-256 of the prompt text. Keys the canned table.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

type Fallback = Arc<dyn Fn(&GenerationRequest) -> Result<String, GatewayError> + Send + Sync>;

#[derive(Clone)]
pub struct StubGenerator {
    name: String,
    canned: HashMap<String, String>,
    fallback: Option<Fallback>,
}

impl std::fmt::Debug for StubGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StubGenerator").field("name", &self.name).field("canned", &self.canned.len()).finish()
    }
}

impl StubGenerator {
    pub fn new(name: impl Into<String>) -> Self {
        StubGenerator { name: name.into(), canned: HashMap::new(), fallback: None }
    }

    /// Replies `reply` whenever the prompt is exactly `prompt`.
    pub fn with_reply(mut self, prompt: &str, reply: impl Into<String>) -> Self {
        self.canned.insert(prompt_hash(prompt), reply.into());
        self
    }

    pub fn with_hashed_reply(mut self, hash: impl Into<String>, reply: impl Into<String>) -> Self {
        self.canned.insert(hash.into().to_ascii_lowercase(), reply.into());
        self
    }

    /// Answers prompts absent from the table.
    pub fn with_fallback(mut self, f: impl Fn(&GenerationRequest) -> Result<String, GatewayError> + Send + Sync + 'static) -> Self {
        self.fallback = Some(Arc::new(f));
        self
    }

    /// Loads a `{prompt-hash: reply}` JSON object.
    pub fn from_json(name: impl Into<String>, json: &str) -> Result<Self, GatewayError> {
        let map: HashMap<String, String> =
            serde_json::from_str(json).map_err(|e| GatewayError::Config(format!("canned replies: {e}")))?;
        Ok(map.into_iter().fold(Self::new(name), |s, (k, v)| s.with_hashed_reply(k, v)))
    }
}

impl TextGenerator for StubGenerator {
    fn name(&self) -> &str {
        &self.name
    }

    fn generate(&self, req: &GenerationRequest) -> Result<String, GatewayError> {
        let hash = prompt_hash(&req.prompt);
        match (self.canned.get(&hash), &self.fallback) {
            (Some(reply), _) => Ok(reply.clone()),
            (None, Some(f)) => f(req),
            (None, None) => Err(GatewayError::NoCannedResponse { hash }),
        }
    }
}
