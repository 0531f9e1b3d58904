//! Text generation and embedding behind provider-neutral traits.
//!
//! Two families of backends implement [`TextGenerator`] and [`Embedder`]:
//! an HTTP client speaking the common chat-completions / embeddings JSON shape
//! ([`http::HttpProvider`]) and deterministic offline stand-ins
//! ([`stub::StubGenerator`], [`embed::HashEmbedder`]). All prompt text lives
//! in [`prompts`].

pub mod config;
pub mod embed;
pub mod http;
pub mod prompts;
pub mod ratelimit;
pub mod retry;
pub mod stub;

use std::time::Duration;

pub use config::{ProviderConfig, SecretKey};
pub use embed::{hash_embed, EmbeddingVector, HashEmbedder, HASH_EMBED_DIM};
pub use http::{HttpEmbedder, HttpProvider, HttpReply, ReqwestTransport, Transport, TransportError};
pub use prompts::{render, PromptTemplate, TemplateError, TemplateId};
pub use retry::{RetryPolicy, Sleeper, ThreadSleeper};
pub use stub::{prompt_hash, StubGenerator};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("provider rejected credentials (HTTP {status})")]
    Auth { status: u16 },
    #[error("provider rate limit persisted after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("provider timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("provider unavailable after {attempts} attempt(s): HTTP {status}")]
    Unavailable { status: u16, attempts: u32 },
    #[error("provider returned HTTP {status}: {detail}")]
    Http { status: u16, detail: String },
    #[error("could not reach provider: {0}")]
    Transport(String),
    #[error("malformed provider response: {0}")]
    MalformedProviderResponse(String),
    #[error("no canned response for prompt {hash}")]
    NoCannedResponse { hash: String },
    #[error("empty input")]
    EmptyInput,
    #[error("provider configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

impl GatewayError {
    /// Failures worth another attempt.
    pub fn is_transient(&self) -> bool {
        matches!(self, GatewayError::RateLimited { .. } | GatewayError::Timeout { .. } | GatewayError::Unavailable { .. } | GatewayError::Transport(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub system: Option<String>,
    pub prompt: String,
    /// Overrides the provider's configured temperature when set.
    pub temperature: Option<f32>,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        GenerationRequest { system: None, prompt: prompt.into(), temperature: None }
    }

    pub fn with_system(mut self, system: impl Into<String>) -> Self {
        self.system = Some(system.into());
        self
    }

    pub fn with_temperature(mut self, t: f32) -> Self {
        self.temperature = Some(t);
        self
    }
}

/// Sampling temperature for agent calls (selection, classification, phrasing).
pub const AGENT_TEMPERATURE: f32 = 0.0;
/// Sampling temperature for synthetic data generation.
pub const GENERATION_TEMPERATURE: f32 = 0.9;

pub trait TextGenerator: Send + Sync {
    /// Label used to tag generated records and reports (usually the model name).
    fn name(&self) -> &str;
    fn generate(&self, req: &GenerationRequest) -> Result<String, GatewayError>;
}

pub trait Embedder: Send + Sync {
    /// Stable identifier recorded in persisted indexes.
    fn id(&self) -> &str;
    fn dimension(&self) -> usize;
    /// One unit-norm vector per input text.
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError>;
}

impl<T: TextGenerator + ?Sized> TextGenerator for std::sync::Arc<T> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn generate(&self, req: &GenerationRequest) -> Result<String, GatewayError> {
        (**self).generate(req)
    }
}

impl<T: Embedder + ?Sized> Embedder for std::sync::Arc<T> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        (**self).embed(texts)
    }
}

pub(crate) fn default_timeout() -> Duration {
    Duration::from_secs(30)
}
