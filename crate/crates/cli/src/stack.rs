//! Assembling an engine from either the offline components or a live provider.

use std::path::Path;
use std::sync::Arc;

use triage_core::conversation::{ConversationError, Engine, EngineConfig, LlmComposer, SystemClock};
use triage_core::flowchart::FlowchartLibrary;
use triage_core::gateway::{Embedder, GatewayError, HashEmbedder, HttpEmbedder, HttpProvider, ProviderConfig};
use triage_core::interpretation::LlmClassifier;
use triage_core::retrieval::{build_index, Index, LlmSelector, RetrievalError, Retriever};

#[derive(Debug, thiserror::Error)]
pub enum StackError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Conversation(#[from] ConversationError),
}

/// Reads provider settings when a file is given or the environment names a provider.
pub fn provider_from_env(file: Option<&Path>) -> Result<Option<ProviderConfig>, GatewayError> {
    if file.is_none() && !ProviderConfig::env_configured() {
        return Ok(None);
    }
    ProviderConfig::load(file).map(Some)
}

/// Offline engine, or provider-backed agents sharing one rate-limited client.
///
/// Without an embedding model the provider stack still ranks with the hash embedder.
pub fn build_engine(library: Arc<FlowchartLibrary>, config: EngineConfig, provider: Option<&ProviderConfig>) -> Result<Engine, StackError> {
    let Some(provider) = provider else {
        return Ok(Engine::offline(library, config)?);
    };
    let generator = Arc::new(HttpProvider::new(provider.clone())?);
    let embedder: Box<dyn Embedder> = match provider.embed_model {
        Some(_) => Box::new(HttpEmbedder::new(provider.clone())?),
        None => Box::new(HashEmbedder),
    };
    let index: Index = build_index(&library, embedder.as_ref())?;
    Ok(Engine {
        library,
        retriever: Retriever { index, embedder, selector: Box::new(LlmSelector::new(generator.clone())), config: config.retrieval },
        classifier: Box::new(LlmClassifier::new(generator.clone())),
        composer: Box::new(LlmComposer::new(generator)),
        clock: Box::new(SystemClock),
        config,
    })
}
