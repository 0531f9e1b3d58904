//! Provider settings from a JSON file and `TRIAGE_*` environment variables.

use std::fmt;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::GatewayError;

pub const ENV_BASE_URL: &str = "TRIAGE_PROVIDER_BASE_URL";
pub const ENV_MODEL: &str = "TRIAGE_PROVIDER_MODEL";
pub const ENV_KEY: &str = "TRIAGE_PROVIDER_KEY";
pub const ENV_EMBED_MODEL: &str = "TRIAGE_EMBED_MODEL";

/// An API key. Never printed: `Debug` and `Display` render a placeholder.
#[derive(Clone, PartialEq, Eq, Deserialize)]
#[serde(transparent)]
pub struct SecretKey(String);

impl SecretKey {
    pub fn new(key: impl Into<String>) -> Self {
        SecretKey(key.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(<redacted>)")
    }
}

impl fmt::Display for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<redacted>")
    }
}

impl Serialize for SecretKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("<redacted>")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub base_url: String,
    pub model: String,
    pub embed_model: Option<String>,
    /// Only ever sourced from the environment; a key in the file is rejected.
    #[serde(skip_deserializing)]
    pub api_key: Option<SecretKey>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub temperature: f32,
    /// Requests per second across all callers sharing this provider; `None` is unlimited.
    pub requests_per_second: Option<f64>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o-mini".into(),
            embed_model: None,
            api_key: None,
            timeout_secs: super::default_timeout().as_secs(),
            max_retries: 3,
            temperature: super::AGENT_TEMPERATURE,
            requests_per_second: None,
        }
    }
}

impl ProviderConfig {
    /// Reads an optional config file, then applies environment overrides.
    pub fn load(file: Option<&Path>) -> Result<Self, GatewayError> {
        Self::load_with(file, |k| std::env::var(k).ok())
    }

    pub fn load_with(file: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> Result<Self, GatewayError> {
        let mut cfg = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| GatewayError::Config(format!("reading {}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| GatewayError::Config(format!("parsing {}: {e}", path.display())))?
            }
            None => ProviderConfig::default(),
        };
        if let Some(v) = env(ENV_BASE_URL) {
            cfg.base_url = v;
        }
        if let Some(v) = env(ENV_MODEL) {
            cfg.model = v;
        }
        if let Some(v) = env(ENV_EMBED_MODEL) {
            cfg.embed_model = Some(v);
        }
        cfg.api_key = env(ENV_KEY).filter(|k| !k.is_empty()).map(SecretKey::new);
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), GatewayError> {
        if self.base_url.trim().is_empty() {
            return Err(GatewayError::Config("base_url is empty".into()));
        }
        if self.model.trim().is_empty() {
            return Err(GatewayError::Config("model is empty".into()));
        }
        if self.requests_per_second.is_some_and(|r| r.is_nan() || r <= 0.0) {
            return Err(GatewayError::Config("requests_per_second must be positive".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs.max(1))
    }

    /// True when the environment names a provider to talk to.
    pub fn env_configured() -> bool {
        std::env::var(ENV_BASE_URL).is_ok() || std::env::var(ENV_KEY).is_ok()
    }
}
