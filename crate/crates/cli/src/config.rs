//! Service configuration from an optional JSON file plus environment overrides.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use triage_core::conversation::EngineConfig;
use triage_core::retrieval::{ApplicabilityFilter, RetrievalConfig, DEFAULT_TOP_N};

pub const ENV_LISTEN_ADDR: &str = "TRIAGE_LISTEN_ADDR";
pub const ENV_LIBRARY_DIR: &str = "TRIAGE_LIBRARY_DIR";
pub const DEFAULT_LIBRARY_DIR: &str = "fixtures/flowcharts";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {}: {detail}", path.display())]
    Parse { path: PathBuf, detail: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreMode {
    Memory,
    FileSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen_addr: String,
    pub library_dir: PathBuf,
    /// Provider settings file; the provider is also used when its env vars are set.
    pub provider_file: Option<PathBuf>,
    pub applicability_filter: bool,
    pub top_n: usize,
    pub stall_limit: u32,
    pub redirect_limit: u32,
    pub store: StoreMode,
    /// Where `file_snapshot` mode writes sessions.
    pub snapshot_dir: Option<PathBuf>,
    pub idle_expiry_secs: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        let engine = EngineConfig::default();
        ServiceConfig {
            listen_addr: "127.0.0.1:8080".into(),
            library_dir: DEFAULT_LIBRARY_DIR.into(),
            provider_file: None,
            applicability_filter: true,
            top_n: DEFAULT_TOP_N,
            stall_limit: engine.stall_limit,
            redirect_limit: engine.redirect_limit,
            store: StoreMode::Memory,
            snapshot_dir: None,
            idle_expiry_secs: 30 * 60,
        }
    }
}

impl ServiceConfig {
    pub fn load(file: Option<&Path>) -> Result<Self, ConfigError> {
        Self::load_with(file, |k| std::env::var(k).ok())
    }

    pub fn load_with(file: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut cfg = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
                serde_json::from_str(&text).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), detail: e.to_string() })?
            }
            None => ServiceConfig::default(),
        };
        if let Some(v) = env(ENV_LISTEN_ADDR) {
            cfg.listen_addr = v;
        }
        if let Some(v) = env(ENV_LIBRARY_DIR) {
            cfg.library_dir = v.into();
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.stall_limit < 1 {
            return Err(ConfigError::Invalid("stall_limit must be at least 1".into()));
        }
        if self.redirect_limit < 1 {
            return Err(ConfigError::Invalid("redirect_limit must be at least 1".into()));
        }
        if self.top_n < 1 {
            return Err(ConfigError::Invalid("top_n must be at least 1".into()));
        }
        if self.store == StoreMode::FileSnapshot && self.snapshot_dir.is_none() {
            return Err(ConfigError::Invalid("file_snapshot store needs snapshot_dir".into()));
        }
        Ok(())
    }

    pub fn engine_config(&self) -> EngineConfig {
        let filter = if self.applicability_filter { ApplicabilityFilter::On } else { ApplicabilityFilter::Off };
        EngineConfig {
            stall_limit: self.stall_limit,
            redirect_limit: self.redirect_limit,
            retrieval: RetrievalConfig { top_n: self.top_n, filter },
        }
    }

    pub fn idle_expiry(&self) -> Duration {
        Duration::from_secs(self.idle_expiry_secs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_overrides_and_limits() {
        let cfg = ServiceConfig::load_with(None, |k| (k == ENV_LISTEN_ADDR).then(|| "0.0.0.0:9000".to_string())).unwrap();
        assert_eq!(cfg.listen_addr, "0.0.0.0:9000");
        assert_eq!(cfg.idle_expiry(), Duration::from_secs(1800));

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("svc.json");
        std::fs::write(&p, r#"{"stall_limit": 0}"#).unwrap();
        assert!(matches!(ServiceConfig::load_with(Some(&p), |_| None), Err(ConfigError::Invalid(_))));
        std::fs::write(&p, r#"{"store": "file_snapshot"}"#).unwrap();
        assert!(matches!(ServiceConfig::load_with(Some(&p), |_| None), Err(ConfigError::Invalid(_))));
        std::fs::write(&p, r#"{"bogus": 1}"#).unwrap();
        assert!(matches!(ServiceConfig::load_with(Some(&p), |_| None), Err(ConfigError::Parse { .. })));
        std::fs::write(&p, r#"{"applicability_filter": false, "redirect_limit": 2}"#).unwrap();
        let cfg = ServiceConfig::load_with(Some(&p), |_| None).unwrap();
        assert_eq!(cfg.engine_config().retrieval.filter, ApplicabilityFilter::Off);
        assert_eq!(cfg.engine_config().redirect_limit, 2);
    }
}
