//! Service configuration: a TOML file, then environment overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::ProviderConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for {var}: {reason}")]
    Env { var: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub listen: String,
    /// Sessions are kept in memory only when unset.
    pub store_dir: Option<PathBuf>,
    /// When set, every request must send `Authorization: Bearer <token>`.
    pub bearer_token: Option<String>,
    pub provider: ProviderConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: "127.0.0.1:8080".into(),
            store_dir: None,
            bearer_token: None,
            provider: ProviderConfig::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.to_owned(), source })?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    /// Overrides from `TEXTANCHOR_*` variables, looked up through `get`.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = get("TEXTANCHOR_LISTEN") {
            self.listen = v;
        }
        if let Some(v) = get("TEXTANCHOR_STORE_DIR") {
            self.store_dir = Some(v.into());
        }
        if let Some(v) = get("TEXTANCHOR_TOKEN") {
            self.bearer_token = Some(v).filter(|t| !t.is_empty());
        }
        if let Some(v) = get("TEXTANCHOR_ENDPOINT") {
            self.provider.endpoint = v;
        }
        if let Some(v) = get("TEXTANCHOR_MODEL") {
            self.provider.model = v;
        }
        if let Some(v) = get("TEXTANCHOR_TIMEOUT_SECS") {
            let secs: f64 = v.parse().map_err(|e| ConfigError::Env { var: "TEXTANCHOR_TIMEOUT_SECS", reason: format!("{e}") })?;
            if !(secs.is_finite() && secs >= 0.0) {
                return Err(ConfigError::Env { var: "TEXTANCHOR_TIMEOUT_SECS", reason: "must be non-negative".into() });
            }
            self.provider.timeout = std::time::Duration::from_secs_f64(secs);
        }
        if let Some(v) = get("TEXTANCHOR_MAX_RETRIES") {
            self.provider.max_retries =
                v.parse().map_err(|e| ConfigError::Env { var: "TEXTANCHOR_MAX_RETRIES", reason: format!("{e}") })?;
        }
        if let Some(v) = get("TEXTANCHOR_MOCK_SCRIPT") {
            self.provider.mock_mode = true;
            self.provider.mock_script = Some(v.into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn toml_then_env() {
        let mut cfg = ServiceConfig::from_toml(
            r#"
            listen = "0.0.0.0:9000"
            [provider]
            model = "gpt-4o-mini"
            timeout = 5
            "#,
        )
        .unwrap();
        assert_eq!(cfg.provider.model, "gpt-4o-mini");
        assert_eq!(cfg.provider.timeout.as_secs(), 5);
        assert_eq!(cfg.provider.max_retries, 2);
        let env: HashMap<&str, &str> = [("TEXTANCHOR_LISTEN", "127.0.0.1:1"), ("TEXTANCHOR_MOCK_SCRIPT", "m.json")].into();
        cfg.apply_env(|k| env.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(cfg.listen, "127.0.0.1:1");
        assert!(cfg.provider.mock_mode);
    }

    #[test]
    fn defaults() {
        let cfg = ServiceConfig::from_toml("").unwrap();
        assert_eq!(cfg, ServiceConfig::default());
        assert_eq!(cfg.provider.model, "gpt-4o");
        let mut cfg = ServiceConfig::default();
        assert!(cfg.apply_env(|k| (k == "TEXTANCHOR_MAX_RETRIES").then(|| "many".to_string())).is_err());
    }
}
