use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use shopsim_core::shopper::ScriptedConfig;

#[derive(Debug, thiserror::Error)]
#[error("gateway config: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub host: String,
    pub port: u16,
    pub catalog: Option<PathBuf>,
    pub tasks: Option<PathBuf>,
    pub trace_dir: PathBuf,
    /// Bearer token required on every route but `/health`.
    pub token: Option<String>,
    pub max_sessions: usize,
    pub idle_timeout_secs: u64,
    /// Used when a create request names no shopper.
    pub shopper: ScriptedConfig,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            catalog: None,
            tasks: None,
            trace_dir: PathBuf::from("traces"),
            token: None,
            max_sessions: 256,
            idle_timeout_secs: 30 * 60,
            shopper: ScriptedConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError(format!("{key}={v:?} is not valid")))
}

impl GatewayConfig {
    /// TOML file (if any), then `SHOPSIM_*` environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => {
                let raw = std::fs::read_to_string(p).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?;
                toml::from_str(&raw).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?
            }
            None => Self::default(),
        };
        config.apply_env(|k| std::env::var(k).ok())?;
        Ok(config)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = get("SHOPSIM_HOST") {
            self.host = v;
        }
        if let Some(v) = get("SHOPSIM_PORT") {
            self.port = parse("SHOPSIM_PORT", &v)?;
        }
        if let Some(v) = get("SHOPSIM_CATALOG") {
            self.catalog = Some(v.into());
        }
        if let Some(v) = get("SHOPSIM_TASKS") {
            self.tasks = Some(v.into());
        }
        if let Some(v) = get("SHOPSIM_TRACE_DIR") {
            self.trace_dir = v.into();
        }
        if let Some(v) = get("SHOPSIM_TOKEN") {
            self.token = Some(v).filter(|t| !t.is_empty());
        }
        if let Some(v) = get("SHOPSIM_MAX_SESSIONS") {
            self.max_sessions = parse("SHOPSIM_MAX_SESSIONS", &v)?;
        }
        if let Some(v) = get("SHOPSIM_IDLE_TIMEOUT_SECS") {
            self.idle_timeout_secs = parse("SHOPSIM_IDLE_TIMEOUT_SECS", &v)?;
        }
        Ok(())
    }

    pub fn idle_timeout(&self) -> Duration {
        Duration::from_secs(self.idle_timeout_secs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_env() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gateway.toml");
        std::fs::write(&path, "port = 9000\nmax_sessions = 4\n[shopper]\nmode = \"leaky\"\n").unwrap();
        let mut c: GatewayConfig = toml::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!((c.port, c.max_sessions, c.idle_timeout_secs), (9000, 4, 1800));
        c.apply_env(|k| match k {
            "SHOPSIM_PORT" => Some("9100".into()),
            "SHOPSIM_TOKEN" => Some("secret".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!((c.port, c.token.as_deref()), (9100, Some("secret")));
        assert!(c.apply_env(|k| (k == "SHOPSIM_MAX_SESSIONS").then(|| "many".into())).is_err());
    }
}
