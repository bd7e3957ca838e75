use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bridge::{MockConfig, RemoteConfig, SafetyBounds};
use crate::sim::{Robot, SimConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Remote,
}

/// Everything a gateway needs. Loaded from TOML with the same field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub backend: BackendKind,
    pub remote: Option<RemoteConfig>,
    pub robots: Vec<Robot>,
    /// Overrides `sim.tick_hz`.
    pub tick_hz: u32,
    pub http_port: u16,
    pub trace_path: Option<PathBuf>,
    pub safety: SafetyBounds,
    pub sim: SimConfig,
    pub mock: MockConfig,
    /// Longest accepted drive command, s.
    pub max_drive_seconds: f64,
    /// Directory served at `/` by `serve`.
    pub console_dir: Option<PathBuf>,
    /// Expectations used by the report endpoint.
    pub report_fixture: Option<PathBuf>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            backend: BackendKind::Mock,
            remote: None,
            robots: vec![Robot::Arm, Robot::Base],
            tick_hz: 100,
            http_port: 8080,
            trace_path: None,
            safety: SafetyBounds::default(),
            sim: SimConfig::default(),
            mock: MockConfig::default(),
            max_drive_seconds: 600.0,
            console_dir: None,
            report_fixture: None,
        }
    }
}

impl GatewayConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: GatewayConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match (self.backend, &self.remote) {
            (BackendKind::Remote, None) => {
                return Err(ConfigError::Invalid(
                    "backend = \"remote\" needs [remote] base_url and model".into(),
                ))
            }
            (BackendKind::Mock, Some(_)) => {
                return Err(ConfigError::Invalid(
                    "[remote] settings given but backend is \"mock\"".into(),
                ))
            }
            (BackendKind::Remote, Some(r)) if r.base_url.is_empty() || r.model.is_empty() => {
                return Err(ConfigError::Invalid(
                    "remote base_url and model must be non-empty".into(),
                ))
            }
            _ => {}
        }
        if self.robots.is_empty() {
            return Err(ConfigError::Invalid(
                "robots must name at least one robot".into(),
            ));
        }
        self.sim_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let s = &self.safety;
        for (name, v) in [
            ("safety.max_joint_delta", s.max_joint_delta),
            ("safety.max_translation", s.max_translation),
            ("safety.max_speed", s.max_speed),
            ("safety.max_duration", s.max_duration),
            ("max_drive_seconds", self.max_drive_seconds),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ConfigError::Invalid(format!(
                    "{name} must be a non-negative number"
                )));
            }
        }
        Ok(())
    }

    /// The simulator settings with the top-level tick rate applied.
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            tick_hz: self.tick_hz,
            ..self.sim.clone()
        }
    }

    pub fn has_robot(&self, robot: Robot) -> bool {
        self.robots.contains(&robot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn remote_requires_remote_section() {
        let err = GatewayConfig::from_toml("backend = \"remote\"").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)));
        let err =
            GatewayConfig::from_toml("backend = \"remote\"\n[remote]\nmodel = \"m\"").unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
        let ok = GatewayConfig::from_toml(
            "backend = \"remote\"\n[remote]\nbase_url = \"http://x\"\nmodel = \"m\"",
        )
        .unwrap();
        assert_eq!(ok.remote.unwrap().timeout_secs, 30.0);
    }

    #[test]
    fn tick_hz_overrides_sim() {
        let c = GatewayConfig::from_toml("tick_hz = 50\nrobots = [\"base\"]\n[sim]\ntick_hz = 100")
            .unwrap();
        assert_eq!(c.sim_config().tick_hz, 50);
        assert!(!c.has_robot(Robot::Arm));
        assert!(GatewayConfig::from_toml("tick_hz = 0").is_err());
        assert!(GatewayConfig::from_toml("unknown_field = 1").is_err());
    }
}
