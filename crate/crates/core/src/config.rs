//! Hub configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affect::{EmojiTable, EmojiTableError, MappingParams};
use crate::sim::WorldConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Malformed(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    EmojiTable(#[from] EmojiTableError),
}

impl ConfigError {
    pub fn code(&self) -> &'static str {
        match self {
            ConfigError::Io { .. } => "config_io",
            ConfigError::Malformed(_) => "malformed_config",
            ConfigError::Invalid(_) => "invalid_config",
            ConfigError::EmojiTable(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HubConfig {
    pub tcp_port: u16,
    pub ws_port: u16,
    pub state_broadcast_hz: f64,
    pub world: WorldConfig,
    pub mapping: MappingParams,
    /// Emoji centroid table; the built-in table when absent.
    pub emoji_table_path: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
    /// Seeds the session id so that fast-mode sessions are reproducible.
    pub session_seed: Option<u64>,
}

impl Default for HubConfig {
    fn default() -> Self {
        Self {
            tcp_port: 7000,
            ws_port: 7001,
            state_broadcast_hz: 30.0,
            world: WorldConfig::default(),
            mapping: MappingParams::default(),
            emoji_table_path: None,
            log_path: None,
            session_seed: None,
        }
    }
}

impl HubConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self, ConfigError> {
        let config: HubConfig = serde_json::from_slice(bytes).map_err(|e| ConfigError::Malformed(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads and validates a config file. Relative table and log paths resolve
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let bytes = std::fs::read(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut config = Self::from_json(&bytes)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.emoji_table_path, &mut config.log_path]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.tcp_port == self.ws_port && self.tcp_port != 0 {
            return Err(ConfigError::Invalid("tcp_port and ws_port must differ".into()));
        }
        self.world.validate().map_err(ConfigError::Invalid)?;
        self.mapping.validate().map_err(ConfigError::Invalid)?;
        let tick_hz = 1.0 / self.world.dt;
        if !(self.state_broadcast_hz >= 1.0 && self.state_broadcast_hz <= tick_hz + 1e-9) {
            return Err(ConfigError::Invalid(format!(
                "state_broadcast_hz must be in [1, {tick_hz}]"
            )));
        }
        Ok(())
    }

    pub fn load_emoji_table(&self) -> Result<EmojiTable, ConfigError> {
        match &self.emoji_table_path {
            None => Ok(EmojiTable::default()),
            Some(path) => {
                let bytes = std::fs::read(path).map_err(|source| ConfigError::Io {
                    path: path.clone(),
                    source,
                })?;
                Ok(EmojiTable::from_json(&bytes)?)
            }
        }
    }

    /// Number of ticks between state broadcasts.
    pub fn broadcast_interval(&self) -> u64 {
        broadcast_interval(self.world.dt, self.state_broadcast_hz)
    }
}

pub(crate) fn broadcast_interval(dt: f64, hz: f64) -> u64 {
    ((1.0 / (dt * hz)).round() as u64).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let c = HubConfig::from_json(b"{}").unwrap();
        assert_eq!(c, HubConfig::default());
        assert_eq!(c.broadcast_interval(), 2);
    }

    #[test]
    fn partial_overrides() {
        let c =
            HubConfig::from_json(br#"{"tcp_port":9000,"world":{"width":3000},"mapping":{"dominance_weight":0.25}}"#)
                .unwrap();
        assert_eq!(c.tcp_port, 9000);
        assert_eq!(c.world.width, 3000.0);
        assert_eq!(c.world.height, 1300.0);
        assert_eq!(c.mapping.dominance_weight, 0.25);
        assert_eq!(c.mapping.impulse_gain, 800.0);
    }

    #[test]
    fn rejects_bad_values() {
        let err = |s: &str| HubConfig::from_json(s.as_bytes()).unwrap_err();
        assert!(matches!(
            err(r#"{"tcp_port":7000,"ws_port":7000}"#),
            ConfigError::Invalid(_)
        ));
        assert!(matches!(err(r#"{"state_broadcast_hz":0.5}"#), ConfigError::Invalid(_)));
        assert!(matches!(err(r#"{"state_broadcast_hz":61}"#), ConfigError::Invalid(_)));
        assert!(matches!(err(r#"{"world":{"dt":-1}}"#), ConfigError::Invalid(_)));
        assert!(matches!(
            err(r#"{"mapping":{"impulse_cap":0}}"#),
            ConfigError::Invalid(_)
        ));
        assert!(matches!(err(r#"{"bogus":1}"#), ConfigError::Malformed(_)));
        assert!(matches!(err("nope"), ConfigError::Malformed(_)));
        assert_eq!(err("nope").code(), "malformed_config");
    }

    #[test]
    fn broadcast_at_tick_rate() {
        let c = HubConfig::from_json(br#"{"state_broadcast_hz":60}"#).unwrap();
        assert_eq!(c.broadcast_interval(), 1);
    }
}
