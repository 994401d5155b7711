use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use signalgame_core::gridworld::{Cents, UtilityParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("environment variable {name}: {message}")]
    Env { name: &'static str, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    /// Suite directory or single-file suite; generated from `suite_seed` when absent.
    pub suite_path: Option<PathBuf>,
    pub suite_seed: u64,
    pub practice_seed: u64,
    pub practice_trials: u32,
    /// Append-only session log (one JSON event per line); in memory only when absent.
    pub event_log: Option<PathBuf>,
    /// Mean of the receiver's exponential think time, in seconds.
    pub receiver_delay_mean: f64,
    pub bonus_cap: Cents,
    pub params: UtilityParams,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            suite_path: None,
            suite_seed: 0,
            practice_seed: 1,
            practice_trials: 10,
            event_log: None,
            receiver_delay_mean: 1.5,
            bonus_cap: Cents(525),
            params: UtilityParams::default(),
        }
    }
}

fn env_parse<T: std::str::FromStr>(name: &'static str) -> Result<Option<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    match std::env::var(name) {
        Ok(v) => v
            .parse()
            .map(Some)
            .map_err(|e: T::Err| ConfigError::Env { name, message: e.to_string() }),
        Err(_) => Ok(None),
    }
}

impl ServiceConfig {
    /// Reads the TOML file if given, then applies `SIGNALGAME_*` overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.into(), source })?;
                toml::from_str(&text).map_err(|e| ConfigError::Parse { path: p.into(), message: e.to_string() })?
            }
            None => ServiceConfig::default(),
        };
        if let Some(v) = env_parse("SIGNALGAME_BIND")? {
            config.bind = v;
        }
        if let Some(v) = env_parse::<PathBuf>("SIGNALGAME_SUITE")? {
            config.suite_path = Some(v);
        }
        if let Some(v) = env_parse::<PathBuf>("SIGNALGAME_EVENT_LOG")? {
            config.event_log = Some(v);
        }
        if let Some(v) = env_parse("SIGNALGAME_RECEIVER_DELAY_MEAN")? {
            config.receiver_delay_mean = v;
        }
        if let Some(v) = env_parse("SIGNALGAME_BONUS_CAP_CENTS")? {
            config.bonus_cap = Cents(v);
        }
        config.check()?;
        Ok(config)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if !(self.receiver_delay_mean > 0.0 && self.receiver_delay_mean.is_finite()) {
            return Err(ConfigError::Invalid("receiver_delay_mean must be positive".into()));
        }
        if self.bonus_cap.0 < 0 {
            return Err(ConfigError::Invalid("bonus_cap must not be negative".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_overrides_defaults() {
        let c: ServiceConfig = toml::from_str("receiver_delay_mean = 2.0\nbind = \"0.0.0.0:9000\"\n").unwrap();
        assert_eq!(c.receiver_delay_mean, 2.0);
        assert_eq!(c.bonus_cap, Cents(525));
        assert_eq!(c.bind.port(), 9000);
        assert!(toml::from_str::<ServiceConfig>("nonsense = 1").is_err());
    }

    #[test]
    fn zero_delay_rejected() {
        let c = ServiceConfig { receiver_delay_mean: 0.0, ..ServiceConfig::default() };
        assert!(c.check().is_err());
    }
}
