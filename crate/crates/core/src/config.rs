//! Run configuration files: TOML with one section per module. Unknown keys
//! are rejected and every value is validated before use.

use std::path::Path;

use thiserror::Error;

use crate::engine::RunConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("config cannot be written as TOML: {0}")]
    Serialize(String),
}

/// Parses and validates a config document; missing keys take their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

/// Full TOML rendering of `cfg`, every key spelled out.
pub fn dump_config(cfg: &RunConfig) -> Result<String, ConfigError> {
    toml::to_string_pretty(cfg).map_err(|e| ConfigError::Serialize(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::MigrationMode;
    use crate::policies::PolicyKind;

    #[test]
    fn default_config_round_trips() {
        let cfg = RunConfig::default();
        let text = dump_config(&cfg).unwrap();
        assert_eq!(parse_config(&text).unwrap(), cfg);
    }

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(parse_config("").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_override_defaults() {
        let cfg = parse_config(
            "policy = \"llr\"\nmigration = \"greedy\"\n[cluster]\nn_mps = 2850\n[planner]\nbudget = 10\n",
        )
        .unwrap();
        assert_eq!(cfg.policy, PolicyKind::Llr);
        assert_eq!(cfg.migration, MigrationMode::Greedy);
        assert_eq!(cfg.cluster.n_mps, 2850);
        assert_eq!(cfg.planner.budget, 10);
        assert_eq!(cfg.planner.period_s, 120);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config("[planner]\nbugdet = 3\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
        assert!(err.to_string().contains("bugdet"), "{err}");
    }

    #[test]
    fn wrong_type_is_named() {
        let err = parse_config("[cluster]\nn_mps = \"many\"\n").unwrap_err();
        assert!(err.to_string().contains("n_mps"), "{err}");
    }

    #[test]
    fn invalid_value_is_named() {
        let err = parse_config("[planner]\nperiod_s = 0\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)));
        assert!(err.to_string().contains("period_s"), "{err}");
    }
}
