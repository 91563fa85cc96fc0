use std::path::{Path, PathBuf};

use agentcoach_core::simcore::SimPolicy;
use agentcoach_core::vindex::SearchMode;
use serde::{Deserialize, Serialize};

pub const ENV_PREFIX: &str = "AGENTCOACH_";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid value for {key}: {value}")]
    Env { key: String, value: String },
    #[error("{0}")]
    Invalid(String),
}

/// Artifact locations. Relative paths resolve against `data_dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    pub ingest_errors: PathBuf,
    pub encoder: PathBuf,
    pub scripts: PathBuf,
    pub cluster_report: PathBuf,
    pub index: PathBuf,
    pub customer_lm: PathBuf,
    pub agent_lm: PathBuf,
    pub fluency: PathBuf,
    pub ranker: PathBuf,
    pub rules: PathBuf,
    pub log_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: "corpus.jsonl".into(),
            ingest_errors: "ingest_errors.jsonl".into(),
            encoder: "encoder.bin".into(),
            scripts: "scripts.jsonl".into(),
            cluster_report: "clusters.json".into(),
            index: "index.bin".into(),
            customer_lm: "customer_lm.json".into(),
            agent_lm: "agent_lm.json".into(),
            fluency: "fluency.json".into(),
            ranker: "ranker.json".into(),
            rules: "rules.jsonl".into(),
            log_dir: "sessions".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Empty means the built-in n-gram generator only.
    pub endpoint: String,
    pub timeout_ms: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            endpoint: String::new(),
            timeout_ms: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub data_dir: PathBuf,
    pub paths: Paths,
    pub policy: SimPolicy,
    pub search_mode: SearchMode,
    pub generator: GeneratorConfig,
    pub seed: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1:8080".into(),
            data_dir: "data".into(),
            paths: Paths::default(),
            policy: SimPolicy::default(),
            search_mode: SearchMode::Approx,
            generator: GeneratorConfig::default(),
            seed: 42,
        }
    }
}

impl ServiceConfig {
    /// Reads `path` if given, then applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                Self::from_toml(&text)?
            }
            None => ServiceConfig::default(),
        };
        cfg.apply_env(std::env::vars())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Recognised keys: `BIND`, `DATA_DIR`, `LOG_DIR`, `SEED`, `SEARCH_MODE`,
    /// `GENERATOR_ENDPOINT`, `GENERATOR_TIMEOUT_MS`, `ADVANCE_THRESHOLD`,
    /// `MAX_ROUNDS`, each with the `AGENTCOACH_` prefix.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
            value.parse().map_err(|_| ConfigError::Env {
                key: key.to_string(),
                value: value.to_string(),
            })
        }
        for (key, value) in vars {
            let Some(name) = key.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            match name {
                "BIND" => self.bind = value,
                "DATA_DIR" => self.data_dir = value.into(),
                "LOG_DIR" => self.paths.log_dir = value.into(),
                "SEED" => self.seed = parse(&key, &value)?,
                "SEARCH_MODE" => {
                    self.search_mode = match value.as_str() {
                        "exact" => SearchMode::Exact,
                        "approx" => SearchMode::Approx,
                        _ => return Err(ConfigError::Env { key, value }),
                    }
                }
                "GENERATOR_ENDPOINT" => self.generator.endpoint = value,
                "GENERATOR_TIMEOUT_MS" => self.generator.timeout_ms = parse(&key, &value)?,
                "ADVANCE_THRESHOLD" => self.policy.advance_threshold = parse(&key, &value)?,
                "MAX_ROUNDS" => self.policy.max_rounds = parse(&key, &value)?,
                _ => {}
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.generator.timeout_ms == 0 {
            return Err(ConfigError::Invalid("generator.timeout_ms must be > 0".into()));
        }
        self.policy
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Policy for new sessions; its seed is the service seed.
    pub fn session_policy(&self) -> SimPolicy {
        SimPolicy {
            seed: self.seed,
            ..self.policy
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.data_dir.join(p)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_env_layering() {
        let mut c = ServiceConfig::from_toml(
            "bind = \"0.0.0.0:9000\"\nseed = 3\n[policy]\nmax_rounds = 40\n[paths]\nlog_dir = \"/tmp/x\"\n",
        )
        .unwrap();
        assert_eq!(c.bind, "0.0.0.0:9000");
        assert_eq!(c.policy.max_rounds, 40);
        assert_eq!(c.policy.advance_threshold, 0.5);
        c.apply_env(vec![
            ("AGENTCOACH_SEED".to_string(), "9".to_string()),
            ("AGENTCOACH_SEARCH_MODE".to_string(), "exact".to_string()),
            ("OTHER_SEED".to_string(), "1".to_string()),
        ])
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.search_mode, SearchMode::Exact);
        assert_eq!(c.resolve(&c.paths.log_dir), PathBuf::from("/tmp/x"));
        assert_eq!(c.resolve(&c.paths.corpus), PathBuf::from("data/corpus.jsonl"));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ServiceConfig::from_toml("nonsense = 1").is_err());
        let mut c = ServiceConfig::default();
        assert!(c
            .apply_env(vec![("AGENTCOACH_SEED".into(), "x".into())])
            .is_err());
        c.generator.timeout_ms = 0;
        assert!(c.validate().is_err());
    }
}
