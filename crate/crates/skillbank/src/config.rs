//! Layered configuration: flags > config file > environment > defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use skillbank_core::evolution::ConsolidatorMode;
use skillbank_core::prototype::Ratio;
use skillbank_core::simulation::Thresholds;

use crate::io::{read_text, IoError};
use crate::remote::{ENV_API_KEY, ENV_MODEL, ENV_URL};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendMode {
    #[default]
    Scripted,
    Remote,
}

/// The resolved configuration. Snapshotted into every run manifest; the
/// API key is never serialized.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub backend: BackendMode,
    pub url: Option<String>,
    pub model: Option<String>,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub script: Option<PathBuf>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub parallelism: usize,
    pub strict: bool,
    pub temperature: f64,
    pub min_support: u64,
    pub effectiveness_threshold: String,
    pub snippets_per_cluster: usize,
    pub seed: u64,
    pub max_turns: u32,
    pub success_threshold: i64,
    pub failure_threshold: i64,
    pub grade_a: i64,
    pub grade_b: i64,
    pub top_k: usize,
    pub n_verify: usize,
    pub max_attempts: u32,
    pub max_evidence: usize,
    pub consolidator: ConsolidatorMode,
}

impl Default for Config {
    fn default() -> Self {
        let t = Thresholds::default();
        Config {
            backend: BackendMode::Scripted,
            url: None,
            model: None,
            api_key: None,
            script: None,
            timeout_secs: 120,
            max_retries: 3,
            parallelism: 4,
            strict: false,
            temperature: 0.0,
            min_support: 5,
            effectiveness_threshold: "0.6".into(),
            snippets_per_cluster: 3,
            seed: 0,
            max_turns: 20,
            success_threshold: t.success,
            failure_threshold: t.failure,
            grade_a: t.a_lo,
            grade_b: t.b_lo,
            top_k: 5,
            n_verify: 15,
            max_attempts: 3,
            max_evidence: 2,
            consolidator: ConsolidatorMode::Deterministic,
        }
    }
}

/// One configuration source; unset fields defer to lower layers.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub backend: Option<BackendMode>,
    pub url: Option<String>,
    pub model: Option<String>,
    pub api_key: Option<String>,
    pub script: Option<PathBuf>,
    pub timeout_secs: Option<u64>,
    pub max_retries: Option<u32>,
    pub parallelism: Option<usize>,
    pub strict: Option<bool>,
    pub temperature: Option<f64>,
    pub min_support: Option<u64>,
    pub effectiveness_threshold: Option<String>,
    pub snippets_per_cluster: Option<usize>,
    pub seed: Option<u64>,
    pub max_turns: Option<u32>,
    pub success_threshold: Option<i64>,
    pub failure_threshold: Option<i64>,
    pub grade_a: Option<i64>,
    pub grade_b: Option<i64>,
    pub top_k: Option<usize>,
    pub n_verify: Option<usize>,
    pub max_attempts: Option<u32>,
    pub max_evidence: Option<usize>,
    pub consolidator: Option<ConsolidatorMode>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl Layer {
    pub fn from_env(get: impl Fn(&str) -> Option<String>) -> Self {
        let nonempty = |k: &str| get(k).filter(|v| !v.trim().is_empty());
        let url = nonempty(ENV_URL);
        Layer {
            backend: url.as_ref().map(|_| BackendMode::Remote),
            url,
            model: nonempty(ENV_MODEL),
            api_key: nonempty(ENV_API_KEY),
            ..Layer::default()
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = read_text(path)?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

macro_rules! merge {
    ($cfg:ident, $layer:ident; $($field:ident),*) => {
        $( if let Some(v) = $layer.$field { $cfg.$field = v; } )*
    };
}

impl Config {
    fn apply(&mut self, layer: Layer) {
        if layer.url.is_some() {
            self.url = layer.url;
        }
        if layer.model.is_some() {
            self.model = layer.model;
        }
        if layer.api_key.is_some() {
            self.api_key = layer.api_key;
        }
        if layer.script.is_some() {
            self.script = layer.script;
        }
        merge!(self, layer; backend, timeout_secs, max_retries, parallelism, strict, temperature,
            min_support, effectiveness_threshold, snippets_per_cluster, seed, max_turns,
            success_threshold, failure_threshold, grade_a, grade_b, top_k, n_verify,
            max_attempts, max_evidence, consolidator);
    }

    /// Layers from lowest to highest precedence are applied over defaults.
    pub fn resolve(env: Layer, file: Option<Layer>, flags: Layer) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        cfg.apply(env);
        if let Some(f) = file {
            cfg.apply(f);
        }
        cfg.apply(flags);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            success: self.success_threshold,
            failure: self.failure_threshold,
            a_lo: self.grade_a,
            b_lo: self.grade_b,
        }
    }

    pub fn effectiveness_ratio(&self) -> Result<Ratio, ConfigError> {
        Ratio::parse_decimal(&self.effectiveness_threshold)
            .filter(|r| r.num > 0 && r.num <= r.den)
            .ok_or_else(|| {
                ConfigError::Invalid(format!(
                    "effectiveness_threshold {:?} must be a decimal in (0, 1]",
                    self.effectiveness_threshold
                ))
            })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1");
        }
        if self.min_support == 0 {
            return bad("min_support must be at least 1");
        }
        self.effectiveness_ratio()?;
        self.thresholds()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.max_turns == 0 || self.top_k == 0 || self.n_verify == 0 || self.max_attempts == 0 {
            return bad("max_turns, top_k, n_verify and max_attempts must be at least 1");
        }
        if !(self.temperature >= 0.0) {
            return bad("temperature must be non-negative");
        }
        if self.backend == BackendMode::Remote && self.url.is_none() {
            return bad("remote backend needs a url (BACKEND_URL, config `url` or --url)");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let env = Layer::from_env(|k| match k {
            "BACKEND_URL" => Some("http://env".into()),
            "BACKEND_MODEL" => Some("env-model".into()),
            _ => None,
        });
        let file: Layer = toml::from_str("model = \"file-model\"\nparallelism = 2\nn_verify = 7\n").unwrap();
        let flags = Layer {
            parallelism: Some(8),
            ..Layer::default()
        };
        let cfg = Config::resolve(env, Some(file), flags).unwrap();
        assert_eq!(cfg.url.as_deref(), Some("http://env"));
        assert_eq!(cfg.backend, BackendMode::Remote);
        assert_eq!(cfg.model.as_deref(), Some("file-model"));
        assert_eq!(cfg.parallelism, 8);
        assert_eq!(cfg.n_verify, 7);
        assert_eq!(cfg.max_attempts, 3);
    }

    #[test]
    fn rejects_bad_values() {
        let mk = |l: Layer| Config::resolve(Layer::default(), None, l);
        assert!(mk(Layer {
            effectiveness_threshold: Some("1.5".into()),
            ..Layer::default()
        })
        .is_err());
        assert!(mk(Layer {
            parallelism: Some(0),
            ..Layer::default()
        })
        .is_err());
        assert!(mk(Layer {
            failure_threshold: Some(100),
            ..Layer::default()
        })
        .is_err());
        assert!(mk(Layer {
            backend: Some(BackendMode::Remote),
            ..Layer::default()
        })
        .is_err());
        assert!(toml::from_str::<Layer>("bogus = 1").is_err());
    }

    #[test]
    fn key_not_serialized() {
        let cfg = Config {
            api_key: Some("sk-x".into()),
            ..Config::default()
        };
        assert!(!serde_json::to_string(&cfg).unwrap().contains("sk-x"));
    }
}
