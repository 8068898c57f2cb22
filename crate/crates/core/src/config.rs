//! TOML run configuration with one section per subcommand.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const DEFAULT_SEED: u64 = 42;
pub const SEED_ENV: &str = "PROBEKIT_SEED";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("missing config field `{0}`")]
    MissingField(String),
    #[error("{SEED_ENV}={0} is not an unsigned integer")]
    BadSeedEnv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepSection {
    pub dataset: Option<String>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub train_size: Option<usize>,
    pub test_size: Option<usize>,
    pub max_len: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractSection {
    /// Saved model directory. When absent, a random toy model is built from
    /// the `toy_*` fields and saved under the run directory.
    pub model_dir: Option<PathBuf>,
    pub toy_layers: Option<usize>,
    pub toy_hidden_dim: Option<usize>,
    pub toy_vocab_size: Option<usize>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub layers: Option<Vec<usize>>,
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub train_store: Option<PathBuf>,
    pub test_store: Option<PathBuf>,
    pub layers: Option<Vec<usize>>,
    pub poolings: Option<Vec<String>>,
    pub classifiers: Option<Vec<String>>,
    pub trials: Option<usize>,
    pub include_timings: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    pub sweep_report: Option<PathBuf>,
    pub include_timings: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildSection {
    pub model_dir: Option<PathBuf>,
    pub train_store: Option<PathBuf>,
    /// Cut layer; falls back to the best cell of `sweep_report`.
    pub layer: Option<usize>,
    pub pooling: Option<String>,
    pub classifier: Option<String>,
    pub sweep_report: Option<PathBuf>,
    pub trials: Option<usize>,
    pub label_names: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifySection {
    pub pipeline_dir: Option<PathBuf>,
    /// JSON lines with a text field, or plain text with one example per line.
    pub input: Option<PathBuf>,
    pub texts: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalPromptSection {
    pub model_dir: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub template: Option<String>,
    pub max_new_tokens: Option<usize>,
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub pipeline_dir: Option<PathBuf>,
    pub model_dir: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub template: Option<String>,
    pub max_new_tokens: Option<usize>,
    pub warmup: Option<usize>,
    pub iters: Option<usize>,
    pub batch_size: Option<usize>,
    pub device: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub prep: PrepSection,
    pub extract: ExtractSection,
    pub sweep: SweepSection,
    pub report: ReportSection,
    pub build: BuildSection,
    pub classify: ClassifySection,
    pub eval_prompt: EvalPromptSection,
    pub bench: BenchSection,
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_string(), message: e.message().to_string() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Parse { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Unwraps an optional config value or names the missing field.
pub fn require<T: Clone>(value: &Option<T>, field: &str) -> Result<T> {
    value.clone().ok_or_else(|| ConfigError::MissingField(field.to_string()))
}

/// Seed precedence: command line, then config file, then the environment
/// variable, then 42.
pub fn resolve_seed(cli: Option<u64>, config: Option<u64>) -> Result<u64> {
    resolve_seed_with_env(cli, config, std::env::var(SEED_ENV).ok().as_deref())
}

pub fn resolve_seed_with_env(cli: Option<u64>, config: Option<u64>, env: Option<&str>) -> Result<u64> {
    if let Some(s) = cli.or(config) {
        return Ok(s);
    }
    match env {
        Some(v) => v.trim().parse().map_err(|_| ConfigError::BadSeedEnv(v.to_string())),
        None => Ok(DEFAULT_SEED),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed_with_env(Some(1), Some(2), Some("3")).unwrap(), 1);
        assert_eq!(resolve_seed_with_env(None, Some(2), Some("3")).unwrap(), 2);
        assert_eq!(resolve_seed_with_env(None, None, Some("3")).unwrap(), 3);
        assert_eq!(resolve_seed_with_env(None, None, None).unwrap(), 42);
        assert!(matches!(resolve_seed_with_env(None, None, Some("x")), Err(ConfigError::BadSeedEnv(_))));
    }

    #[test]
    fn parse_and_round_trip() {
        let text = r#"
seed = 7
out_dir = "runs/a"

[sweep]
train_store = "s/train"
poolings = ["mean", "attn"]
trials = 3

[build]
layer = 2
label_names = { "0" = "negative", "1" = "positive" }
"#;
        let c = RunConfig::from_toml(text, "t").unwrap();
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.sweep.trials, Some(3));
        assert_eq!(c.sweep.test_store, None);
        assert_eq!(c.build.label_names.as_ref().unwrap()["1"], "positive");
        let back = RunConfig::from_toml(&c.to_toml(), "t2").unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn missing_and_unknown_fields() {
        let c = RunConfig::from_toml("[sweep]\ntest_store = \"x\"\n", "t").unwrap();
        let err = require(&c.sweep.train_store, "sweep.train_store").unwrap_err();
        assert_eq!(err.to_string(), "missing config field `sweep.train_store`");
        let err = RunConfig::from_toml("[sweep]\ntrain_stor = \"x\"\n", "t").unwrap_err();
        assert!(err.to_string().contains("train_stor"), "{err}");
    }
}
