//! Run configuration, read from TOML. The API key never lives here; it comes
//! from the `MICROFORGE_API_KEY` environment variable.
//!
//! ```toml
//! mode = "replay"
//! fixtures = "fixtures.json"
//! seed = 42
//!
//! [provider]
//! base_url = "https://api.openai.com/v1"
//! model_id = "gpt-4o"
//!
//! [chunking]
//! chunk_words = 3000
//! overlap_words = 200
//!
//! [counts]
//! flashcards = 10
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{GatewayConfig, RetryPolicy, DEFAULT_BASE_URL, DEFAULT_MAX_TOKENS, DEFAULT_MODEL};
use crate::generate::{ElementCounts, GENERATION_TEMPERATURE};
use crate::refine::{DEFAULT_CHUNK_WORDS, DEFAULT_OVERLAP_WORDS, MIN_CHUNK_WORDS, REFINE_TEMPERATURE};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Live,
    Record,
    Replay,
    /// Deterministic refinement; generation only runs when fixtures are set.
    #[default]
    Rules,
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunMode::Live => "live",
            RunMode::Record => "record",
            RunMode::Replay => "replay",
            RunMode::Rules => "rules",
        })
    }
}

impl FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(RunMode::Live),
            "record" => Ok(RunMode::Record),
            "replay" => Ok(RunMode::Replay),
            "rules" => Ok(RunMode::Rules),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub base_url: String,
    pub model_id: String,
    pub temperature_refine: f64,
    pub temperature_generate: f64,
    pub max_tokens: u32,
    pub requests_per_minute: u32,
    pub timeout_secs: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            base_url: DEFAULT_BASE_URL.into(),
            model_id: DEFAULT_MODEL.into(),
            temperature_refine: REFINE_TEMPERATURE,
            temperature_generate: GENERATION_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            requests_per_minute: 60,
            timeout_secs: 120,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkingConfig {
    pub chunk_words: usize,
    pub overlap_words: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        ChunkingConfig {
            chunk_words: DEFAULT_CHUNK_WORDS,
            overlap_words: DEFAULT_OVERLAP_WORDS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountsConfig {
    pub flashcards: usize,
    pub quizzes: usize,
    pub mini_lessons: usize,
    pub scenarios: usize,
}

impl Default for CountsConfig {
    fn default() -> Self {
        let d = ElementCounts::default();
        CountsConfig {
            flashcards: d.flashcards,
            quizzes: d.quizzes,
            mini_lessons: d.mini_lessons,
            scenarios: d.scenarios,
        }
    }
}

impl From<&CountsConfig> for ElementCounts {
    fn from(c: &CountsConfig) -> Self {
        ElementCounts {
            flashcards: c.flashcards,
            quizzes: c.quizzes,
            mini_lessons: c.mini_lessons,
            scenarios: c.scenarios,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadabilityConfig {
    pub report_means: bool,
}

impl Default for ReadabilityConfig {
    fn default() -> Self {
        ReadabilityConfig { report_means: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub mode: RunMode,
    /// Fixture store; relative paths resolve against the config file.
    pub fixtures: Option<PathBuf>,
    /// Seeds item ids and pins the clock, making output bytes reproducible.
    pub seed: Option<u64>,
    pub provider: ProviderConfig,
    pub chunking: ChunkingConfig,
    pub counts: CountsConfig,
    pub readability: ReadabilityConfig,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::from_toml_str(&text)?;
        if let (Some(fixtures), Some(dir)) = (&config.fixtures, path.parent()) {
            if fixtures.is_relative() {
                config.fixtures = Some(dir.join(fixtures));
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        let p = &self.provider;
        for (name, t) in [
            ("temperature_refine", p.temperature_refine),
            ("temperature_generate", p.temperature_generate),
        ] {
            if !(0.0..=2.0).contains(&t) {
                return invalid(format!("provider.{name} must lie in [0, 2], got {t}"));
            }
        }
        for (name, v) in [
            ("provider.max_tokens", u64::from(p.max_tokens)),
            ("provider.requests_per_minute", u64::from(p.requests_per_minute)),
            ("provider.timeout_secs", p.timeout_secs),
            ("counts.flashcards", self.counts.flashcards as u64),
            ("counts.quizzes", self.counts.quizzes as u64),
            ("counts.mini_lessons", self.counts.mini_lessons as u64),
            ("counts.scenarios", self.counts.scenarios as u64),
        ] {
            if v == 0 {
                return invalid(format!("{name} must be positive"));
            }
        }
        if p.model_id.trim().is_empty() {
            return invalid("provider.model_id must not be empty".into());
        }
        let c = &self.chunking;
        if c.chunk_words < MIN_CHUNK_WORDS || c.overlap_words >= c.chunk_words {
            return invalid(format!(
                "chunking needs chunk_words >= {MIN_CHUNK_WORDS} and overlap_words < chunk_words, got {} / {}",
                c.chunk_words, c.overlap_words
            ));
        }
        if matches!(self.mode, RunMode::Replay | RunMode::Record) && self.fixtures.is_none() {
            return invalid(format!("mode {} requires a fixtures path", self.mode));
        }
        Ok(())
    }

    /// Gateway settings without credentials.
    pub fn gateway_config(&self) -> GatewayConfig {
        GatewayConfig {
            base_url: self.provider.base_url.clone(),
            model_id: self.provider.model_id.clone(),
            api_key: None,
            timeout: Duration::from_secs(self.provider.timeout_secs),
            requests_per_minute: self.provider.requests_per_minute,
            retry: RetryPolicy::default(),
        }
    }
}
