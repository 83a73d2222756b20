//! Optional TOML config file. Flags always win; the config only fills
//! values the command line left unset. API keys never appear here — they
//! come from environment variables only.

use anyhow::{Context, Result};
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub provider: Provider,
    #[serde(default)]
    pub policy: Policy,
    #[serde(default)]
    pub run: Run,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub instructions: Option<PathBuf>,
    pub relations: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub aliases: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub transcript: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provider {
    pub name: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub base_url: Option<String>,
    pub retry_attempts: Option<u32>,
    pub format_attempts: Option<u32>,
    pub max_output: Option<u32>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Policy {
    pub depth: Option<usize>,
    pub directed: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Run {
    pub parallelism: Option<usize>,
    pub failure_threshold: Option<u32>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}
