//! Settings resolution: built-in defaults, then the config file, then
//! command-line flags, then environment variables.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ftrans_core::harness::HarnessConfig;
use ftrans_core::llm::{ProviderConfig, ProviderKind};
use ftrans_core::session::OrchestratorConfig;
use serde::{Deserialize, Serialize};

pub const CONFIG_ENV: &str = "FTRANS_CONFIG";

/// Environment overrides, highest precedence.
pub const ENV_PROVIDER: &str = "FTRANS_PROVIDER";
pub const ENV_BASE_URL: &str = "FTRANS_BASE_URL";
pub const ENV_MODEL: &str = "FTRANS_MODEL";
pub const ENV_TRANSCRIPT_DIR: &str = "FTRANS_TRANSCRIPT_DIR";
pub const ENV_MAX_ITERS: &str = "FTRANS_MAX_ITERS";
pub const ENV_TOKEN_BUDGET: &str = "FTRANS_TOKEN_BUDGET";
pub const ENV_WORKERS: &str = "FTRANS_WORKERS";
pub const ENV_PYTHON: &str = "FTRANS_PYTHON";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub token_budget: usize,
    pub max_iters: u32,
    pub workers: usize,
    pub waive: Vec<String>,
    /// Interpreter used by `verify`.
    pub python: String,
    pub provider: ProviderConfig,
    pub harness: HarnessConfig,
}

impl Default for Settings {
    fn default() -> Self {
        let o = OrchestratorConfig::default();
        Self {
            token_budget: o.token_budget,
            max_iters: o.max_iters,
            workers: o.workers,
            waive: o.waive,
            python: "python3".into(),
            provider: ProviderConfig::default(),
            harness: o.harness,
        }
    }
}

impl Settings {
    pub fn orchestrator(&self) -> OrchestratorConfig {
        OrchestratorConfig {
            token_budget: self.token_budget,
            max_iters: self.max_iters,
            workers: self.workers,
            waive: self.waive.clone(),
            harness: self.harness.clone(),
        }
    }
}

/// Values given on the command line; `None` leaves the lower layers alone.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub provider: Option<ProviderKind>,
    pub base_url: Option<String>,
    pub model_name: Option<String>,
    pub transcript_dir: Option<PathBuf>,
    pub record_dir: Option<PathBuf>,
    pub max_iters: Option<u32>,
    pub token_budget: Option<usize>,
    pub workers: Option<usize>,
    pub waive: Vec<String>,
}

/// Parse TOML, or JSON when the file ends in `.json`.
pub fn load_file(path: &Path) -> Result<Settings> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    } else {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

fn parse_env<T: std::str::FromStr>(name: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow::anyhow!("{name}={value:?}: {e}"))
}

/// Resolve settings. `env` looks up environment variables so tests can
/// supply their own.
pub fn resolve(
    config_flag: Option<&Path>,
    flags: &Overrides,
    env: &dyn Fn(&str) -> Option<String>,
) -> Result<Settings> {
    let file = env(CONFIG_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or_else(|| config_flag.map(Path::to_path_buf));
    let mut s = match file {
        Some(path) => load_file(&path)?,
        None => Settings::default(),
    };

    if let Some(kind) = flags.provider {
        s.provider.kind = kind;
    }
    if let Some(url) = &flags.base_url {
        s.provider.base_url = Some(url.clone());
    }
    if let Some(model) = &flags.model_name {
        s.provider.model_name = Some(model.clone());
    }
    if let Some(dir) = &flags.transcript_dir {
        s.provider.transcript_dir = Some(dir.clone());
    }
    if let Some(dir) = &flags.record_dir {
        s.provider.record_dir = Some(dir.clone());
    }
    if let Some(n) = flags.max_iters {
        s.max_iters = n;
    }
    if let Some(n) = flags.token_budget {
        s.token_budget = n;
    }
    if let Some(n) = flags.workers {
        s.workers = n;
    }
    if !flags.waive.is_empty() {
        s.waive = flags.waive.clone();
    }

    if let Some(v) = env(ENV_PROVIDER) {
        s.provider.kind = v.parse()?;
    }
    if let Some(v) = env(ENV_BASE_URL) {
        s.provider.base_url = Some(v);
    }
    if let Some(v) = env(ENV_MODEL) {
        s.provider.model_name = Some(v);
    }
    if let Some(v) = env(ENV_TRANSCRIPT_DIR) {
        s.provider.transcript_dir = Some(v.into());
    }
    if let Some(v) = env(ENV_MAX_ITERS) {
        s.max_iters = parse_env(ENV_MAX_ITERS, &v)?;
    }
    if let Some(v) = env(ENV_TOKEN_BUDGET) {
        s.token_budget = parse_env(ENV_TOKEN_BUDGET, &v)?;
    }
    if let Some(v) = env(ENV_WORKERS) {
        s.workers = parse_env(ENV_WORKERS, &v)?;
    }
    if let Some(v) = env(ENV_PYTHON) {
        s.python = v;
    }

    if s.max_iters == 0 {
        bail!("max_iters must be at least 1");
    }
    if s.workers == 0 {
        bail!("workers must be at least 1");
    }
    s.provider.validate()?;
    Ok(s)
}

pub fn process_env(name: &str) -> Option<String> {
    std::env::var(name).ok()
}
