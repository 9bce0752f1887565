use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use textforge_core::annotator::{AnnotateOptions, HttpClientConfig, RetryPolicy};
use textforge_core::tamper::SolverParams;
use textforge_core::Thresholds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotatorSection {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub concurrency: usize,
    pub max_retries: usize,
    pub base_delay_ms: u64,
}

impl Default for AnnotatorSection {
    fn default() -> Self {
        let d = AnnotateOptions::default();
        Self {
            endpoint: "https://api.openai.com/v1".into(),
            model: d.model_id,
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 120,
            concurrency: d.concurrency,
            max_retries: d.retry.max_retries,
            base_delay_ms: d.retry.base_delay_ms,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringSection {
    pub vectors: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub annotator: AnnotatorSection,
    pub scoring: ScoringSection,
    pub thresholds: Thresholds,
    pub solver: SolverParams,
}

impl Config {
    /// Reads a TOML config. Relative paths inside it resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Config = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.scoring.vectors, &mut cfg.scoring.stopwords].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.thresholds.validate().map_err(anyhow::Error::msg)?;
        if self.solver.tol.is_nan() || self.solver.tol <= 0.0 {
            bail!("solver tol must be positive");
        }
        if self.solver.iters_per_unknown == 0 {
            bail!("solver iters_per_unknown must be at least 1");
        }
        if self.annotator.concurrency == 0 {
            bail!("annotator concurrency must be at least 1");
        }
        for p in [&self.scoring.vectors, &self.scoring.stopwords].into_iter().flatten() {
            if !p.is_file() {
                bail!("configured file {} does not exist", p.display());
            }
        }
        Ok(())
    }

    pub fn annotate_options(&self) -> AnnotateOptions {
        AnnotateOptions {
            model_id: self.annotator.model.clone(),
            concurrency: self.annotator.concurrency,
            retry: RetryPolicy {
                max_retries: self.annotator.max_retries,
                base_delay_ms: self.annotator.base_delay_ms,
                ..RetryPolicy::default()
            },
            ..AnnotateOptions::default()
        }
    }

    pub fn http_config(&self) -> HttpClientConfig {
        HttpClientConfig {
            base_url: self.annotator.endpoint.clone(),
            api_key: std::env::var(&self.annotator.api_key_env).ok(),
            timeout: Duration::from_secs(self.annotator.timeout_secs),
        }
    }
}
