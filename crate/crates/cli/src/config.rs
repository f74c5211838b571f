//! TOML run configuration.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use wildsynth_core::editor::{MockMode, PromptTemplates, RemoteConfig, RetryPolicy};
use wildsynth_core::orchestrator::PipelineConfig;
use wildsynth_core::QcParams;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: Option<String>,
    pub in_flight: Option<usize>,
    /// Directory holding base images; relative paths resolve against the
    /// config file.
    pub image_dir: Option<PathBuf>,
    /// Overrides the builtin prompt templates.
    pub templates_dir: Option<PathBuf>,
    pub qc: QcParams,
    pub retry: RetryConfig,
    pub remote: RemoteConfig,
    pub mock: MockMode,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryConfig {
    pub delays_ms: Vec<u64>,
}

impl Default for RetryConfig {
    fn default() -> Self {
        Self {
            delays_ms: RetryPolicy::default()
                .delays
                .iter()
                .map(|d| d.as_millis() as u64)
                .collect(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.image_dir, &mut cfg.templates_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn pipeline(&self, run_id: String, seed: u64) -> Result<PipelineConfig, String> {
        let mut p = PipelineConfig::new(run_id, seed);
        if let Some(n) = self.in_flight {
            p.in_flight = n;
        }
        p.qc = self.qc.clone();
        p.qc.validate().map_err(|e| e.to_string())?;
        p.retry = RetryPolicy {
            delays: self
                .retry
                .delays_ms
                .iter()
                .map(|&ms| Duration::from_millis(ms))
                .collect(),
        };
        if let Some(dir) = &self.templates_dir {
            p.templates = PromptTemplates::from_dir(dir).map_err(|e| e.to_string())?;
        }
        Ok(p)
    }
}
