//! Effective configuration shared by the CLI and library callers.
//!
//! Layering is file < explicit overrides < environment. Overrides are
//! `dotted.key=value` pairs whose value is parsed as a TOML literal (falling
//! back to a bare string). Environment variables use the `CONDKIT_` prefix;
//! the first `_` after it separates the section from the key and `__`
//! descends further, so `CONDKIT_DATASET_SCENE_BUDGET=8` sets
//! `dataset.scene_budget` and `CONDKIT_ANCHORING_INPUT_CAMERA__RADIUS=3`
//! sets `anchoring.input_camera.radius`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anchoring::PlanConfig;
use crate::conditioning::Variant;
use crate::dataset::PairCountMode;
use crate::depth::{QuantileMethod, QUANTILE_DOWNSAMPLE};
use crate::preprocess::TRAIN_SIZE;

pub const ENV_PREFIX: &str = "CONDKIT_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid value for {field}: {reason}")]
    Invalid { field: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConditioningConfig {
    pub variant: Variant,
}

impl Default for ConditioningConfig {
    fn default() -> Self {
        Self {
            variant: Variant::SixdofViewer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DepthConfig {
    pub quantile: QuantileMethod,
    /// Block size for subsampling infilled depth before a viewer-scale query.
    pub downsample: usize,
}

impl Default for DepthConfig {
    fn default() -> Self {
        Self {
            quantile: QuantileMethod::Linear,
            downsample: QUANTILE_DOWNSAMPLE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// Expected view pairs per streamed scene.
    pub rate: f64,
    pub pair_count: PairCountMode,
    pub workers: usize,
    pub scene_budget: usize,
    pub scenes_per_shard: usize,
    pub one_epoch: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            rate: 1.0,
            pair_count: PairCountMode::StochasticRound,
            workers: 1,
            scene_budget: 16,
            scenes_per_shard: 64,
            one_epoch: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub size: u32,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { size: TRAIN_SIZE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub metrics: Vec<String>,
    /// Command template for the external LPIPS scorer; `{a}` and `{b}` are
    /// replaced by image paths.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lpips_cmd: Option<String>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            metrics: vec!["psnr".into(), "ssim".into()],
            lpips_cmd: None,
        }
    }
}

pub const KNOWN_METRICS: [&str; 3] = ["psnr", "ssim", "lpips"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub conditioning: ConditioningConfig,
    pub depth: DepthConfig,
    pub dataset: DatasetConfig,
    pub preprocess: PreprocessConfig,
    pub anchoring: PlanConfig,
    pub metrics: MetricsConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            conditioning: ConditioningConfig::default(),
            depth: DepthConfig::default(),
            dataset: DatasetConfig::default(),
            preprocess: PreprocessConfig::default(),
            anchoring: PlanConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seed > i64::MAX as u64 {
            return Err(invalid("seed", "must fit in a signed 64-bit integer"));
        }
        if !(self.dataset.rate.is_finite() && self.dataset.rate > 0.0) {
            return Err(invalid("dataset.rate", "must be positive"));
        }
        if self.dataset.workers == 0 {
            return Err(invalid("dataset.workers", "must be at least 1"));
        }
        if self.dataset.scene_budget < self.dataset.workers + 2 {
            return Err(invalid("dataset.scene_budget", "must be at least workers + 2"));
        }
        if self.dataset.scenes_per_shard == 0 {
            return Err(invalid("dataset.scenes_per_shard", "must be at least 1"));
        }
        if self.depth.downsample == 0 {
            return Err(invalid("depth.downsample", "must be at least 1"));
        }
        if self.preprocess.size == 0 {
            return Err(invalid("preprocess.size", "must be positive"));
        }
        if let Some(m) = self.metrics.metrics.iter().find(|m| !KNOWN_METRICS.contains(&m.as_str())) {
            return Err(invalid("metrics.metrics", format!("unknown metric {m:?}")));
        }
        self.anchoring.validate().map_err(|e| invalid("anchoring", e.to_string()))
    }

    /// Sets `key` (dotted path) to `raw`, re-validating the whole document.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), ConfigError> {
        self.set_all(&[(key.to_string(), raw.to_string())])
    }

    pub fn set_all(&mut self, overrides: &[(String, String)]) -> Result<(), ConfigError> {
        if overrides.is_empty() {
            return Ok(());
        }
        let mut doc = toml::Table::try_from(&*self).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for (key, raw) in overrides {
            let value = parse_value(raw);
            let parts: Vec<&str> = key.split('.').collect();
            let (last, parents) = parts.split_last().expect("split yields one part");
            let mut table = &mut doc;
            for p in parents {
                table = table
                    .entry(p.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| invalid(key, format!("{p} is not a section")))?;
            }
            table.insert(last.to_string(), value);
        }
        let updated: Config = doc
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    /// Applies `CONDKIT_*` variables from `vars`.
    pub fn apply_env<I>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let overrides: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|rest| (env_key(rest), v)))
            .collect();
        self.set_all(&overrides)
    }
}

fn env_key(rest: &str) -> String {
    let lower = rest.to_ascii_lowercase();
    let (section, key) = match lower.split_once('_') {
        Some((s, k)) if s != "seed" => (s.to_string(), k.replace("__", ".")),
        _ => return lower,
    };
    format!("{section}.{key}")
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
