//! CLI configuration file (TOML). Every field is optional; flags win over
//! the file, the file wins over built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use artikit::geometry::DEFAULT_SAMPLES;
use artikit::metrics::{MatchWeights, MetricConfig, Thresholds};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    #[default]
    Markdown,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Samples {
    pub global: usize,
    pub part: usize,
}

impl Default for Samples {
    fn default() -> Self {
        Self { global: DEFAULT_SAMPLES, part: DEFAULT_SAMPLES }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsFile {
    pub origin: f64,
    pub axis: f64,
    pub joint_type: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdsFile {
    pub origin: f64,
    pub axis_deg: f64,
    pub range_iou: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsFile {
    pub cost_cutoff: f64,
    pub weights: WeightsFile,
    pub thresholds: ThresholdsFile,
}

impl Default for MetricsFile {
    fn default() -> Self {
        let d = MetricConfig::default();
        Self {
            cost_cutoff: d.cost_cutoff,
            weights: WeightsFile { origin: d.weights.origin, axis: d.weights.axis, joint_type: d.weights.joint_type },
            thresholds: ThresholdsFile {
                origin: d.thresholds.origin,
                axis_deg: (d.thresholds.axis.to_degrees() * 1e9).round() / 1e9,
                range_iou: d.thresholds.range_iou,
            },
        }
    }
}

impl Default for WeightsFile {
    fn default() -> Self {
        MetricsFile::default().weights
    }
}

impl Default for ThresholdsFile {
    fn default() -> Self {
        MetricsFile::default().thresholds
    }
}

impl MetricsFile {
    pub fn to_config(&self) -> MetricConfig {
        MetricConfig {
            weights: MatchWeights { origin: self.weights.origin, axis: self.weights.axis, joint_type: self.weights.joint_type },
            cost_cutoff: self.cost_cutoff,
            thresholds: Thresholds {
                origin: self.thresholds.origin,
                axis: self.thresholds.axis_deg.to_radians(),
                range_iou: self.thresholds.range_iou,
            },
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    /// Backend TOML, relative to this file.
    pub backend: Option<PathBuf>,
    pub seed: u64,
    pub format: OutputFormat,
    pub samples: Samples,
    pub metrics: MetricsFile,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg: CliConfig = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        if let Some(b) = &mut cfg.backend {
            if b.is_relative() {
                *b = path.parent().unwrap_or(Path::new(".")).join(&*b);
            }
        }
        Ok(cfg)
    }
}
