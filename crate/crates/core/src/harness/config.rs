use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::MixPolicy;
use crate::dataset::{Condition, SamplingPolicy, SilenceConfig, WindowConfig};
use crate::embedding::BUILTIN_BACKEND;
use crate::error::{Error, Result};
use crate::fusion::FusionMethod;
use crate::metrics::Metric;
use crate::projection::ProjectionKind;

/// Explicit reference/candidate project lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub reference: Vec<String>,
    pub candidate: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionSpec {
    pub name: String,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSpec>,
}

fn default_n_windows() -> usize {
    10_000
}
fn default_window_seconds() -> f64 {
    5.0
}
fn default_hop_seconds() -> f64 {
    1.0
}
fn default_metrics() -> Vec<Metric> {
    Metric::ALL.to_vec()
}
fn default_fusions() -> Vec<FusionMethod> {
    FusionMethod::ALL.to_vec()
}
fn default_projections() -> Vec<ProjectionKind> {
    vec![ProjectionKind::Identity, ProjectionKind::PCA10, ProjectionKind::PCA100]
}
fn default_embedders() -> Vec<String> {
    vec![BUILTIN_BACKEND.to_string()]
}
fn default_conditions() -> Vec<Condition> {
    vec![Condition::Random, Condition::Pitch, Condition::Time, Condition::PitchTime]
}
fn default_n_repeats() -> usize {
    5
}
fn default_one() -> usize {
    1
}
fn default_reference_fraction() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}

/// Experiment run description, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub collections: Vec<CollectionSpec>,
    #[serde(default = "default_n_windows")]
    pub n_windows: usize,
    #[serde(default = "default_window_seconds")]
    pub window_seconds: f64,
    #[serde(default = "default_hop_seconds")]
    pub hop_seconds: f64,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default = "default_fusions")]
    pub fusions: Vec<FusionMethod>,
    #[serde(default = "default_projections")]
    pub projections: Vec<ProjectionKind>,
    #[serde(default = "default_embedders")]
    pub embedders: Vec<String>,
    /// Non-matching conditions for experiment 3; the `none` control is always run.
    #[serde(default = "default_conditions")]
    pub conditions: Vec<Condition>,
    pub seed: u64,
    #[serde(default = "default_n_repeats")]
    pub n_repeats: usize,
    /// Independent non-matching reference draws averaged per score.
    #[serde(default = "default_one")]
    pub n_derangements: usize,
    /// Fraction of each collection's projects used as references when no
    /// explicit split is given.
    #[serde(default = "default_reference_fraction")]
    pub reference_fraction: f64,
    /// Draw windows with replacement once a collection's grid is exhausted.
    #[serde(default = "default_true")]
    pub allow_replacement: bool,
    #[serde(default)]
    pub mix: MixPolicy,
    #[serde(default)]
    pub silence: SilenceConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    /// A config with default axes and no collections.
    pub fn new(seed: u64) -> Self {
        serde_json::from_value(serde_json::json!({ "seed": seed })).expect("defaults deserialize")
    }

    /// Reads a config; relative collection and output paths resolve against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        // Relative paths are relative to the config file.
        if let Some(base) = path.parent() {
            for c in &mut cfg.collections {
                if c.path.is_relative() {
                    c.path = base.join(&c.path);
                }
            }
            if let Some(out) = cfg.output_dir.as_mut().filter(|p| p.is_relative()) {
                *out = base.join(&*out);
            }
        }
        Ok(cfg)
    }

    pub fn window_config(&self) -> WindowConfig {
        WindowConfig {
            window_seconds: self.window_seconds,
            hop_seconds: self.hop_seconds,
            silence: self.silence,
            mix: self.mix,
        }
    }

    pub fn sampling_policy(&self) -> SamplingPolicy {
        if self.allow_replacement {
            SamplingPolicy::AllowReplacement
        } else {
            SamplingPolicy::Strict
        }
    }

    /// Checks every axis is non-empty and every value usable in-process.
    /// `need_collections` is false when collections are supplied in memory.
    pub fn validate(&self, need_collections: bool) -> Result<()> {
        let empty = |what: &str| Err(Error::Config(format!("no {what} listed")));
        if need_collections && self.collections.is_empty() {
            return empty("collections");
        }
        if self.metrics.is_empty() {
            return empty("metrics");
        }
        if self.fusions.is_empty() {
            return empty("fusion methods");
        }
        if self.projections.is_empty() {
            return empty("projections");
        }
        if self.embedders.is_empty() {
            return empty("embedders");
        }
        if let Some(e) = self.embedders.iter().find(|e| e.as_str() != BUILTIN_BACKEND) {
            return Err(Error::Config(format!(
                "embedder `{e}` cannot run in-process; extract it externally and use `embed --backend external:<path>` with `score`"
            )));
        }
        if self.n_windows < 2 {
            return Err(Error::Config("n_windows must be at least 2".into()));
        }
        if self.n_repeats == 0 {
            return Err(Error::Config("n_repeats must be at least 1".into()));
        }
        if self.n_derangements == 0 {
            return Err(Error::Config("n_derangements must be at least 1".into()));
        }
        if !(self.window_seconds > 0.0 && self.hop_seconds > 0.0) {
            return Err(Error::Config("window_seconds and hop_seconds must be positive".into()));
        }
        let mut names: Vec<&str> = self.collections.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("collection names must be unique".into()));
        }
        Ok(())
    }
}
