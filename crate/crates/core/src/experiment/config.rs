use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{SynthParams, TOP_K};
use crate::error::{Error, Result};
use crate::features::SegmentStrategy;
use crate::metrics::NdcgMode;
use crate::model::{Activation, RaterConfig};
use crate::sampling::SamplerKind;
use crate::tensor::SgdConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Rating loss only.
    Simple,
    /// Shared-weight pair model trained on rating and ranking loss.
    Siamese,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Simple => "simple",
            Variant::Siamese => "siamese",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simple" => Ok(Self::Simple),
            "siamese" => Ok(Self::Siamese),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureSet {
    #[serde(rename = "audio")]
    Audio,
    #[serde(rename = "audio+tag")]
    AudioTag,
}

impl FeatureSet {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::Audio => "audio",
            FeatureSet::AudioTag => "audio+tag",
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "audio" => Ok(Self::Audio),
            "audio+tag" => Ok(Self::AudioTag),
            other => Err(Error::Config(format!("unknown feature set {other:?}"))),
        }
    }
}

/// Validation metric that picks the grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMetric {
    Ndcg,
    #[default]
    Kendall,
    Spearman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    Synthetic {
        n: usize,
        n_artists: usize,
        latent_dim: usize,
        #[serde(default)]
        params: SynthParams,
    },
    Manifest {
        path: PathBuf,
        /// Feature cache directory; falls back to the environment.
        #[serde(default)]
        cache_dir: Option<PathBuf>,
        #[serde(default = "default_top_k")]
        top_k: usize,
    },
}

fn default_top_k() -> usize {
    TOP_K
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// Narrow layout sized from the feature matrix.
    #[default]
    Compact,
    /// Full-width layout for 128 × 321 log-mel input.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub activation: Activation,
}

impl ModelSpec {
    pub fn rater(&self, bins: usize, frames: usize) -> Result<RaterConfig> {
        let mut rc = match self.architecture {
            Architecture::Compact => RaterConfig::compact(bins, frames),
            Architecture::Full => RaterConfig::default(),
        };
        rc.activation = self.activation;
        if (rc.input_bins, rc.input_frames) != (bins, frames) {
            return Err(Error::Config(format!(
                "architecture expects {}x{} features, dataset has {bins}x{frames}",
                rc.input_bins, rc.input_frames
            )));
        }
        rc.validate()?;
        Ok(rc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Pairs drawn per Siamese run.
    pub pairs: usize,
    /// Draw a fresh pair set every epoch instead of once per run.
    pub resample_pairs: bool,
    pub exclude_ties: bool,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            learning_rate: SgdConfig::default().learning_rate,
            momentum: SgdConfig::default().momentum,
            pairs: 12_000,
            resample_pairs: false,
            exclude_ties: true,
        }
    }
}

impl TrainSpec {
    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub margin: Vec<f64>,
    pub w: Vec<f64>,
    pub mu: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            margin: vec![0.5, 1.0],
            w: vec![0.5, 0.9],
            mu: vec![0.25, 0.5],
        }
    }
}

/// Hyper-parameters of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub margin: f64,
    pub w: f64,
    pub mu: f64,
}

/// One table row: a model variant on one feature set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowSpec {
    pub name: String,
    pub variant: Variant,
    #[serde(default)]
    pub sampler: Option<SamplerKind>,
    pub features: FeatureSet,
    #[serde(default = "default_segment")]
    pub segment: SegmentStrategy,
}

fn default_segment() -> SegmentStrategy {
    SegmentStrategy::Mid30
}

impl RowSpec {
    pub fn validate(&self) -> Result<()> {
        match (self.variant, self.sampler) {
            (Variant::Simple, Some(s)) => Err(Error::Config(format!(
                "row {}: sampler {s} given for the simple variant",
                self.name
            ))),
            (Variant::Siamese, None) => Err(Error::Config(format!(
                "row {}: the siamese variant needs a sampler",
                self.name
            ))),
            _ => Ok(()),
        }
    }

    /// Grid cells this row searches. `w` is fixed at 0 for the simple
    /// variant and `μ` at 0 without tags.
    pub fn cells(&self, grid: &GridSpec) -> Vec<Cell> {
        let (margins, ws) = match self.variant {
            Variant::Simple => (vec![grid.margin.first().copied().unwrap_or(1.0)], vec![0.0]),
            Variant::Siamese => (grid.margin.clone(), grid.w.clone()),
        };
        let mus = match self.features {
            FeatureSet::Audio => vec![0.0],
            FeatureSet::AudioTag => grid.mu.clone(),
        };
        let mut out = Vec::with_capacity(margins.len() * ws.len() * mus.len());
        for &margin in &margins {
            for &w in &ws {
                for &mu in &mus {
                    out.push(Cell { margin, w, mu });
                }
            }
        }
        out
    }

    /// Position in the usual table layout: simple before Siamese, samplers
    /// in the order naive, artist, A/B, fused, then segment and features.
    pub fn table_key(&self) -> (Variant, u8, SegmentStrategy, FeatureSet) {
        let s = match self.sampler {
            None => 0,
            Some(SamplerKind::Naive) => 1,
            Some(SamplerKind::Artist) => 2,
            Some(SamplerKind::Ab) => 3,
            Some(SamplerKind::AbArtist) => 4,
        };
        (self.variant, s, self.segment, self.features)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub selection: SelectionMetric,
    #[serde(default)]
    pub ndcg_mode: NdcgMode,
    pub rows: Vec<RowSpec>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::Config("no rows to run".into()));
        }
        for r in &self.rows {
            r.validate()?;
        }
        let unit = |name: &str, v: &[f64]| -> Result<()> {
            if v.is_empty() {
                return Err(Error::Config(format!("grid.{name} is empty")));
            }
            if let Some(x) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(Error::Config(format!("grid.{name} value {x} outside [0, 1]")));
            }
            Ok(())
        };
        unit("w", &self.grid.w)?;
        unit("mu", &self.grid.mu)?;
        if self.grid.margin.is_empty() || self.grid.margin.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
            return Err(Error::Config("grid.margin must be non-empty and positive".into()));
        }
        if self.train.batch_size == 0 || self.train.epochs == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        self.train.sgd().validate()?;
        if let DatasetSpec::Synthetic { params, .. } = &self.dataset {
            params.validate()?;
        }
        Ok(())
    }
}
