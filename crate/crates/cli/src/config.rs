//! Run configuration: a JSON file whose every field is optional, overridden by flags.

use std::path::{Path, PathBuf};

use knotpair::cluster::ThresholdGrid;
use knotpair::ingest::filter::{DEFAULT_MIN_FRACTION, DEFAULT_TOLERANCE};
use knotpair::nn::{TrainConfig, Variant};
use knotpair::synth::SynthConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Input and output locations. Flags take precedence over these.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory holding `boards.csv`, `measurements.csv` and `labels/`.
    pub data: Option<PathBuf>,
    pub boards: Option<PathBuf>,
    pub measurements: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub triplets: Option<PathBuf>,
    pub models: Vec<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub pairings: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSettings {
    pub tolerance: u8,
    pub min_fraction: f64,
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            min_fraction: DEFAULT_MIN_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    /// Conveyor advance per frame.
    pub frame_advance_mm: f64,
    /// Board length covered by one frame.
    pub frame_length_mm: f64,
    pub filter: FilterSettings,
    /// Training settings; absent means the defaults of the chosen variant.
    pub train: Option<TrainConfig>,
    pub synth: SynthConfig,
    pub grid: ThresholdGrid,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        Self {
            seed: 0,
            paths: Paths::default(),
            frame_advance_mm: synth.frame_length_mm,
            frame_length_mm: synth.frame_length_mm,
            filter: FilterSettings::default(),
            train: None,
            synth,
            grid: ThresholdGrid::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    }

    /// Training settings for `variant` (or the configured one), with the run seed applied.
    pub fn train_config(&self, variant: Option<Variant>) -> TrainConfig {
        let mut cfg = match (&self.train, variant) {
            (Some(t), Some(v)) if t.variant != v => TrainConfig { variant: v, ..t.clone() },
            (Some(t), _) => t.clone(),
            (None, v) => TrainConfig::for_variant(v.unwrap_or(Variant::Standard)),
        };
        cfg.seed = self.seed;
        cfg
    }
}
