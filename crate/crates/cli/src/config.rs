//! Experiment configuration: a JSON document where every field is optional
//! and falls back to the published hyperparameters.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uqseq::calibration::{log_grid, DEFAULT_TARGETS};
use uqseq::data::{SynthProfile, WindowSpec};
use uqseq::models::{ArchitectureConfig, Variant};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    /// Metro Interstate Traffic Volume CSV.
    Mitv {
        csv: PathBuf,
        /// Rows in train, dev, dev2 and test; defaults to the published split.
        #[serde(default)]
        sizes: Option<[usize; 4]>,
        #[serde(default = "mitv_window")]
        window: WindowSpec,
    },
    /// Seeded heteroskedastic sequences.
    Synthetic {
        #[serde(default = "default_train_sequences")]
        train_sequences: usize,
        #[serde(default)]
        profile: SynthProfile,
    },
}

fn mitv_window() -> WindowSpec {
    WindowSpec::MITV
}

fn default_train_sequences() -> usize {
    2000
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic { train_sequences: default_train_sequences(), profile: SynthProfile::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSettings {
    /// Target missrates of the reported operating points.
    pub targets: Vec<f64>,
    /// Split whose predictions fix the cross-validated scales.
    pub split: String,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_points: usize,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self { targets: DEFAULT_TARGETS.to_vec(), split: "dev2".into(), grid_min: 0.01, grid_max: 100.0, grid_points: 200 }
    }
}

impl CalibrationSettings {
    pub fn grid(&self) -> Vec<f64> {
        log_grid(self.grid_min, self.grid_max, self.grid_points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSettings {
    pub splits: Vec<String>,
    /// Also evaluate the test split with no observed prefix.
    pub drift: bool,
    pub permutation_resamples: usize,
    /// `(p, q)` orders of GARCH baselines; fitted on single-series data only.
    pub garch_orders: Vec<(usize, usize)>,
    /// Treat GARCH optimizer non-convergence as a numerical failure.
    pub strict: bool,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        Self {
            splits: vec!["test".into()],
            drift: false,
            permutation_resamples: 10_000,
            garch_orders: vec![(1, 1)],
            strict: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotSettings {
    pub split: String,
    pub first: usize,
    pub count: usize,
    /// Multiplier applied to both bands before drawing.
    pub band_scale: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for PlotSettings {
    fn default() -> Self {
        Self { split: "test".into(), first: 0, count: 3, band_scale: 1.0, width: 800, height: 300 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// Prepared dataset directory; defaults to `<out>/data`.
    pub data_dir: Option<PathBuf>,
    pub variant: Variant,
    /// Input width, output width and embeddings are taken from the prepared
    /// dataset and override whatever is given here.
    pub architecture: ArchitectureConfig,
    pub calibration: CalibrationSettings,
    pub evaluation: EvaluationSettings,
    pub plot: PlotSettings,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::default(),
            data_dir: None,
            variant: Variant::Jms,
            architecture: ArchitectureConfig::default(),
            calibration: CalibrationSettings::default(),
            evaluation: EvaluationSettings::default(),
            plot: PlotSettings::default(),
            seed: 0,
            out: PathBuf::from("uqseq-out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| self.out.join("data"))
    }

    pub fn variant_dir(&self, variant: Variant) -> PathBuf {
        self.out.join(variant.name())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let c = &self.calibration;
        if c.targets.is_empty() || c.targets.iter().any(|t| !(0.0..1.0).contains(t)) {
            return Err(CliError::Usage("calibration targets must lie in [0, 1)".into()));
        }
        if !(c.grid_min > 0.0 && c.grid_max > c.grid_min && c.grid_points > 0) {
            return Err(CliError::Usage("calibration grid needs 0 < grid_min < grid_max and at least one point".into()));
        }
        if self.evaluation.permutation_resamples == 0 {
            return Err(CliError::Usage("permutation_resamples must be positive".into()));
        }
        if !(self.plot.band_scale >= 0.0) || self.plot.width < 100 || self.plot.height < 100 {
            return Err(CliError::Usage("plot needs band_scale >= 0 and at least 100x100 pixels".into()));
        }
        Ok(())
    }

    /// Splits evaluated by `evaluate`, with the drift condition appended when requested.
    pub fn conditions(&self, drift: bool) -> Vec<String> {
        let mut s = self.evaluation.splits.clone();
        if (drift || self.evaluation.drift) && !s.iter().any(|n| n == "test_drift") {
            s.push("test_drift".into());
        }
        s
    }
}
