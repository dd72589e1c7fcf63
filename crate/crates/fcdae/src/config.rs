//! TOML run configuration. Unknown keys are rejected at every level and
//! every field has a default, so a config only needs the values it changes.
//! `configs/example.toml` spells out the full schema.

use std::fs;
use std::path::{Path, PathBuf};

use fcdae_core::fit::ModelKind;
use fcdae_core::metrics::MetricsConfig;
use fcdae_core::model::{FcDaeArchitecture, TrainConfig};
use fcdae_core::synth::{split_counts, Augmentation, DynamicsSpec, SpeckleSpec};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed: per-sample simulation seeds, split assignment, model
    /// initialization and bootstrap draws all derive from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub architecture: FcDaeArchitecture,
    pub train: TrainConfig,
    pub eval: MetricsConfig,
    pub bootstrap: BootstrapConfig,
    pub ensemble: EnsembleConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            dataset: DatasetConfig::default(),
            architecture: FcDaeArchitecture::default(),
            train: TrainConfig::default(),
            eval: MetricsConfig::default(),
            bootstrap: BootstrapConfig::default(),
            ensemble: EnsembleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_samples: usize,
    pub n_frames: usize,
    pub frame_interval_s: f64,
    pub q_label: String,
    /// Train, validation and test fractions.
    pub splits: [f64; 3],
    /// Training maps larger than this are cut into diagonal tiles.
    pub crop_size: usize,
    pub crop_stride: usize,
    pub write_pixel_series: bool,
    /// Applied to training samples only.
    pub augmentation: Augmentation,
    /// Sample `i` uses `dynamics[i % D]` and `speckle[(i / D) % S]`.
    pub dynamics: Vec<DynamicsSpec>,
    pub speckle: Vec<SpeckleSpec>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_samples: 48,
            n_frames: 128,
            frame_interval_s: 1.0,
            q_label: String::new(),
            splits: [0.7, 0.15, 0.15],
            crop_size: 64,
            crop_stride: 64,
            write_pixel_series: false,
            augmentation: Augmentation::default(),
            dynamics: vec![DynamicsSpec::StationaryKww { tau_c: 20.0, gamma: 1.0 }],
            speckle: vec![SpeckleSpec::default()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub fractions: Vec<f64>,
    pub model: ModelKind,
    pub n_frames: usize,
    pub frame_interval_s: f64,
    pub dynamics: DynamicsSpec,
    pub speckle: SpeckleSpec,
    /// Defaults to `<out_dir>/model/checkpoint.fcda`.
    pub checkpoint: Option<PathBuf>,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            fractions: vec![1.0, 0.5, 0.25, 0.10, 0.05],
            model: ModelKind::Composite,
            n_frames: 128,
            frame_interval_s: 1.0,
            dynamics: DynamicsSpec::Oscillatory { tau_c: 15.0, gamma: 1.0, amplitude: 0.5, omega: 0.2, damping: 0.01 },
            speckle: SpeckleSpec::default(),
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub seeds: Vec<u64>,
    /// Overrides `train.max_epochs` for ensemble members.
    pub max_epochs: Option<usize>,
    /// Uses only the first N training crops.
    pub max_train_crops: Option<usize>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig { seeds: vec![1, 2, 3, 4], max_epochs: None, max_train_crops: None }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        RunConfig::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config always serializes")
    }

    /// Checks cross-field constraints that serde cannot express.
    pub fn validate(&self) -> Result<()> {
        let ctx = |section: &'static str| move |e: fcdae_core::Error| Error::config(format!("[{section}] {e}"));
        let d = &self.dataset;
        if d.n_samples == 0 {
            return Err(Error::config("[dataset] n_samples must be at least 1"));
        }
        if d.n_frames < 2 {
            return Err(Error::config("[dataset] n_frames must be at least 2"));
        }
        if !(d.frame_interval_s > 0.0 && d.frame_interval_s.is_finite()) {
            return Err(Error::config("[dataset] frame_interval_s must be positive"));
        }
        split_counts(d.n_samples, d.splits).map_err(ctx("dataset"))?;
        if d.crop_size < self.architecture.kernel_size || d.crop_stride == 0 {
            return Err(Error::config("[dataset] crop_size must be at least the kernel size and crop_stride positive"));
        }
        if d.augmentation.subsample.iter().any(|&k| k < 1 || d.n_frames / k < 2) {
            return Err(Error::config("[dataset.augmentation] subsample intervals must be >= 1 and leave >= 2 frames"));
        }
        if d.dynamics.is_empty() || d.speckle.is_empty() {
            return Err(Error::config("[dataset] needs at least one dynamics and one speckle entry"));
        }
        for s in &d.dynamics {
            s.validate().map_err(ctx("dataset.dynamics"))?;
        }
        for s in &d.speckle {
            s.validate().map_err(ctx("dataset.speckle"))?;
        }
        self.architecture.validate().map_err(ctx("architecture"))?;
        self.train.validate().map_err(ctx("train"))?;
        if !(self.eval.z > 0.0) || self.eval.max_lag == 0 {
            return Err(Error::config("[eval] z must be positive and max_lag at least 1"));
        }
        let b = &self.bootstrap;
        if b.fractions.is_empty() || b.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(Error::config("[bootstrap] fractions must be non-empty and lie in (0, 1]"));
        }
        if b.n_frames < 16 {
            return Err(Error::config("[bootstrap] n_frames must be at least 16"));
        }
        b.dynamics.validate().map_err(ctx("bootstrap.dynamics"))?;
        b.speckle.validate().map_err(ctx("bootstrap.speckle"))?;
        if self.ensemble.max_epochs == Some(0) {
            return Err(Error::config("[ensemble] max_epochs must be at least 1"));
        }
        Ok(())
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.out_dir.join("dataset")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.dataset_dir().join("manifest.tsv")
    }

    pub fn model_dir(&self) -> PathBuf {
        self.out_dir.join("model")
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.bootstrap.checkpoint.clone().unwrap_or_else(|| self.model_dir().join("checkpoint.fcda"))
    }
}
