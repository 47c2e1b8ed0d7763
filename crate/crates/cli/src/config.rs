//! Run configuration: one flat key=value document per run.
//!
//! Every run directory stores the complete configuration it was trained
//! with, so a run is reproducible from its directory alone. The same
//! format doubles as the user-facing `--config` file; files there may
//! hold any subset of keys, while stored run configs are always
//! complete. Flags override file values; file values override defaults.

use std::path::{Path, PathBuf};

use dbvae_core::error::{Error, Result};
use dbvae_core::model::{LossWeights, Mode, ModelConfig};
use dbvae_core::resampler::{CombineMode, ResampleConfig, ResampleSchedule};
use dbvae_core::adam::AdamConfig;

/// Full description of a single training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub epochs: usize,
    pub batch: usize,
    pub val_fraction: f64,
    pub weights: LossWeights,
    pub resampler: ResampleConfig,
    /// Refresh the sampling distribution every this many epochs.
    pub refresh_every: usize,
    pub adam: AdamConfig,
    pub data: PathBuf,
    pub out: PathBuf,
}

impl RunConfig {
    /// Defaults for a run of `mode` with the given seed and locations.
    pub fn new(mode: Mode, seed: u64, data: PathBuf, out: PathBuf) -> Self {
        Self {
            mode,
            seed,
            epochs: 20,
            batch: 32,
            val_fraction: 0.1,
            weights: LossWeights::default(),
            resampler: ResampleConfig::default(),
            refresh_every: 1,
            adam: AdamConfig::default(),
            data,
            out,
        }
    }

    /// Validate everything the run depends on.
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch == 0 {
            return Err(Error::InvalidConfig("batch must be >= 1".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::BadFraction {
                fraction: self.val_fraction,
            });
        }
        self.resampler.validate()?;
        self.schedule().validate()?;
        self.model_config().validate()?;
        if !(self.adam.learning_rate.is_finite() && self.adam.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.adam.learning_rate
            )));
        }
        Ok(())
    }

    /// The architecture this run trains (defaults plus this run's mode
    /// and loss weights).
    pub fn model_config(&self) -> ModelConfig {
        let mut config = ModelConfig::new(self.mode);
        config.weights = self.weights;
        config
    }

    /// The resampling schedule.
    pub fn schedule(&self) -> ResampleSchedule {
        ResampleSchedule {
            every: self.refresh_every,
        }
    }

    /// Render as the canonical key=value document (fixed key order,
    /// shortest-round-trip floats, byte-stable for identical configs).
    pub fn render(&self) -> String {
        let w = &self.weights;
        let a = &self.adam;
        format!(
            "mode={}\nseed={}\nepochs={}\nbatch={}\nval_fraction={}\n\
             w_classification={}\nw_vae={}\nw_reconstruction={}\nw_kl={}\n\
             resampler_bins={}\nresampler_alpha={}\nresampler_combine={}\nresampler_refresh_every={}\n\
             learning_rate={}\nadam_beta1={}\nadam_beta2={}\nadam_epsilon={}\n\
             data={}\nout={}\n",
            self.mode,
            self.seed,
            self.epochs,
            self.batch,
            self.val_fraction,
            w.classification,
            w.vae,
            w.reconstruction,
            w.kl,
            self.resampler.bins,
            self.resampler.alpha,
            combine_str(self.resampler.combine),
            self.refresh_every,
            a.learning_rate,
            a.beta1,
            a.beta2,
            a.epsilon,
            self.data.display(),
            self.out.display(),
        )
    }

    /// Apply one key=value pair (both partial files and full documents
    /// funnel through here).
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| {
                Error::InvalidConfig(format!("config key {key}: bad value {value:?}"))
            })
        }
        match key {
            "mode" => self.mode = value.parse()?,
            "seed" => self.seed = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "batch" => self.batch = num(key, value)?,
            "val_fraction" => self.val_fraction = num(key, value)?,
            "w_classification" => self.weights.classification = num(key, value)?,
            "w_vae" => self.weights.vae = num(key, value)?,
            "w_reconstruction" => self.weights.reconstruction = num(key, value)?,
            "w_kl" => self.weights.kl = num(key, value)?,
            "resampler_bins" => self.resampler.bins = num(key, value)?,
            "resampler_alpha" => self.resampler.alpha = num(key, value)?,
            "resampler_combine" => self.resampler.combine = value.parse()?,
            "resampler_refresh_every" => self.refresh_every = num(key, value)?,
            "learning_rate" => self.adam.learning_rate = num(key, value)?,
            "adam_beta1" => self.adam.beta1 = num(key, value)?,
            "adam_beta2" => self.adam.beta2 = num(key, value)?,
            "adam_epsilon" => self.adam.epsilon = num(key, value)?,
            "data" => self.data = PathBuf::from(value),
            "out" => self.out = PathBuf::from(value),
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown config key {other:?}"
                )))
            }
        }
        Ok(())
    }

    /// Apply every key=value line of `text` (comments with `#`, blank
    /// lines ignored). Used for partial `--config` files.
    pub fn apply_document(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("config line {}: expected key=value", lineno + 1))
            })?;
            self.apply(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Parse a complete stored config document.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = RunConfig::new(Mode::Cnn, 0, PathBuf::new(), PathBuf::new());
        let mut seen = std::collections::BTreeSet::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("config line {line:?}: expected key=value"))
            })?;
            config.apply(key.trim(), value.trim())?;
            seen.insert(key.trim().to_string());
        }
        for required in [
            "mode", "seed", "epochs", "batch", "val_fraction",
            "w_classification", "w_vae", "w_reconstruction", "w_kl",
            "resampler_bins", "resampler_alpha", "resampler_combine", "resampler_refresh_every",
            "learning_rate", "adam_beta1", "adam_beta2", "adam_epsilon",
            "data", "out",
        ] {
            if !seen.contains(required) {
                return Err(Error::InvalidConfig(format!(
                    "stored config is missing key {required:?}"
                )));
            }
        }
        Ok(config)
    }

    /// Load a stored config from a run directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text)
    }
}

fn combine_str(mode: CombineMode) -> &'static str {
    match mode {
        CombineMode::Product => "product",
        CombineMode::Max => "max",
    }
}
