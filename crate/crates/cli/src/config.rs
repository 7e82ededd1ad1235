//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the directory holding the config file. Unknown keys are
//! errors.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use reconsal_core::autoencoder::{AutoencoderConfig, TrainConfig};
use reconsal_core::dataset::SplitConfig;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    pub normal_classes: BTreeSet<u8>,
    pub novel_classes: BTreeSet<u8>,
    pub train_count: usize,
    pub val_count: usize,
    pub latent_dim: usize,
    /// Candidates tried in order; the lowest final validation loss wins.
    pub learning_rates: Vec<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub k_values: Vec<usize>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let split = SplitConfig::default();
        let train = TrainConfig::default();
        Self {
            train_images: "train-images-idx3-ubyte".into(),
            train_labels: "train-labels-idx1-ubyte".into(),
            test_images: "t10k-images-idx3-ubyte".into(),
            test_labels: "t10k-labels-idx1-ubyte".into(),
            normal_classes: split.normal_classes,
            novel_classes: split.novel_classes,
            train_count: split.train_count,
            val_count: split.val_count,
            latent_dim: 64,
            learning_rates: vec![1e-1, 3e-2, 1e-2],
            epochs: train.epochs,
            batch_size: train.batch_size,
            momentum: train.momentum,
            k_values: vec![5, 10],
            output_dir: "runs/default".into(),
            seed: 0,
            workers: 1,
        }
    }
}

fn parse_list<T: std::str::FromStr>(value: &str) -> Result<Vec<T>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| format!("bad list element {s:?}")))
        .collect()
}

fn parse_one<T: std::str::FromStr>(value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("bad value {value:?}"))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text; relative paths are joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut config = RunConfig::default();
        for p in [
            &mut config.train_images,
            &mut config.train_labels,
            &mut config.test_images,
            &mut config.test_labels,
            &mut config.output_dir,
        ] {
            *p = base.join(&*p);
        }
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| ConfigError::Line { line: i + 1, message };
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key {key}")));
            }
            let path = || base.join(value);
            let result: Result<(), String> = (|| {
                match key {
                    "train_images" => config.train_images = path(),
                    "train_labels" => config.train_labels = path(),
                    "test_images" => config.test_images = path(),
                    "test_labels" => config.test_labels = path(),
                    "normal_classes" => config.normal_classes = parse_list(value)?.into_iter().collect(),
                    "novel_classes" => config.novel_classes = parse_list(value)?.into_iter().collect(),
                    "train_count" => config.train_count = parse_one(value)?,
                    "val_count" => config.val_count = parse_one(value)?,
                    "latent_dim" => config.latent_dim = parse_one(value)?,
                    "learning_rates" => config.learning_rates = parse_list(value)?,
                    "epochs" => config.epochs = parse_one(value)?,
                    "batch_size" => config.batch_size = parse_one(value)?,
                    "momentum" => config.momentum = parse_one(value)?,
                    "k_values" => config.k_values = parse_list(value)?,
                    "output_dir" => config.output_dir = path(),
                    "seed" => config.seed = parse_one(value)?,
                    "workers" => config.workers = parse_one(value)?,
                    other => return Err(format!("unknown key {other:?}")),
                }
                Ok(())
            })();
            result.map_err(err)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.split_config()
            .validate_classes()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.novel_classes.is_empty() {
            return invalid("no novel classes");
        }
        if self.learning_rates.is_empty() || self.learning_rates.iter().any(|lr| !(*lr >= 0.0)) {
            return invalid("learning_rates must be a nonempty list of nonnegative numbers");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.workers == 0 || self.latent_dim == 0 {
            return invalid("epochs, batch_size, workers and latent_dim must be positive");
        }
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return invalid("k_values must be a nonempty list of positive integers");
        }
        let mut ks = self.k_values.clone();
        ks.sort_unstable();
        ks.dedup();
        if ks.len() != self.k_values.len() {
            return invalid("k_values contains duplicates");
        }
        Ok(())
    }

    /// Checks the dataset files the given command needs.
    pub fn check_paths(&self, paths: &[&Path]) -> Result<(), ConfigError> {
        match paths.iter().find(|p| !p.is_file()) {
            Some(p) => Err(ConfigError::Invalid(format!("missing file {}", p.display()))),
            None => Ok(()),
        }
    }

    pub fn split_config(&self) -> SplitConfig {
        SplitConfig {
            normal_classes: self.normal_classes.clone(),
            novel_classes: self.novel_classes.clone(),
            train_count: self.train_count,
            val_count: self.val_count,
            shuffle_seed: self.seed,
        }
    }

    pub fn autoencoder_config(&self) -> AutoencoderConfig {
        AutoencoderConfig::mnist(self.latent_dim, self.seed.wrapping_add(1))
    }

    /// Training settings for one candidate rate (the first by default).
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rates[0],
            epochs: self.epochs,
            batch_size: self.batch_size,
            momentum: self.momentum,
            seed: self.seed.wrapping_add(2),
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.output_dir.join("model.ckpt")
    }

    pub fn eval_csv_path(&self) -> PathBuf {
        self.output_dir.join("eval.csv")
    }
}
