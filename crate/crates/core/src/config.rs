//! Run configuration shared by the command line and the examples.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::LabeledExample;
use crate::error::{Error, Result};
use crate::model::{self, Head, Loss, Network, TrainConfig, TrainOutcome, TrainingData};
use crate::rng::{derive_seed, stream};
use crate::smoothing::SmoothingParams;
use crate::surrogate::{self, CountsDataset};
use crate::data::SyntheticSpec;

/// Environment variable that replaces the master seed.
pub const SEED_ENV: &str = "CERTSMOOTH_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoothingConfig {
    pub sigma: f64,
    /// Samples per certification.
    pub n: u64,
    pub n0: u64,
    pub alpha: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self { sigma: 0.25, n: 10_000, n0: 100, alpha: 0.001 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaseConfig {
    pub hidden: Vec<usize>,
    /// `gaussian_augmentation` is filled in from the smoothing sigma when unset.
    pub train: TrainConfig,
}

impl Default for BaseConfig {
    fn default() -> Self {
        Self { hidden: vec![64, 64], train: TrainConfig { epochs: 60, ..TrainConfig::default() } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateConfig {
    pub hidden: Vec<usize>,
    /// Noisy samples per training input when building the counts dataset.
    pub sample_n: u64,
    pub train: TrainConfig,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self { hidden: vec![64, 64], sample_n: 10_000, train: TrainConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Directory holding every artifact of the run.
    pub out_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self { out_dir: PathBuf::from("run") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed for sampling, certification and weight initialisation.
    pub seed: u64,
    pub data: SyntheticSpec,
    pub smoothing: SmoothingConfig,
    pub base: BaseConfig,
    pub surrogate: SurrogateConfig,
    pub paths: PathsConfig,
}

fn check_hidden(name: &str, hidden: &[usize]) -> Result<()> {
    if hidden.contains(&0) {
        return Err(Error::Config(format!("{name}.hidden widths must be positive")));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Replaces the master seed with `CERTSMOOTH_SEED` when it is set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            self.seed = raw
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}=`{raw}` is not a u64")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.smoothing_params()?;
        self.base.train.validate()?;
        self.surrogate.train.validate()?;
        check_hidden("base", &self.base.hidden)?;
        check_hidden("surrogate", &self.surrogate.hidden)?;
        if self.surrogate.sample_n == 0 {
            return Err(Error::Config("surrogate.sample_n must be at least 1".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of every field except the paths.
    pub fn config_hash(&self) -> String {
        let semantic = RunConfig { paths: PathsConfig { out_dir: PathBuf::new() }, ..self.clone() };
        let digest = Sha256::digest(semantic.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn smoothing_params(&self) -> Result<SmoothingParams> {
        let s = &self.smoothing;
        SmoothingParams::new(s.sigma, s.n, s.n0, s.alpha, self.seed)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn base_train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: derive_seed(self.seed, &[stream::WEIGHT_INIT, 0, self.base.train.seed]),
            gaussian_augmentation: self.base.train.gaussian_augmentation.or(Some(self.smoothing.sigma)),
            ..self.base.train.clone()
        }
    }

    pub fn surrogate_train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: derive_seed(self.seed, &[stream::WEIGHT_INIT, 1, self.surrogate.train.seed]),
            ..self.surrogate.train.clone()
        }
    }

    /// Cross-entropy training of the base classifier with Gaussian noise
    /// augmentation.
    pub fn train_base(&self, train: &[LabeledExample], num_classes: usize) -> Result<TrainOutcome> {
        let first = train.first().ok_or_else(|| Error::invalid("empty training set"))?;
        let cfg = self.base_train_config();
        let mut dims = vec![first.features.len()];
        dims.extend_from_slice(&self.base.hidden);
        dims.push(num_classes);
        let net = Network::new(&dims, Head::Classifier, cfg.seed)?;
        let labels: Vec<usize> = train.iter().map(|e| e.label).collect();
        let data = TrainingData::labeled(train.iter().map(|e| e.features.clone()).collect(), &labels, num_classes)?;
        model::train(net, &data, Loss::CrossEntropy, &cfg)
    }

    /// Counts dataset over `train` at `surrogate.sample_n` samples.
    pub fn sample_counts(&self, f: &Network, train: &[LabeledExample]) -> Result<CountsDataset> {
        surrogate::build_counts_dataset(f, train, self.smoothing.sigma, self.surrogate.sample_n, self.seed)
    }

    pub fn train_surrogate(&self, dataset: &CountsDataset, train: &[LabeledExample]) -> Result<TrainOutcome> {
        surrogate::train_surrogate(dataset, train, &self.surrogate.hidden, &self.surrogate_train_config())
    }

    /// File name tag for per-sigma artifacts, e.g. `s0.25`.
    pub fn sigma_tag(&self) -> String {
        format!("s{}", self.smoothing.sigma)
    }
}
