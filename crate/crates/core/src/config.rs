//! The JSON run configuration shared by every pipeline command.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{PreprocessMode, Split};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::training::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Dataset tree written by the generator or laid out by hand.
    pub root: Option<PathBuf>,
    /// Tubelet cache; defaults to `<root>/cache/<preprocess>`.
    pub cache_dir: Option<PathBuf>,
    /// Window length cached by preprocessing. Models may use a prefix.
    pub sequence_length: usize,
    pub stride: usize,
    pub preprocess: PreprocessMode,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            root: None,
            cache_dir: None,
            sequence_length: 5,
            stride: 5,
            preprocess: PreprocessMode::Landmark,
        }
    }
}

impl DatasetConfig {
    pub fn root(&self) -> Result<&Path> {
        self.root
            .as_deref()
            .ok_or_else(|| Error::Config("dataset.root is not set".into()))
    }

    pub fn cache_dir(&self) -> Result<PathBuf> {
        match &self.cache_dir {
            Some(d) => Ok(d.clone()),
            None => Ok(self.root()?.join("cache").join(self.preprocess.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub split: Split,
    pub threshold: f64,
    pub batch_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            split: Split::Test,
            threshold: 0.5,
            batch_size: 16,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Parses a config file; every missing field takes its default.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json("run config", e))?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.dataset.sequence_length == 0 || self.dataset.stride == 0 {
            return Err(Error::Config(
                "dataset.sequence_length and dataset.stride must be >= 1".into(),
            ));
        }
        if self.model.sequence_length > self.dataset.sequence_length {
            return Err(Error::Config(format!(
                "model.sequence_length {} exceeds dataset.sequence_length {}",
                self.model.sequence_length, self.dataset.sequence_length
            )));
        }
        if !(0.0..=1.0).contains(&self.eval.threshold) || self.eval.batch_size == 0 {
            return Err(Error::Config(
                "eval.threshold must lie in [0, 1] and eval.batch_size be >= 1".into(),
            ));
        }
        Ok(())
    }
}
