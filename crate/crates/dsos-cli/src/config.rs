//! Experiment configuration files.
//!
//! A config is strict JSON with a `format_version`, exactly one data
//! source (an inline synthesis block or a pair of CSV paths), a training
//! section, and an optional default output directory. Unknown keys are
//! rejected so typos fail loudly instead of silently using a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dsos::data::GenConfig;
use dsos::trainer::TrainConfig;
use dsos::{Error, Result};

pub const FORMAT_VERSION: &str = "1";

/// CSV locations of a pre-generated dataset. Relative paths are resolved
/// against the config file's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetPaths {
    pub train: PathBuf,
    pub test: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen: Option<GenConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetPaths>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported format_version {:?}, this build reads {FORMAT_VERSION:?}",
                self.format_version
            )));
        }
        match (&self.gen, &self.dataset) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "config has both a gen block and dataset paths; keep exactly one".to_string(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "config needs a data source: either a gen block or dataset paths".to_string(),
                ))
            }
            _ => {}
        }
        if let Some(gen) = &self.gen {
            gen.validate()?;
        }
        if let Some(train) = &self.train {
            train.validate()?;
        }
        Ok(())
    }

    /// The training section, which `train` runs require.
    pub fn train_section(&self) -> Result<&TrainConfig> {
        self.train
            .as_ref()
            .ok_or_else(|| Error::Config("config has no train section".to_string()))
    }
}

/// Reads, parses, and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = dsos::textio::read_input(path)?;
    let config: ExperimentConfig = serde_json::from_str(&text)?;
    config.validate()?;
    Ok(config)
}

/// Resolves a possibly relative dataset path against the config file's
/// directory.
pub fn resolve_path(config_path: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        match config_path.parent() {
            Some(dir) if !dir.as_os_str().is_empty() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }
}
