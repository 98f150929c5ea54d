//! Run configuration file (TOML).
//!
//! ```toml
//! seed = 7
//!
//! [vae]
//! epochs = 500
//!
//! [generator]
//! hidden = 128
//!
//! [data]
//! max_smiles_chars = 80
//! ```
//!
//! Every table and key is optional; missing values take the defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::generator::GenConfig;
use crate::vae::VaeConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Longest SMILES accepted from a pairs file.
    pub max_smiles_chars: usize,
    /// Fractions held out for validation and testing; the rest trains.
    pub valid_fraction: f64,
    pub test_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            max_smiles_chars: 80,
            valid_fraction: 0.1,
            test_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub count: usize,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig { count: 1000 }
    }
}

/// Default input and output locations; command-line paths win.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub profiles: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
    pub vae: Option<PathBuf>,
    pub generator: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub vae: VaeConfig,
    pub generator: GenConfig,
    pub data: DataConfig,
    pub generate: GenerateConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            vae: VaeConfig::default(),
            generator: GenConfig::default(),
            data: DataConfig::default(),
            generate: GenerateConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CoreError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CoreError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CoreError> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CoreError::Config(m) => CoreError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        self.vae.validate()?;
        self.generator.validate()?;
        let d = &self.data;
        let ok = |f: f64| (0.0..1.0).contains(&f);
        if !ok(d.valid_fraction) || !ok(d.test_fraction) || d.valid_fraction + d.test_fraction >= 1.0 {
            return Err(CoreError::Config("data: held-out fractions must be in [0, 1) and sum below 1".into()));
        }
        if d.max_smiles_chars == 0 || self.generate.count == 0 {
            return Err(CoreError::Config("max_smiles_chars and count must be positive".into()));
        }
        Ok(())
    }
}
