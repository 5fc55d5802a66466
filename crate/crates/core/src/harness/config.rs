use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::generate::{random_instance, GeneratorSpec};
use super::HarnessError;
use crate::adversary::Shape;
use crate::agents::PolicyName;
use crate::model::{HcbInstance, Mode};
use crate::rng::{Purpose, StreamKey};

/// Where the instance comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSource {
    Path(PathBuf),
    Generator(GeneratorSpec),
}

/// Run the algorithms against a lower-bound family built from the instance's
/// `(α, p, q)` instead of its own reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarySettings {
    pub shape: Shape,
    /// A single member; the worst member per cell when omitted.
    #[serde(default)]
    pub member: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instance: InstanceSource,
    pub algorithms: Vec<PolicyName>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    pub t_grid: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    #[serde(default)]
    pub adversary: Option<AdversarySettings>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_mode() -> Mode {
    Mode::Nmc
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })
}

impl ExperimentConfig {
    /// Reads and validates a config file. Relative paths inside it are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let mut config: ExperimentConfig = read_json(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        if let InstanceSource::Path(p) = &mut config.instance {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(out) = &mut config.out {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.reps < 2 {
            return Err(HarnessError::Replications(self.reps));
        }
        if self.t_grid.is_empty() {
            return Err(HarnessError::EmptyGrid);
        }
        if self.t_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::GridOrder);
        }
        if self.algorithms.is_empty() {
            return Err(HarnessError::NoAlgorithms);
        }
        Ok(())
    }

    pub fn instance(&self) -> Result<HcbInstance, HarnessError> {
        match &self.instance {
            InstanceSource::Path(p) => read_json(p),
            InstanceSource::Generator(spec) => {
                let mut rng = StreamKey::new(self.seed, 0, 0, Purpose::Generator).stream();
                random_instance(spec, &mut rng)
            }
        }
    }
}
