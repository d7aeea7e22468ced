use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::flocking::FlockingConfig;
use crate::model::Architecture;
use crate::online::OnlineConfig;
use crate::training::{flocking_architecture, AdamConfig, SplitSizes, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden features G of the deep part.
    pub hidden: usize,
    /// Filter order K.
    pub order: usize,
    /// Deep layers L.
    pub layers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clip_norm: Option<f64>,
}

impl TrainingConfig {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                beta1: self.beta1,
                beta2: self.beta2,
                epsilon: self.epsilon,
            },
            clip_norm: self.clip_norm,
            seed,
        }
    }
}

/// Everything an experiment command needs. Serialized in full into every
/// run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; data, initialization and shuffling streams derive from it.
    pub seed: u64,
    pub flocking: FlockingConfig,
    pub dataset: SplitSizes,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub online: OnlineConfig,
    /// Dataset realizations averaged by the `table` command.
    pub realizations: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentConfig {
    /// Small enough to train in seconds: 25 agents, 40/8/8 trajectories,
    /// 10 epochs.
    pub fn desk() -> Self {
        let adam = AdamConfig::default();
        Self {
            seed: 1,
            flocking: FlockingConfig::default(),
            dataset: SplitSizes {
                train: 40,
                valid: 8,
                test: 8,
            },
            model: ModelConfig {
                hidden: 32,
                order: 3,
                layers: 1,
            },
            training: TrainingConfig {
                epochs: 10,
                batch_size: 20,
                learning_rate: adam.learning_rate,
                beta1: adam.beta1,
                beta2: adam.beta2,
                epsilon: adam.epsilon,
                clip_norm: Some(10.0),
            },
            online: OnlineConfig::default(),
            realizations: 3,
        }
    }

    /// Full scale: 50 agents, 400/40/40 trajectories, 30 epochs,
    /// 5 realizations.
    pub fn full() -> Self {
        let mut cfg = Self::desk();
        cfg.flocking.n_agents = 50;
        cfg.dataset = SplitSizes {
            train: 400,
            valid: 40,
            test: 40,
        };
        cfg.training.epochs = 30;
        cfg.realizations = 5;
        cfg
    }

    pub fn architecture(&self) -> Architecture {
        flocking_architecture(self.model.hidden, self.model.order, self.model.layers)
    }

    pub fn validate(&self) -> Result<()> {
        self.flocking.validate()?;
        self.online.validate()?;
        if self.model.hidden == 0 || self.model.layers == 0 {
            return Err(Error::InvalidInput(
                "the deep part needs at least one layer of positive width".into(),
            ));
        }
        if self.dataset.train == 0 {
            return Err(Error::InvalidInput(
                "at least one training trajectory is required".into(),
            ));
        }
        if self.training.batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be positive".into()));
        }
        if self.realizations == 0 {
            return Err(Error::InvalidInput("at least one realization is required".into()));
        }
        Ok(())
    }

    /// Overlays the keys present in `patch` onto this config. Nested objects
    /// merge key by key, so a file may set only the fields it cares about.
    pub fn merged(&self, patch: &Value) -> Result<Self> {
        let mut base = serde_json::to_value(self)?;
        merge(&mut base, patch);
        Ok(serde_json::from_value(base)?)
    }

    pub fn merged_file(&self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let patch: Value = serde_json::from_str(&text)?;
        if !patch.is_object() {
            return Err(Error::parse(
                path.display().to_string(),
                "config file must hold a JSON object",
            ));
        }
        self.merged(&patch)
    }
}

fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}
