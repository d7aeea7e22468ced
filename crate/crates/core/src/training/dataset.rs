use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flocking::{self, initial_state, rollout, FlockingConfig, OptimalController, Trajectory};
use crate::rng::{self, label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSizes {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

/// Expert trajectories split three ways.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub config: FlockingConfig,
    pub seed: u64,
    pub train: Vec<Trajectory>,
    pub valid: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub config: FlockingConfig,
    pub seed: u64,
    pub sizes: SplitSizes,
    pub files: Vec<String>,
}

const FORMAT: &str = "wdgnn-flocking-dataset-v1";
const SPLITS: [(&str, u64); 3] = [
    ("train", label::TRAIN_SPLIT),
    ("valid", label::VALID_SPLIT),
    ("test", label::TEST_SPLIT),
];

/// One expert trajectory; the initial condition depends only on
/// `(seed, split, index)`.
pub fn expert_trajectory(cfg: &FlockingConfig, seed: u64, split: u64, index: usize) -> Result<Trajectory> {
    let mut r = rng::stream(seed, &[label::DATA, split, index as u64]);
    let s0 = initial_state(cfg, &mut r)?;
    rollout(
        cfg,
        s0,
        &mut OptimalController {
            potential_cutoff: cfg.potential_cutoff,
        },
    )
}

fn generate_split(cfg: &FlockingConfig, seed: u64, split: u64, count: usize) -> Result<Vec<Trajectory>> {
    (0..count)
        .into_par_iter()
        .map(|i| expert_trajectory(cfg, seed, split, i))
        .collect()
}

impl Dataset {
    pub fn generate(cfg: &FlockingConfig, sizes: SplitSizes, seed: u64) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            config: *cfg,
            seed,
            train: generate_split(cfg, seed, label::TRAIN_SPLIT, sizes.train)?,
            valid: generate_split(cfg, seed, label::VALID_SPLIT, sizes.valid)?,
            test: generate_split(cfg, seed, label::TEST_SPLIT, sizes.test)?,
        })
    }

    pub fn sizes(&self) -> SplitSizes {
        SplitSizes {
            train: self.train.len(),
            valid: self.valid.len(),
            test: self.test.len(),
        }
    }

    fn split(&self, name: &str) -> &[Trajectory] {
        match name {
            "train" => &self.train,
            "valid" => &self.valid,
            _ => &self.test,
        }
    }

    /// Writes one CSV per trajectory plus `manifest.json`.
    pub fn save(&self, dir: &Path) -> Result<DatasetManifest> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = Vec::new();
        for (name, _) in SPLITS {
            for (i, traj) in self.split(name).iter().enumerate() {
                let file = format!("{name}_{i:04}.csv");
                let path = dir.join(&file);
                std::fs::write(&path, flocking::io::write_states_csv(&traj.states)).map_err(|e| Error::io(&path, e))?;
                files.push(file);
            }
        }
        let manifest = DatasetManifest {
            format: FORMAT.into(),
            config: self.config,
            seed: self.seed,
            sizes: self.sizes(),
            files,
        };
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        if manifest.format != FORMAT {
            return Err(Error::parse(
                "dataset manifest",
                format!("unknown format {:?}", manifest.format),
            ));
        }
        manifest.config.validate()?;
        let counts = [manifest.sizes.train, manifest.sizes.valid, manifest.sizes.test];
        let mut splits: Vec<Vec<Trajectory>> = Vec::new();
        for ((name, _), count) in SPLITS.iter().zip(counts) {
            let split = (0..count)
                .into_par_iter()
                .map(|i| {
                    let path = dir.join(format!("{name}_{i:04}.csv"));
                    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                    let states = flocking::io::read_states_csv(&text)?;
                    if states.first().map(|s| s.n_agents()) != Some(manifest.config.n_agents) {
                        return Err(Error::parse(
                            path.display().to_string(),
                            "agent count disagrees with manifest",
                        ));
                    }
                    Trajectory::from_states(states, &manifest.config)
                })
                .collect::<Result<Vec<_>>>()?;
            splits.push(split);
        }
        let test = splits.pop().expect("three splits");
        let valid = splits.pop().expect("three splits");
        let train = splits.pop().expect("three splits");
        Ok(Self {
            config: manifest.config,
            seed: manifest.seed,
            train,
            valid,
            test,
        })
    }
}
