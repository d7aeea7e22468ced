use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::erm::{erm_loss, register_at, WdGnnController};
use crate::error::{Error, Result};
use crate::flocking::{rollout, velocity_variation_total, FlockingConfig, Trajectory};
use crate::model::{Architecture, Nonlinearity, ParamMask, WdGnnParams};
use crate::rng::{self, label};

/// Which branches of the WD-GNN are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    WdGnn,
    /// Deep part only: α_W fixed at zero.
    GnnOnly,
    /// Wide part only: α_D fixed at zero.
    FilterOnly,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::WdGnn, ModelKind::GnnOnly, ModelKind::FilterOnly];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::WdGnn => "wdgnn",
            ModelKind::GnnOnly => "gnn",
            ModelKind::FilterOnly => "filter",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn mask(self) -> ParamMask {
        match self {
            ModelKind::WdGnn => ParamMask::all(),
            ModelKind::GnnOnly => ParamMask {
                wide: false,
                alpha_w: false,
                ..ParamMask::all()
            },
            ModelKind::FilterOnly => ParamMask {
                deep: false,
                alpha_d: false,
                ..ParamMask::all()
            },
        }
    }

    /// Random initialization with the inactive branch switched off.
    pub fn init(self, arch: &Architecture, seed: u64) -> WdGnnParams {
        let mut p = WdGnnParams::random(arch, &mut rng::stream(seed, &[label::INIT]));
        match self {
            ModelKind::WdGnn => {}
            ModelKind::GnnOnly => p.alpha_w = 0.0,
            ModelKind::FilterOnly => p.alpha_d = 0.0,
        }
        p
    }
}

/// Flocking controller shape: 6 local features in, 2 accelerations out.
pub fn flocking_architecture(hidden: usize, order: usize, layers: usize) -> Architecture {
    Architecture {
        in_features: 6,
        hidden,
        out_features: 2,
        order,
        layers,
        nonlinearity: Nonlinearity::Tanh,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Samples per batch.
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Global-norm gradient clipping threshold; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 20,
            adam: AdamConfig::default(),
            clip_norm: Some(10.0),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: u64,
    pub train_loss: f64,
    /// Mean total velocity variation of validation rollouts; infinite if a
    /// rollout diverged, absent without a validation set.
    pub valid_metric: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-validation parameters, or the last ones without a validation set.
    pub params: WdGnnParams,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Scales `g` down to global norm `max` if it is larger.
pub fn clip_global_norm(g: &mut [f64], max: f64) -> f64 {
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > max {
        let s = max / norm;
        g.iter_mut().for_each(|v| *v *= s);
    }
    norm
}

/// Mean total velocity variation of rollouts of `params` from the initial
/// states of `trajectories`. Rollouts that blow up count as infinite.
pub fn rollout_metric(params: &WdGnnParams, trajectories: &[Trajectory], cfg: &FlockingConfig) -> Result<f64> {
    let values: Vec<f64> = trajectories
        .par_iter()
        .map(|traj| {
            let mut c = WdGnnController::new(params.clone());
            match rollout(cfg, traj.states[0].clone(), &mut c) {
                Ok(t) => velocity_variation_total(&t),
                Err(e) if e.is_numeric() => Ok(f64::INFINITY),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Imitation training with ADAM.
///
/// Each epoch shuffles every (trajectory, time step) pair of the training
/// set into batches of `batch_size` pairs, one ADAM update per batch. Each
/// sample carries the graph and feature history recorded up to its step.
/// Only blocks in `mask` change.
pub fn train(
    init: WdGnnParams,
    mask: ParamMask,
    train_set: &[Trajectory],
    valid_set: &[Trajectory],
    flock: &FlockingConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if train_set.is_empty() || train_set.iter().any(Trajectory::is_empty) {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidInput("batch size must be positive".into()));
    }
    init.validate()?;
    let depth = init.temporal_depth();
    let mut params = init;
    let mut flat = params.flatten();
    let mut adam = AdamState::new(flat.len(), cfg.adam);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, WdGnnParams)> = None;

    for epoch in 1..=cfg.epochs {
        let mut r = rng::stream(cfg.seed, &[label::SHUFFLE, epoch as u64]);
        let mut pairs: Vec<(usize, usize)> = train_set
            .iter()
            .enumerate()
            .flat_map(|(i, traj)| (0..traj.len()).map(move |t| (i, t)))
            .collect();
        pairs.shuffle(&mut r);
        let (mut loss_sum, mut n_steps) = (0.0, 0u64);
        for batch in pairs.chunks(cfg.batch_size) {
            let regs = batch
                .iter()
                .map(|&(i, t)| register_at(&train_set[i], t, depth))
                .collect::<Result<Vec<_>>>()?;
            let samples: Vec<_> = regs
                .iter()
                .zip(batch)
                .map(|(reg, &(i, t))| (reg, &train_set[i].targets[t]))
                .collect();
            let (loss, grad) = erm_loss(&params, &samples).map_err(|e| diverged(adam.step, e))?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    step: adam.step as usize,
                    reason: format!("training loss became {loss}"),
                });
            }
            let mut g = grad.masked(&mask).flatten();
            if let Some(max) = cfg.clip_norm {
                clip_global_norm(&mut g, max);
            }
            adam_step(&mut adam, &mut flat, &g).map_err(|e| diverged(adam.step, e))?;
            params = params.unflatten(&flat)?;
            loss_sum += loss;
            n_steps += 1;
        }
        let valid_metric = if valid_set.is_empty() {
            None
        } else {
            Some(rollout_metric(&params, valid_set, flock)?)
        };
        history.push(EpochRecord {
            epoch,
            steps: adam.step,
            train_loss: loss_sum / n_steps as f64,
            valid_metric,
        });
        let score = valid_metric.unwrap_or(0.0);
        if best
            .as_ref()
            .is_none_or(|(b, _, _)| score < *b || valid_metric.is_none())
        {
            best = Some((score, epoch, params.clone()));
        }
    }
    let (_, best_epoch, params) = best.unwrap_or((f64::NAN, 0, params));
    Ok(TrainOutcome {
        params,
        best_epoch,
        history,
    })
}

fn diverged(step: u64, e: Error) -> Error {
    match e {
        Error::NonFinite { context } => Error::Divergence {
            step: step as usize,
            reason: context,
        },
        other => other,
    }
}
