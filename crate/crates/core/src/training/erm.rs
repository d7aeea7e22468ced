use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::flocking::{Controller, Observation, Trajectory};
use crate::graph::ShiftRegister;
use crate::model::{forward, grad_all, wdgnn_forward_delayed, Frames, WdGnnParams};

/// The history a deployed controller holds at step `t` of `traj`: the last
/// `depth + 1` graphs and feature signals, or fewer near the start.
pub fn register_at(traj: &Trajectory, t: usize, depth: usize) -> Result<ShiftRegister> {
    if t >= traj.len() {
        return Err(Error::InvalidInput(format!(
            "step {t} beyond trajectory of length {}",
            traj.len()
        )));
    }
    let mut reg = ShiftRegister::new(depth);
    for k in t.saturating_sub(depth)..=t {
        reg.push(traj.supports[k].clone(), traj.features[k].clone())?;
    }
    Ok(reg)
}

/// Mean over `batch` of `(1/N)‖Ψ − U*‖²`, with its gradient.
pub fn erm_loss(params: &WdGnnParams, batch: &[(&ShiftRegister, &Array2<f64>)]) -> Result<(f64, WdGnnParams)> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let per_sample: Vec<(f64, WdGnnParams)> = batch
        .par_iter()
        .map(|(reg, target)| {
            let (out, tape) = forward(Frames::Delayed(reg), params)?;
            let out = out.into_array();
            check_dim("target rows", out.nrows(), target.nrows())?;
            check_dim("target columns", out.ncols(), target.ncols())?;
            let n = out.nrows() as f64;
            let residual = &out - *target;
            let loss = residual.iter().map(|r| r * r).sum::<f64>() / n;
            let grad = grad_all(&tape, params, &(residual * (2.0 / n)))?;
            Ok((loss, grad))
        })
        .collect::<Result<_>>()?;

    // Reduce in batch order so the result does not depend on scheduling.
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut total = vec![0.0; params.n_params()];
    for (l, g) in &per_sample {
        loss += l;
        for (t, v) in total.iter_mut().zip(g.flatten()) {
            *t += v;
        }
    }
    total.iter_mut().for_each(|v| *v *= scale);
    Ok((loss * scale, params.unflatten(&total)?))
}

/// Runs a WD-GNN as a controller with delayed filters, keeping its own
/// history of graphs and features.
#[derive(Debug, Clone)]
pub struct WdGnnController {
    pub params: WdGnnParams,
    register: ShiftRegister,
}

impl WdGnnController {
    pub fn new(params: WdGnnParams) -> Self {
        let register = ShiftRegister::new(params.temporal_depth());
        Self { params, register }
    }

    pub fn register(&self) -> &ShiftRegister {
        &self.register
    }

    /// Records the observation in the history without computing an output.
    pub fn observe(&mut self, obs: &Observation<'_>) -> Result<()> {
        self.register.push(obs.support.clone(), obs.features.clone())
    }
}

impl Controller for WdGnnController {
    fn reset(&mut self) {
        self.register = ShiftRegister::new(self.params.temporal_depth());
    }

    fn control(&mut self, obs: &Observation<'_>) -> Result<Array2<f64>> {
        self.observe(obs)?;
        Ok(wdgnn_forward_delayed(&self.register, &self.params)?.0.into_array())
    }
}
