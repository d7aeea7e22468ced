use ndarray::Array2;

use super::dynamics::SwarmState;
use super::rollout::Trajectory;
use crate::error::{check_dim, Error, Result};
use crate::graph::SupportMatrix;

/// `(1/N) Σ_i ‖v_i − v̄‖²` over the given rows of `v`.
fn variance_of(v: &Array2<f64>, rows: &[usize]) -> f64 {
    let n = rows.len() as f64;
    let mut mean = [0.0; 2];
    for &i in rows {
        mean[0] += v[[i, 0]];
        mean[1] += v[[i, 1]];
    }
    mean = [mean[0] / n, mean[1] / n];
    rows.iter()
        .map(|&i| (v[[i, 0]] - mean[0]).powi(2) + (v[[i, 1]] - mean[1]).powi(2))
        .sum::<f64>()
        / n
}

/// Velocity variation of one state.
pub fn velocity_variation(velocities: &Array2<f64>) -> f64 {
    let rows: Vec<usize> = (0..velocities.nrows()).collect();
    variance_of(velocities, &rows)
}

/// Sum of the per-step velocity variation over every stored state.
pub fn velocity_variation_total(traj: &Trajectory) -> Result<f64> {
    if traj.states.is_empty() {
        return Err(Error::InvalidInput("empty trajectory".into()));
    }
    Ok(traj.states.iter().map(|s| velocity_variation(&s.velocities)).sum())
}

/// Velocity variation of the last stored state.
pub fn velocity_variation_final(traj: &Trajectory) -> Result<f64> {
    traj.states
        .last()
        .map(|s| velocity_variation(&s.velocities))
        .ok_or_else(|| Error::InvalidInput("empty trajectory".into()))
}

/// Variance of the predicted next-step velocities `v + u·T_s` over `rows`,
/// with its gradient with respect to `u` (zero outside `rows`).
fn predicted_variance(state: &SwarmState, u: &Array2<f64>, ts: f64, rows: &[usize]) -> (f64, Array2<f64>) {
    let next = &state.velocities + &(u * ts);
    let loss = variance_of(&next, rows);
    let n = rows.len() as f64;
    let mut mean = [0.0; 2];
    for &i in rows {
        mean[0] += next[[i, 0]];
        mean[1] += next[[i, 1]];
    }
    mean = [mean[0] / n, mean[1] / n];
    let mut grad = Array2::zeros(u.dim());
    for &i in rows {
        for c in 0..2 {
            grad[[i, c]] = 2.0 / n * (next[[i, c]] - mean[c]) * ts;
        }
    }
    (loss, grad)
}

fn check_controls(state: &SwarmState, u: &Array2<f64>) -> Result<()> {
    check_dim("control rows", state.n_agents(), u.nrows())?;
    check_dim("control columns", 2, u.ncols())
}

/// Velocity variation across all agents one step ahead under controls `u`.
pub fn instantaneous_loss_centralized(state: &SwarmState, u: &Array2<f64>, ts: f64) -> Result<(f64, Array2<f64>)> {
    check_controls(state, u)?;
    let rows: Vec<usize> = (0..state.n_agents()).collect();
    Ok(predicted_variance(state, u, ts, &rows))
}

/// Same quadratic restricted to node `i` and its current neighbors.
pub fn instantaneous_loss_local(
    i: usize,
    state: &SwarmState,
    u: &Array2<f64>,
    s: &SupportMatrix,
    ts: f64,
) -> Result<(f64, Array2<f64>)> {
    check_controls(state, u)?;
    check_dim("support vs swarm size", state.n_agents(), s.n_nodes())?;
    if i >= state.n_agents() {
        return Err(Error::InvalidNode {
            node: i,
            n_nodes: state.n_agents(),
        });
    }
    let mut rows: Vec<usize> = s.neighbors(i).collect();
    rows.push(i);
    rows.sort_unstable();
    Ok(predicted_variance(state, u, ts, &rows))
}
