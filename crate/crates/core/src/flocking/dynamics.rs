use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::graph::{GraphSignal, SupportMatrix};

/// Parameters of one flocking scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlockingConfig {
    pub n_agents: usize,
    /// Communication radius r (m).
    pub comm_radius: f64,
    /// Initial velocities are uniform in `[-v, v]²` (m/s).
    pub init_speed: f64,
    /// Trajectory duration T (s).
    pub duration: f64,
    /// Sampling time T_s (s).
    pub sample_time: f64,
    /// Collision-avoidance cutoff ρ (m).
    pub potential_cutoff: f64,
    /// Minimum initial distance between agents (m).
    pub min_spacing: f64,
    /// Componentwise acceleration bound (m/s²).
    pub max_accel: f64,
}

impl Default for FlockingConfig {
    fn default() -> Self {
        Self {
            n_agents: 25,
            comm_radius: 2.0,
            init_speed: 3.0,
            duration: 2.0,
            sample_time: 0.01,
            potential_cutoff: 1.0,
            min_spacing: 0.1,
            max_accel: 10.0,
        }
    }
}

impl FlockingConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("comm_radius", self.comm_radius),
            ("duration", self.duration),
            ("sample_time", self.sample_time),
            ("potential_cutoff", self.potential_cutoff),
            ("max_accel", self.max_accel),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.init_speed.is_finite() && self.init_speed >= 0.0) {
            return Err(Error::InvalidInput("init_speed must be non-negative".into()));
        }
        if !(self.min_spacing.is_finite() && self.min_spacing >= 0.0) {
            return Err(Error::InvalidInput("min_spacing must be non-negative".into()));
        }
        if self.n_agents == 0 {
            return Err(Error::InvalidInput("n_agents must be positive".into()));
        }
        let steps = self.duration / self.sample_time;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) || steps.round() < 1.0 {
            return Err(Error::InvalidInput(format!(
                "sample_time {} does not divide duration {}",
                self.sample_time, self.duration
            )));
        }
        Ok(())
    }

    /// D = T / T_s.
    pub fn n_steps(&self) -> usize {
        (self.duration / self.sample_time).round() as usize
    }
}

/// Positions, velocities and accelerations of every agent, one row each.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub positions: Array2<f64>,
    pub velocities: Array2<f64>,
    pub accelerations: Array2<f64>,
}

impl SwarmState {
    pub fn new(positions: Array2<f64>, velocities: Array2<f64>) -> Result<Self> {
        check_dim("position columns", 2, positions.ncols())?;
        check_dim("velocity columns", 2, velocities.ncols())?;
        check_dim("velocity rows", positions.nrows(), velocities.nrows())?;
        let n = positions.nrows();
        let state = Self {
            positions,
            velocities,
            accelerations: Array2::zeros((n, 2)),
        };
        state.check_finite("swarm state")?;
        Ok(state)
    }

    pub fn n_agents(&self) -> usize {
        self.positions.nrows()
    }

    pub fn mean_velocity(&self) -> [f64; 2] {
        let n = self.n_agents() as f64;
        let mut m = [0.0; 2];
        for row in self.velocities.rows() {
            m[0] += row[0];
            m[1] += row[1];
        }
        [m[0] / n, m[1] / n]
    }

    fn check_finite(&self, context: &str) -> Result<()> {
        let finite = self.positions.iter().all(|v| v.is_finite())
            && self.velocities.iter().all(|v| v.is_finite())
            && self.accelerations.iter().all(|v| v.is_finite());
        if finite {
            Ok(())
        } else {
            Err(Error::NonFinite {
                context: context.into(),
            })
        }
    }
}

/// Double-integrator update with `u` held constant over one sampling period.
/// The new state records `u`.
pub fn step_dynamics(state: &SwarmState, u: &Array2<f64>, ts: f64) -> Result<SwarmState> {
    check_dim("acceleration rows", state.n_agents(), u.nrows())?;
    check_dim("acceleration columns", 2, u.ncols())?;
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "accelerations".into(),
        });
    }
    let next = SwarmState {
        positions: &state.positions + &(&state.velocities * ts) + &(u * (0.5 * ts * ts)),
        velocities: &state.velocities + &(u * ts),
        accelerations: u.clone(),
    };
    next.check_finite("swarm state after step")?;
    Ok(next)
}

/// Componentwise clip to `[-max, max]`.
pub fn clip_accelerations(u: &Array2<f64>, max: f64) -> Array2<f64> {
    u.mapv(|v| v.clamp(-max, max))
}

fn diff(state: &SwarmState, i: usize, j: usize) -> [f64; 2] {
    let (pi, pj) = (state.positions.row(i), state.positions.row(j));
    [pi[0] - pj[0], pi[1] - pj[1]]
}

fn sq_norm(d: [f64; 2]) -> f64 {
    d[0] * d[0] + d[1] * d[1]
}

/// Binary adjacency with an edge iff `0 < ‖p_i − p_j‖ ≤ r`.
pub fn build_comm_graph(state: &SwarmState, r: f64) -> Result<SupportMatrix> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::InvalidInput(format!(
            "communication radius must be positive, got {r}"
        )));
    }
    let n = state.n_agents();
    let r2 = r * r;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let d2 = sq_norm(diff(state, i, j));
            if d2 == 0.0 {
                return Err(Error::Collision { i, j });
            }
            if d2 <= r2 {
                edges.push((i, j));
            }
        }
    }
    SupportMatrix::from_undirected_edges(n, &edges)
}

/// Collision-avoidance potential between two positions.
pub fn potential(pi: ArrayView1<'_, f64>, pj: ArrayView1<'_, f64>, rho: f64) -> f64 {
    let d2 = sq_norm([pi[0] - pj[0], pi[1] - pj[1]]);
    if d2 <= rho * rho {
        1.0 / d2 - d2.ln()
    } else {
        1.0 / (rho * rho) - (rho * rho).ln()
    }
}

/// Gradient of the potential with respect to `p_i`, given `d = p_i − p_j`.
pub fn potential_grad(d: [f64; 2], rho: f64) -> [f64; 2] {
    let d2 = sq_norm(d);
    if d2 > rho * rho {
        return [0.0, 0.0];
    }
    let c = -2.0 / (d2 * d2) - 2.0 / d2;
    [c * d[0], c * d[1]]
}

/// Centralized optimal acceleration over all pairs, before clipping.
pub fn optimal_controller(state: &SwarmState, rho: f64) -> Result<Array2<f64>> {
    let n = state.n_agents();
    let mut u = Array2::zeros((n, 2));
    let vbar = state.mean_velocity();
    for i in 0..n {
        let vi = state.velocities.row(i);
        // Σ_j (v_i − v_j) = N (v_i − v̄)
        u[[i, 0]] = -(n as f64) * (vi[0] - vbar[0]);
        u[[i, 1]] = -(n as f64) * (vi[1] - vbar[1]);
        for j in 0..n {
            if j == i {
                continue;
            }
            let d = diff(state, i, j);
            if sq_norm(d) == 0.0 {
                return Err(Error::Collision {
                    i: i.min(j),
                    j: i.max(j),
                });
            }
            let g = potential_grad(d, rho);
            u[[i, 0]] -= g[0];
            u[[i, 1]] -= g[1];
        }
    }
    Ok(u)
}

/// Per-agent features over current neighbors:
/// `[Σ(v_i−v_j), Σ(p_i−p_j)/‖·‖⁴, Σ(p_i−p_j)/‖·‖²]`.
pub fn local_features(state: &SwarmState, s: &SupportMatrix) -> Result<GraphSignal> {
    let n = state.n_agents();
    check_dim("support vs swarm size", n, s.n_nodes())?;
    let mut x = Array2::zeros((n, 6));
    for i in 0..n {
        for j in s.neighbors(i) {
            let d = diff(state, i, j);
            let d2 = sq_norm(d);
            if d2 == 0.0 {
                return Err(Error::Collision {
                    i: i.min(j),
                    j: i.max(j),
                });
            }
            let (vi, vj) = (state.velocities.row(i), state.velocities.row(j));
            x[[i, 0]] += vi[0] - vj[0];
            x[[i, 1]] += vi[1] - vj[1];
            x[[i, 2]] += d[0] / (d2 * d2);
            x[[i, 3]] += d[1] / (d2 * d2);
            x[[i, 4]] += d[0] / d2;
            x[[i, 5]] += d[1] / d2;
        }
    }
    GraphSignal::new(x)
}
