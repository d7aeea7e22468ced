use ndarray::Array2;
use rand::Rng;

use super::dynamics::{
    build_comm_graph, clip_accelerations, local_features, optimal_controller, step_dynamics, FlockingConfig, SwarmState,
};
use crate::error::{Error, Result};
use crate::graph::{GraphSignal, SupportMatrix};

/// A closed-loop run: D states with the graph, features and expert action
/// observed at each. `states[t].accelerations` is the control applied at t.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<SwarmState>,
    pub supports: Vec<SupportMatrix>,
    pub features: Vec<GraphSignal>,
    /// Clipped optimal accelerations.
    pub targets: Vec<Array2<f64>>,
}

impl Trajectory {
    /// Rebuilds graphs, features and targets from recorded states.
    pub fn from_states(states: Vec<SwarmState>, cfg: &FlockingConfig) -> Result<Self> {
        let mut traj = Trajectory {
            supports: Vec::with_capacity(states.len()),
            features: Vec::with_capacity(states.len()),
            targets: Vec::with_capacity(states.len()),
            states: Vec::new(),
        };
        for s in &states {
            let (support, features, target) = observe(s, cfg)?;
            traj.supports.push(support);
            traj.features.push(features);
            traj.targets.push(target);
        }
        traj.states = states;
        Ok(traj)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn n_agents(&self) -> usize {
        self.states.first().map_or(0, SwarmState::n_agents)
    }

    /// Largest deviation between a recorded state and the re-integration of
    /// its predecessor under the recorded control.
    pub fn reintegration_error(&self, ts: f64) -> Result<f64> {
        let mut worst = 0.0f64;
        for w in self.states.windows(2) {
            let next = step_dynamics(&w[0], &w[0].accelerations, ts)?;
            for (a, b) in next
                .positions
                .iter()
                .chain(next.velocities.iter())
                .zip(w[1].positions.iter().chain(w[1].velocities.iter()))
            {
                worst = worst.max((a - b).abs());
            }
        }
        Ok(worst)
    }
}

fn observe(state: &SwarmState, cfg: &FlockingConfig) -> Result<(SupportMatrix, GraphSignal, Array2<f64>)> {
    let support = build_comm_graph(state, cfg.comm_radius)?;
    let features = local_features(state, &support)?;
    let target = clip_accelerations(&optimal_controller(state, cfg.potential_cutoff)?, cfg.max_accel);
    Ok((support, features, target))
}

/// What a controller sees at time t.
pub struct Observation<'a> {
    pub t: usize,
    pub state: &'a SwarmState,
    pub support: &'a SupportMatrix,
    pub features: &'a GraphSignal,
}

/// Maps observations to accelerations. Called once per step in time order;
/// outputs are clipped by the rollout.
pub trait Controller {
    fn reset(&mut self) {}
    fn control(&mut self, obs: &Observation<'_>) -> Result<Array2<f64>>;
}

/// The centralized expert.
#[derive(Debug, Clone, Copy)]
pub struct OptimalController {
    pub potential_cutoff: f64,
}

impl Controller for OptimalController {
    fn control(&mut self, obs: &Observation<'_>) -> Result<Array2<f64>> {
        optimal_controller(obs.state, self.potential_cutoff)
    }
}

/// Uniform positions in a disc of radius √N with minimum pairwise spacing,
/// and velocities uniform in `[-v, v]²`.
pub fn initial_state<R: Rng + ?Sized>(cfg: &FlockingConfig, rng: &mut R) -> Result<SwarmState> {
    cfg.validate()?;
    let n = cfg.n_agents;
    let radius = (n as f64).sqrt();
    let min2 = cfg.min_spacing * cfg.min_spacing;
    let mut positions: Vec<[f64; 2]> = Vec::with_capacity(n);
    let max_attempts = 10_000 * n;
    let mut attempts = 0;
    while positions.len() < n {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::InvalidInput(format!(
                "could not place {n} agents with spacing {} in radius {radius}",
                cfg.min_spacing
            )));
        }
        let rho = radius * rng.gen::<f64>().sqrt();
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let p = [rho * theta.cos(), rho * theta.sin()];
        let ok = positions.iter().all(|q| {
            let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
            d2 > 0.0 && d2 >= min2
        });
        if ok {
            positions.push(p);
        }
    }
    let positions = Array2::from_shape_fn((n, 2), |(i, c)| positions[i][c]);
    let v = cfg.init_speed;
    let velocities = Array2::from_shape_fn((n, 2), |_| if v > 0.0 { rng.gen_range(-v..=v) } else { 0.0 });
    SwarmState::new(positions, velocities)
}

/// Runs `controller` for D steps from `initial`.
pub fn rollout(cfg: &FlockingConfig, initial: SwarmState, controller: &mut dyn Controller) -> Result<Trajectory> {
    cfg.validate()?;
    let d = cfg.n_steps();
    controller.reset();
    let mut traj = Trajectory {
        states: Vec::with_capacity(d),
        supports: Vec::with_capacity(d),
        features: Vec::with_capacity(d),
        targets: Vec::with_capacity(d),
    };
    let mut state = initial;
    for t in 0..d {
        let (support, features, target) = observe(&state, cfg).map_err(|e| divergence(t, e))?;
        let u = controller
            .control(&Observation {
                t,
                state: &state,
                support: &support,
                features: &features,
            })
            .map_err(|e| divergence(t, e))?;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: t,
                reason: "controller produced a non-finite acceleration".into(),
            });
        }
        let u = clip_accelerations(&u, cfg.max_accel);
        let next = if t + 1 < d {
            Some(step_dynamics(&state, &u, cfg.sample_time).map_err(|e| divergence(t, e))?)
        } else {
            None
        };
        state.accelerations = u;
        traj.states.push(state);
        traj.supports.push(support);
        traj.features.push(features);
        traj.targets.push(target);
        match next {
            Some(s) => state = s,
            None => break,
        }
    }
    Ok(traj)
}

fn divergence(step: usize, e: Error) -> Error {
    match e {
        Error::NonFinite { context } => Error::Divergence { step, reason: context },
        Error::Collision { i, j } => Error::Divergence {
            step,
            reason: format!("agents {i} and {j} collided"),
        },
        other => other,
    }
}
