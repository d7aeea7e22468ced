//! Flocking testbed: double-integrator agents that must agree on a common
//! velocity while avoiding collisions, communicating over a proximity graph.

mod dynamics;
pub mod io;
mod metrics;
mod rollout;

pub use dynamics::{
    build_comm_graph, clip_accelerations, local_features, optimal_controller, potential, potential_grad, step_dynamics,
    FlockingConfig, SwarmState,
};
pub use metrics::{
    instantaneous_loss_centralized, instantaneous_loss_local, velocity_variation, velocity_variation_final,
    velocity_variation_total,
};
pub use rollout::{initial_state, rollout, Controller, Observation, OptimalController, Trajectory};
