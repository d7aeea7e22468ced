//! Wide-and-deep graph neural networks for distributed control.
//!
//! The crate has a sparse graph-signal toolkit ([`graph`]), the WD-GNN model
//! with manual gradients and checkpoints ([`model`]), a flocking testbed
//! ([`flocking`]), offline imitation training ([`training`]), centralized and
//! decentralized online retraining of the wide part ([`online`]) and the
//! experiment pipeline behind the `wdgnn` binary ([`experiment`]).

pub mod error;
pub mod experiment;
pub mod flocking;
pub mod graph;
pub mod model;
pub mod online;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
