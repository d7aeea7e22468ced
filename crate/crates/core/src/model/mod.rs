//! The wide-and-deep GNN: a bank of graph filters (wide part) and a
//! convolutional GNN (deep part), linearly combined and passed through a
//! per-node readout.
//!
//! Gradients come from a tape recorded during the forward pass. Both the
//! static form (powers of one support) and the delayed form (a history of
//! supports and signals) run through the same engine.

mod backward;
pub mod checkpoint;
mod forward;
mod params;

pub use backward::{grad_all, grad_wide_only, node_wide_grad};
pub use forward::{output_with_node_wide, ForwardTape, Frames};
pub use params::{Architecture, GnnParams, Nonlinearity, ParamMask, Readout, WdGnnParams};

use crate::error::Result;
use crate::graph::{FilterTaps, GraphSignal, ShiftRegister, SupportMatrix};

/// `X_l = σ(Σ_k Sᵏ X_{l-1} A_{lk})` for every layer; returns the last.
pub fn gnn_forward(s: &SupportMatrix, x: &GraphSignal, p: &GnnParams) -> Result<(GraphSignal, ForwardTape)> {
    p.validate()?;
    let width = p.out_features();
    let wrapper = WdGnnParams {
        deep: p.clone(),
        wide: FilterTaps::zeros(0, p.in_features(), width),
        alpha_d: 1.0,
        alpha_w: 0.0,
        beta: 0.0,
        readout: Readout::identity(width),
    };
    forward::forward(Frames::Static { support: s, signal: x }, &wrapper)
}

pub fn wdgnn_forward(s: &SupportMatrix, x: &GraphSignal, p: &WdGnnParams) -> Result<(GraphSignal, ForwardTape)> {
    forward::forward(Frames::Static { support: s, signal: x }, p)
}

/// Like [`wdgnn_forward`], but every graph convolution is the delayed
/// filter over the register.
pub fn wdgnn_forward_delayed(reg: &ShiftRegister, p: &WdGnnParams) -> Result<(GraphSignal, ForwardTape)> {
    forward::forward(Frames::Delayed(reg), p)
}

pub fn forward(frames: Frames<'_>, p: &WdGnnParams) -> Result<(GraphSignal, ForwardTape)> {
    forward::forward(frames, p)
}
