//! Sparse supports, graph signals and graph filters.

mod filter;
pub mod io;
mod signal;
mod support;

pub use filter::{
    apply_delayed_filter, apply_filter, graph_shift, graph_shift_counted, per_node_filter_output, ShiftRegister,
};
pub(crate) use filter::{delayed_chain, delayed_chain_transpose};
pub use signal::{FilterTaps, GraphSignal};
pub use support::{OpCounter, SupportMatrix};
