use ndarray::{Array2, Axis};

use super::forward::ForwardTape;
use super::params::WdGnnParams;
use crate::error::{check_dim, Error, Result};
use crate::graph::{delayed_chain_transpose, FilterTaps};

fn check_upstream(tape: &ForwardTape, p: &WdGnnParams, upstream: &Array2<f64>) -> Result<()> {
    check_dim("upstream gradient rows", tape.output.nrows(), upstream.nrows())?;
    check_dim("upstream gradient columns", tape.output.ncols(), upstream.ncols())?;
    check_dim("tape vs parameter output width", p.out_features(), tape.output.ncols())?;
    check_dim("tape vs parameter hidden width", p.hidden(), tape.combined.ncols())?;
    check_dim("tape vs parameter layer count", p.deep.layers.len(), tape.layers.len())?;
    if upstream.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "upstream gradient".into(),
        });
    }
    Ok(())
}

fn combined_grad(p: &WdGnnParams, upstream: &Array2<f64>) -> Array2<f64> {
    upstream.dot(&p.readout.weight.t())
}

fn wide_grad_from(tape: &ForwardTape, p: &WdGnnParams, d_combined: &Array2<f64>) -> FilterTaps {
    let d_wide = d_combined * p.alpha_w;
    let mut g = FilterTaps::zeros(p.wide.order(), p.wide.in_features(), p.wide.out_features());
    for (gk, z) in g.taps_mut().iter_mut().zip(&tape.wide_stack) {
        *gk = z.t().dot(&d_wide);
    }
    g
}

/// Gradient of the wide taps only; the deep part is never touched.
pub fn grad_wide_only(tape: &ForwardTape, p: &WdGnnParams, upstream: &Array2<f64>) -> Result<FilterTaps> {
    check_upstream(tape, p, upstream)?;
    Ok(wide_grad_from(tape, p, &combined_grad(p, upstream)))
}

/// Gradient of a scalar loss with respect to every parameter, given
/// `upstream = ∂loss/∂output`.
pub fn grad_all(tape: &ForwardTape, p: &WdGnnParams, upstream: &Array2<f64>) -> Result<WdGnnParams> {
    check_upstream(tape, p, upstream)?;
    let mut g = p.zeros_like();

    g.readout.weight = tape.combined.t().dot(upstream);
    g.readout.bias = upstream.sum_axis(Axis(0));
    let d_combined = combined_grad(p, upstream);
    g.alpha_d = (&tape.deep_out * &d_combined).sum();
    g.alpha_w = (&tape.wide_out * &d_combined).sum();
    g.beta = d_combined.sum();
    g.wide = wide_grad_from(tape, p, &d_combined);

    // Backpropagate through the deep cascade, slot by slot.
    let n_layers = p.deep.layers.len();
    let sigma = tape.nonlinearity;
    let mut d_out: Vec<Array2<f64>> = vec![&d_combined * p.alpha_d];
    for l in (0..n_layers).rev() {
        let taps = &p.deep.layers[l];
        let slots = &tape.layers[l];
        let mut d_prev: Vec<Array2<f64>> = if l > 0 {
            tape.layers[l - 1].iter().map(|s| Array2::zeros(s.out.dim())).collect()
        } else {
            Vec::new()
        };
        for (m, slot) in slots.iter().enumerate() {
            let mut delta = d_out[m].clone();
            ndarray::Zip::from(&mut delta)
                .and(&slot.pre)
                .and(&slot.out)
                .for_each(|d, &pre, &out| *d *= sigma.derivative(pre, out));
            for (k, z) in slot.stack.iter().enumerate() {
                let gk = &mut g.deep.layers[l].taps_mut()[k];
                *gk = &*gk + &z.t().dot(&delta);
                if l > 0 {
                    let back = delta.dot(&taps.taps()[k].t());
                    let back = delayed_chain_transpose(&tape.chain_supports(m, k), back)?;
                    d_prev[slot.sources[k]] += &back;
                }
            }
        }
        d_out = d_prev;
    }
    Ok(g)
}

/// Gradient of the wide taps for node `node` alone, through that node's own
/// output row: `Σ_k stack_k[node]ᵀ (α_W · W · d_row)`.
pub fn node_wide_grad(tape: &ForwardTape, p: &WdGnnParams, node: usize, d_row: &[f64]) -> Result<FilterTaps> {
    if node >= tape.n_nodes() {
        return Err(Error::InvalidNode {
            node,
            n_nodes: tape.n_nodes(),
        });
    }
    check_dim("node output gradient", p.out_features(), d_row.len())?;
    let d_row = ndarray::ArrayView1::from(d_row);
    let d_hidden = p.readout.weight.dot(&d_row) * p.alpha_w;
    let d_hidden = d_hidden.insert_axis(Axis(0));
    let mut g = FilterTaps::zeros(p.wide.order(), p.wide.in_features(), p.wide.out_features());
    for (gk, z) in g.taps_mut().iter_mut().zip(&tape.wide_stack) {
        let zi = z.row(node).to_owned().insert_axis(Axis(1));
        *gk = zi.dot(&d_hidden);
    }
    Ok(g)
}
