use ndarray::{Array1, Array2, Axis};

use super::params::{Nonlinearity, WdGnnParams};
use crate::error::{check_dim, Error, Result};
use crate::graph::{delayed_chain, FilterTaps, GraphSignal, ShiftRegister, SupportMatrix};

/// What the graph convolutions see: one static (S, X) pair, or a history of
/// pairs with one-hop-per-step communication delay.
#[derive(Debug, Clone, Copy)]
pub enum Frames<'a> {
    Static {
        support: &'a SupportMatrix,
        signal: &'a GraphSignal,
    },
    Delayed(&'a ShiftRegister),
}

/// One layer evaluated at one time slot.
#[derive(Debug, Clone)]
pub(crate) struct SlotTape {
    /// `stack[k]` is the input of tap k after its shifts. Truncated history
    /// makes this shorter than K+1.
    pub(crate) stack: Vec<Array2<f64>>,
    /// Slot of the previous layer that fed tap k.
    pub(crate) sources: Vec<usize>,
    pub(crate) pre: Array2<f64>,
    pub(crate) out: Array2<f64>,
}

/// Intermediates of one forward pass, enough to evaluate every gradient
/// without shifting forward again.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    pub(crate) is_static: bool,
    /// Newest first; a single entry for static frames.
    pub(crate) supports: Vec<SupportMatrix>,
    pub(crate) nonlinearity: Nonlinearity,
    /// `layers[l][m]`: deep layer l+1 at slot m.
    pub(crate) layers: Vec<Vec<SlotTape>>,
    pub(crate) wide_stack: Vec<Array2<f64>>,
    pub(crate) deep_out: Array2<f64>,
    pub(crate) wide_out: Array2<f64>,
    pub(crate) combined: Array2<f64>,
    pub(crate) output: Array2<f64>,
}

impl ForwardTape {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn n_nodes(&self) -> usize {
        self.output.nrows()
    }

    /// Deep-part output Φ.
    pub fn deep_output(&self) -> &Array2<f64> {
        &self.deep_out
    }

    /// Wide-part output before the α_W scaling.
    pub fn wide_output(&self) -> &Array2<f64> {
        &self.wide_out
    }

    /// Shifted inputs of the wide filter; the wide output is `Σ_k stack[k]·B_k`.
    pub fn wide_stack(&self) -> &[Array2<f64>] {
        &self.wide_stack
    }

    /// α_D Φ + α_W B + β, before the readout.
    pub fn combined(&self) -> &Array2<f64> {
        &self.combined
    }

    pub(crate) fn chain_supports(&self, slot: usize, k: usize) -> Vec<&SupportMatrix> {
        if self.is_static {
            vec![&self.supports[0]; k]
        } else {
            self.supports[slot..slot + k].iter().collect()
        }
    }
}

struct Context<'a> {
    is_static: bool,
    supports: Vec<&'a SupportMatrix>,
    inputs: Vec<&'a GraphSignal>,
}

impl<'a> Context<'a> {
    fn new(frames: Frames<'a>) -> Result<Self> {
        match frames {
            Frames::Static { support, signal } => {
                check_dim("support vs signal nodes", support.n_nodes(), signal.n_nodes())?;
                Ok(Self {
                    is_static: true,
                    supports: vec![support],
                    inputs: vec![signal],
                })
            }
            Frames::Delayed(reg) => {
                if reg.is_empty() {
                    return Err(Error::EmptyRegister);
                }
                Ok(Self {
                    is_static: false,
                    supports: (0..reg.len()).map(|k| reg.support(k)).collect(),
                    inputs: (0..reg.len()).map(|k| reg.signal(k)).collect(),
                })
            }
        }
    }

    /// Shifted inputs for each tap at `slot`, given the previous layer's
    /// per-slot outputs. Returns the stack and the source slots.
    fn stack(&self, slot: usize, order: usize, prev: &[&Array2<f64>]) -> Result<(Vec<Array2<f64>>, Vec<usize>)> {
        let mut stack: Vec<Array2<f64>> = Vec::with_capacity(order + 1);
        let mut sources = Vec::with_capacity(order + 1);
        if self.is_static {
            let mut z = prev[0].clone();
            for k in 0..=order {
                if k > 0 {
                    z = self.supports[0].shift(z.view())?;
                }
                stack.push(z.clone());
                sources.push(0);
            }
        } else {
            for k in 0..=order {
                let src = slot + k;
                if src >= prev.len() {
                    break;
                }
                stack.push(delayed_chain(&self.supports[slot..src], prev[src].clone())?);
                sources.push(src);
            }
        }
        Ok((stack, sources))
    }
}

fn filter_stack(stack: &[Array2<f64>], taps: &FilterTaps) -> Array2<f64> {
    let mut out = stack[0].dot(&taps.taps()[0]);
    for (z, b) in stack.iter().zip(taps.taps()).skip(1) {
        out = out + z.dot(b);
    }
    out
}

/// Deep-layer slot counts, last layer first: layer L needs slot 0 only and
/// layer l needs every slot the taps of layer l+1 reach.
fn slots_per_layer(p: &WdGnnParams, ctx: &Context<'_>) -> Vec<usize> {
    let n_layers = p.deep.layers.len();
    let mut n = vec![1; n_layers];
    if !ctx.is_static {
        let available = ctx.inputs.len();
        for l in (0..n_layers - 1).rev() {
            n[l] = (n[l + 1] + p.deep.layers[l + 1].order()).min(available);
        }
    }
    n
}

pub(crate) fn forward(frames: Frames<'_>, p: &WdGnnParams) -> Result<(GraphSignal, ForwardTape)> {
    let ctx = Context::new(frames)?;
    let x0 = ctx.inputs[0];
    check_dim("model input features", p.in_features(), x0.n_features())?;
    let n_nodes = x0.n_nodes();
    for (s, x) in ctx.supports.iter().zip(&ctx.inputs) {
        check_dim("support nodes", n_nodes, s.n_nodes())?;
        check_dim("signal nodes", n_nodes, x.n_nodes())?;
        check_dim("signal features", p.in_features(), x.n_features())?;
    }

    let slots = slots_per_layer(p, &ctx);
    let sigma = p.deep.nonlinearity;
    let mut layers: Vec<Vec<SlotTape>> = Vec::with_capacity(p.deep.layers.len());
    for (l, taps) in p.deep.layers.iter().enumerate() {
        let prev: Vec<&Array2<f64>> = if l == 0 {
            ctx.inputs.iter().map(|x| x.as_array()).collect()
        } else {
            layers[l - 1].iter().map(|s| &s.out).collect()
        };
        let mut tapes = Vec::with_capacity(slots[l]);
        for m in 0..slots[l] {
            let (stack, sources) = ctx.stack(m, taps.order(), &prev)?;
            let pre = filter_stack(&stack, taps);
            let out = pre.mapv(|v| sigma.apply(v));
            tapes.push(SlotTape {
                stack,
                sources,
                pre,
                out,
            });
        }
        layers.push(tapes);
    }
    let deep_out = layers.last().expect("at least one layer")[0].out.clone();

    let inputs: Vec<&Array2<f64>> = ctx.inputs.iter().map(|x| x.as_array()).collect();
    let (wide_stack, _) = ctx.stack(0, p.wide.order(), &inputs)?;
    let wide_out = filter_stack(&wide_stack, &p.wide);

    let combined = (&deep_out * p.alpha_d + &wide_out * p.alpha_w).mapv(|v| v + p.beta);
    let output = readout(&combined, p);
    if output.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "model output".into(),
        });
    }

    let tape = ForwardTape {
        is_static: ctx.is_static,
        supports: ctx.supports.iter().map(|s| (*s).clone()).collect(),
        nonlinearity: sigma,
        layers,
        wide_stack,
        deep_out,
        wide_out,
        combined,
        output: output.clone(),
    };
    Ok((GraphSignal::from_array_unchecked(output), tape))
}

fn readout(h: &Array2<f64>, p: &WdGnnParams) -> Array2<f64> {
    h.dot(&p.readout.weight) + p.readout.bias.view().insert_axis(Axis(0))
}

/// Output when node `i` applies its own wide taps `node_taps[i]` and the
/// deep part is shared. Reuses the shifted stacks of `tape`.
pub fn output_with_node_wide(tape: &ForwardTape, p: &WdGnnParams, node_taps: &[FilterTaps]) -> Result<Array2<f64>> {
    let n = tape.n_nodes();
    check_dim("per-node wide taps", n, node_taps.len())?;
    let mut out = Array2::zeros((n, p.out_features()));
    for (i, taps) in node_taps.iter().enumerate() {
        check_dim("per-node wide taps input", p.in_features(), taps.in_features())?;
        check_dim("per-node wide taps output", p.hidden(), taps.out_features())?;
        let mut w = Array1::<f64>::zeros(p.hidden());
        for (z, b) in tape.wide_stack.iter().zip(taps.taps()) {
            w = w + z.row(i).dot(b);
        }
        let h = (&tape.deep_out.row(i) * p.alpha_d + &w * p.alpha_w).mapv(|v| v + p.beta);
        out.row_mut(i).assign(&(h.dot(&p.readout.weight) + &p.readout.bias));
    }
    Ok(out)
}
