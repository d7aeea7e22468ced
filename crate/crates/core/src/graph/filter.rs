//! Graph shifts and polynomial graph filters `Σ_k Sᵏ X B_k`.

use std::collections::VecDeque;

use ndarray::{Array1, Array2};

use super::{FilterTaps, GraphSignal, OpCounter, SupportMatrix};
use crate::error::{check_dim, Error, Result};

pub fn graph_shift(s: &SupportMatrix, x: &GraphSignal) -> Result<GraphSignal> {
    s.shift(x.view()).map(GraphSignal::from_array_unchecked)
}

pub fn graph_shift_counted(s: &SupportMatrix, x: &GraphSignal, counter: &mut OpCounter) -> Result<GraphSignal> {
    s.shift_counted(x.view(), counter)
        .map(GraphSignal::from_array_unchecked)
}

fn check_taps(x: &GraphSignal, taps: &FilterTaps) -> Result<()> {
    check_dim("filter input features", taps.in_features(), x.n_features())
}

/// Evaluates the filter by iterated shifting; `Sᵏ` is never formed.
pub fn apply_filter(s: &SupportMatrix, x: &GraphSignal, taps: &FilterTaps) -> Result<GraphSignal> {
    check_dim("filter support vs signal nodes", s.n_nodes(), x.n_nodes())?;
    check_taps(x, taps)?;
    let mut z = x.as_array().clone();
    let mut out = z.dot(&taps.taps()[0]);
    for b in &taps.taps()[1..] {
        z = s.shift(z.view())?;
        out = out + z.dot(b);
    }
    Ok(GraphSignal::from_array_unchecked(out))
}

/// Row `node` of [`apply_filter`], computed the way the node itself would:
/// only values inside its K-hop in-neighborhood are ever read.
pub fn per_node_filter_output(
    node: usize,
    s: &SupportMatrix,
    x: &GraphSignal,
    taps: &FilterTaps,
) -> Result<Array1<f64>> {
    let n = s.n_nodes();
    check_dim("filter support vs signal nodes", n, x.n_nodes())?;
    check_taps(x, taps)?;
    if node >= n {
        return Err(Error::InvalidNode { node, n_nodes: n });
    }
    let order = taps.order();

    // hops[j] = distance from j to `node` along in-edges, if within K.
    let mut hops = vec![usize::MAX; n];
    hops[node] = 0;
    let mut frontier = vec![node];
    for h in 1..=order {
        let mut next = Vec::new();
        for &i in &frontier {
            for (j, _) in s.row(i) {
                if hops[j] == usize::MAX {
                    hops[j] = h;
                    next.push(j);
                }
            }
        }
        frontier = next;
    }
    let ball: Vec<usize> = (0..n).filter(|&j| hops[j] != usize::MAX).collect();

    // After k exchanges, nodes within K-k hops hold [Sᵏ X]_j.
    let f = x.n_features();
    let mut z: Vec<Option<Array1<f64>>> = vec![None; n];
    for &j in &ball {
        z[j] = Some(x.as_array().row(j).to_owned());
    }
    let mut out = z[node].as_ref().expect("node is in its own ball").dot(&taps.taps()[0]);
    for (k, b) in taps.taps().iter().enumerate().skip(1) {
        let mut next: Vec<Option<Array1<f64>>> = vec![None; n];
        for &j in ball.iter().filter(|&&j| hops[j] <= order - k) {
            let mut acc = Array1::zeros(f);
            for (l, w) in s.row(j) {
                acc.scaled_add(w, z[l].as_ref().expect("in-neighbor of the ball is in the ball"));
            }
            next[j] = Some(acc);
        }
        z = next;
        out = out + z[node].as_ref().expect("node keeps its value").dot(b);
    }
    Ok(out)
}

/// The last `order + 1` (support, signal) pairs, newest first.
#[derive(Debug, Clone)]
pub struct ShiftRegister {
    order: usize,
    history: VecDeque<(SupportMatrix, GraphSignal)>,
}

impl ShiftRegister {
    pub fn new(order: usize) -> Self {
        Self {
            order,
            history: VecDeque::with_capacity(order + 1),
        }
    }

    /// A register whose every slot holds the same pair.
    pub fn filled(order: usize, s: &SupportMatrix, x: &GraphSignal) -> Result<Self> {
        let mut reg = Self::new(order);
        for _ in 0..=order {
            reg.push(s.clone(), x.clone())?;
        }
        Ok(reg)
    }

    pub fn push(&mut self, s: SupportMatrix, x: GraphSignal) -> Result<()> {
        check_dim("shift register support vs signal", s.n_nodes(), x.n_nodes())?;
        if let Some((s0, x0)) = self.history.front() {
            check_dim("shift register node count", s0.n_nodes(), s.n_nodes())?;
            check_dim("shift register feature count", x0.n_features(), x.n_features())?;
        }
        if self.history.len() == self.order + 1 {
            self.history.pop_back();
        }
        self.history.push_front((s, x));
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    /// Support from `k` steps ago.
    pub fn support(&self, k: usize) -> &SupportMatrix {
        &self.history[k].0
    }

    /// Signal from `k` steps ago.
    pub fn signal(&self, k: usize) -> &GraphSignal {
        &self.history[k].1
    }

    pub fn current(&self) -> Result<(&SupportMatrix, &GraphSignal)> {
        self.history.front().map(|(s, x)| (s, x)).ok_or(Error::EmptyRegister)
    }

    pub fn n_nodes(&self) -> Result<usize> {
        Ok(self.current()?.0.n_nodes())
    }
}

/// Carries a signal observed `delay` steps ago forward through the supports
/// that existed while it travelled: `S_t S_{t-1} ... S_{t-delay+1} Y`, where
/// `supports[0]` is the newest.
pub(crate) fn delayed_chain(supports: &[&SupportMatrix], y: Array2<f64>) -> Result<Array2<f64>> {
    supports.iter().rev().try_fold(y, |z, s| s.shift(z.view()))
}

/// Adjoint of [`delayed_chain`].
pub(crate) fn delayed_chain_transpose(supports: &[&SupportMatrix], y: Array2<f64>) -> Result<Array2<f64>> {
    supports.iter().try_fold(y, |z, s| s.shift_transpose(z.view()))
}

/// Graph filter over a time-varying graph with one-step communication delay.
///
/// Term `k` applies the `k` most recent supports to the signal from `k` steps
/// ago. Terms older than the register contents are dropped.
pub fn apply_delayed_filter(reg: &ShiftRegister, taps: &FilterTaps) -> Result<GraphSignal> {
    let (s0, x0) = reg.current()?;
    check_dim("delayed filter support vs signal", s0.n_nodes(), x0.n_nodes())?;
    check_taps(x0, taps)?;
    let supports: Vec<&SupportMatrix> = (0..reg.len()).map(|k| reg.support(k)).collect();
    let mut out = x0.as_array().dot(&taps.taps()[0]);
    for (k, b) in taps
        .taps()
        .iter()
        .enumerate()
        .skip(1)
        .take_while(|(k, _)| *k < reg.len())
    {
        let z = delayed_chain(&supports[..k], reg.signal(k).as_array().clone())?;
        out = out + z.dot(b);
    }
    Ok(GraphSignal::from_array_unchecked(out))
}
