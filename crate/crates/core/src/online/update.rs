use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::graph::{FilterTaps, SupportMatrix};
use crate::model::{forward, grad_wide_only, Frames, WdGnnParams};

/// One copy of the wide taps per node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeParamSet {
    pub taps: Vec<FilterTaps>,
}

impl NodeParamSet {
    /// `n` identical copies of `taps`.
    pub fn replicate(taps: &FilterTaps, n: usize) -> Self {
        Self {
            taps: vec![taps.clone(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// `max_{i,j} ‖B_i − B_j‖`.
    pub fn disagreement(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in self.taps.iter().enumerate() {
            for b in &self.taps[i + 1..] {
                worst = worst.max(a.distance(b));
            }
        }
        worst
    }

    pub fn mean_norm(&self) -> f64 {
        self.taps.iter().map(FilterTaps::norm).sum::<f64>() / self.taps.len() as f64
    }

    /// Entrywise average of all copies; exact when they all agree.
    pub fn average(&self) -> FilterTaps {
        let first = &self.taps[0];
        if self.taps.iter().all(|t| t == first) {
            return first.clone();
        }
        let scale = 1.0 / self.taps.len() as f64;
        self.taps
            .iter()
            .skip(1)
            .fold(first.scaled(scale), |acc, t| acc.add_scaled(scale, t))
    }
}

/// `B ← B − γ ∇_B J` for a loss of the model output. `loss` returns the value
/// and `∂J/∂Ψ`. Everything except the wide taps is left untouched.
pub fn centralized_step(
    params: &WdGnnParams,
    frames: Frames<'_>,
    loss: impl FnOnce(&Array2<f64>) -> Result<(f64, Array2<f64>)>,
    gamma: f64,
) -> Result<(WdGnnParams, f64)> {
    let (out, tape) = forward(frames, params)?;
    let (value, upstream) = loss(out.as_array())?;
    let g = grad_wide_only(&tape, params, &upstream)?;
    if !g.is_finite() || !value.is_finite() {
        return Err(Error::NonFinite {
            context: "centralized online gradient".into(),
        });
    }
    let mut next = params.clone();
    next.wide = params.wide.add_scaled(-gamma, &g);
    Ok((next, value))
}

/// One synchronous consensus round: every node averages the pre-step copies
/// over its closed neighborhood in `s` and descends its own local gradient,
/// evaluated at its pre-step copy.
pub fn decentralized_step(
    nodes: &NodeParamSet,
    s: &SupportMatrix,
    local_grad: impl Fn(usize, &FilterTaps) -> Result<FilterTaps> + Sync,
    gamma: f64,
) -> Result<NodeParamSet> {
    check_dim("node parameter copies", s.n_nodes(), nodes.len())?;
    let taps = (0..nodes.len())
        .into_par_iter()
        .map(|i| {
            let own = &nodes.taps[i];
            let neighbors: Vec<usize> = s.neighbors(i).collect();
            // B_i + Σ_j (B_j − B_i)/(|N_i|+1) equals the closed-neighborhood
            // mean, and leaves agreeing copies bit-identical.
            let w = 1.0 / (neighbors.len() + 1) as f64;
            let mut avg = own.clone();
            for &j in &neighbors {
                let delta = nodes.taps[j].add_scaled(-1.0, own);
                avg = avg.add_scaled(w, &delta);
            }
            let g = local_grad(i, own)?;
            if !g.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("local gradient of node {i}"),
                });
            }
            Ok(avg.add_scaled(-gamma, &g))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NodeParamSet { taps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphSignal, ShiftRegister};
    use crate::model::{Architecture, Nonlinearity, Readout};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zero_grad(taps: &FilterTaps) -> FilterTaps {
        FilterTaps::zeros(taps.order(), taps.in_features(), taps.out_features())
    }

    #[test]
    fn consensus_examples() {
        let b1 = FilterTaps::scalar(&[1.0, 2.0]).unwrap();
        let b2 = FilterTaps::scalar(&[3.0, -2.0]).unwrap();
        let nodes = NodeParamSet {
            taps: vec![b1.clone(), b2.clone()],
        };
        let s = SupportMatrix::from_undirected_edges(2, &[(0, 1)]).unwrap();
        let next = decentralized_step(&nodes, &s, |_, t| Ok(zero_grad(t)), 0.5).unwrap();
        let mid = FilterTaps::scalar(&[2.0, 0.0]).unwrap();
        assert_eq!(next.taps, vec![mid.clone(), mid]);

        let s = SupportMatrix::zeros(2).unwrap();
        let next = decentralized_step(&nodes, &s, |_, t| Ok(zero_grad(t)), 0.5).unwrap();
        assert_eq!(next, nodes);
    }

    #[test]
    fn consensus_rejects_non_finite_local_gradients() {
        let nodes = NodeParamSet::replicate(&FilterTaps::scalar(&[1.0]).unwrap(), 3);
        let s = SupportMatrix::zeros(3).unwrap();
        let err = decentralized_step(
            &nodes,
            &s,
            |i, t| {
                let mut g = zero_grad(t);
                if i == 2 {
                    g.taps_mut()[0][[0, 0]] = f64::NAN;
                }
                Ok(g)
            },
            0.1,
        )
        .unwrap_err();
        assert!(err.to_string().contains("node 2"), "{err}");
    }

    fn scalar_wide_model(b: f64) -> WdGnnParams {
        let arch = Architecture {
            in_features: 1,
            hidden: 1,
            out_features: 1,
            order: 0,
            layers: 1,
            nonlinearity: Nonlinearity::Tanh,
        };
        let mut p = WdGnnParams::random(&arch, &mut ChaCha8Rng::seed_from_u64(0));
        p.alpha_d = 0.0;
        p.alpha_w = 1.0;
        p.readout = Readout::identity(1);
        p.wide = FilterTaps::scalar(&[b]).unwrap();
        p
    }

    #[test]
    fn centralized_unit_curvature_step_lands_on_the_optimum() {
        // Ψ = b·x with x = 1, J = ½(Ψ − b*)².
        let p = scalar_wide_model(0.3);
        let s = SupportMatrix::zeros(1).unwrap();
        let x = GraphSignal::new(Array2::ones((1, 1))).unwrap();
        let b_star = -1.7;
        let loss = |y: &Array2<f64>| Ok((0.5 * (y[[0, 0]] - b_star).powi(2), y.mapv(|v| v - b_star)));
        let frames = Frames::Static {
            support: &s,
            signal: &x,
        };
        let (next, _) = centralized_step(&p, frames, loss, 1.0).unwrap();
        assert_eq!(next.wide.taps()[0][[0, 0]], b_star);
        assert_eq!(next.frozen_part(), p.frozen_part());

        let (same, _) = centralized_step(&p, frames, |y| Ok((0.0, Array2::zeros(y.dim()))), 1.0).unwrap();
        assert_eq!(same, p);
    }

    #[test]
    fn centralized_steps_contract_by_one_minus_gamma_c() {
        // Ψ = b·x with x = 2 and J = ½(Ψ − y)²: curvature c = x² = 4.
        let s = SupportMatrix::zeros(1).unwrap();
        let x = GraphSignal::new(Array2::from_elem((1, 1), 2.0)).unwrap();
        let (y, gamma) = (1.0, 0.2);
        let b_star = y / 2.0;
        let mut p = scalar_wide_model(3.0);
        let mut err = (3.0f64 - b_star).abs();
        for _ in 0..10 {
            let frames = Frames::Static {
                support: &s,
                signal: &x,
            };
            p = centralized_step(&p, frames, |o| Ok((0.0, o.mapv(|v| v - y))), gamma)
                .unwrap()
                .0;
            let next = (p.wide.taps()[0][[0, 0]] - b_star).abs();
            assert!((next - (1.0f64 - gamma * 4.0).abs() * err).abs() < 1e-12);
            err = next;
        }
    }

    #[test]
    fn consensus_decays_monotonically_on_a_connected_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 12;
        // a ring keeps it connected; random chords make it mix
        let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        for i in 0..n {
            for j in i + 2..n {
                if (i, j) != (0, n - 1) && rng.gen_bool(0.3) {
                    edges.push((i, j));
                }
            }
        }
        let s = SupportMatrix::from_undirected_edges(n, &edges).unwrap();
        let mut nodes = NodeParamSet {
            taps: (0..n).map(|_| FilterTaps::random(2, 2, 3, &mut rng)).collect(),
        };
        let d0 = nodes.disagreement();
        let mut prev = d0;
        for _ in 0..10 * n {
            nodes = decentralized_step(&nodes, &s, |_, t| Ok(zero_grad(t)), 0.1).unwrap();
            let d = nodes.disagreement();
            assert!(d <= prev * (1.0 + 1e-12));
            prev = d;
        }
        assert!(prev < 1e-8 * d0, "{prev} vs {d0}");
    }

    #[test]
    fn complete_graph_with_identical_losses_matches_centralized() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let arch = Architecture {
            in_features: 2,
            hidden: 3,
            out_features: 2,
            order: 2,
            layers: 1,
            nonlinearity: Nonlinearity::Tanh,
        };
        let p = WdGnnParams::random(&arch, &mut rng);
        let n = 5;
        let edges: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let s = SupportMatrix::from_undirected_edges(n, &edges).unwrap();
        let x = GraphSignal::new(Array2::from_shape_fn((n, 2), |_| rng.gen_range(-1.0..1.0))).unwrap();
        let reg = ShiftRegister::filled(2, &s, &x).unwrap();
        let target = Array2::from_shape_fn((n, 2), |_| rng.gen_range(-1.0..1.0));
        let loss = |y: &Array2<f64>| Ok(((y - &target).mapv(|v| v * v).sum() * 0.5, y - &target));
        let gamma = 0.05;
        let (central, _) = centralized_step(&p, Frames::Delayed(&reg), loss, gamma).unwrap();

        let (out, tape) = forward(Frames::Delayed(&reg), &p).unwrap();
        let (_, upstream) = loss(out.as_array()).unwrap();
        let g = grad_wide_only(&tape, &p, &upstream).unwrap();
        let nodes = NodeParamSet::replicate(&p.wide, n);
        let next = decentralized_step(&nodes, &s, |_, _| Ok(g.clone()), gamma).unwrap();
        assert!(next.disagreement() < 1e-10);
        assert!(next.taps[0].distance(&central.wide) < 1e-10);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        fn random_nodes(n: usize, rng: &mut ChaCha8Rng) -> NodeParamSet {
            NodeParamSet {
                taps: (0..n).map(|_| FilterTaps::random(1, 2, 2, rng)).collect(),
            }
        }

        proptest! {
            #[test]
            fn zero_gradient_rounds_stay_in_the_hull_and_never_spread(seed: u64, n in 2usize..12, density in 0.0f64..0.8) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut edges = Vec::new();
                for i in 0..n {
                    for j in i + 1..n {
                        if rng.gen_bool(density) {
                            edges.push((i, j));
                        }
                    }
                }
                let s = SupportMatrix::from_undirected_edges(n, &edges).unwrap();
                let nodes = random_nodes(n, &mut rng);
                let next = decentralized_step(&nodes, &s, |_, t| Ok(zero_grad(t)), 0.3).unwrap();
                prop_assert!(next.disagreement() <= nodes.disagreement() * (1.0 + 1e-12));
                let flat: Vec<Vec<f64>> = nodes.taps.iter().map(|t| t.taps().iter().flatten().copied().collect()).collect();
                for t in &next.taps {
                    for (c, v) in t.taps().iter().flatten().enumerate() {
                        let lo = flat.iter().map(|f| f[c]).fold(f64::INFINITY, f64::min);
                        let hi = flat.iter().map(|f| f[c]).fold(f64::NEG_INFINITY, f64::max);
                        prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
                    }
                }
            }

            #[test]
            fn agreeing_copies_with_a_shared_gradient_take_the_plain_step(seed: u64, n in 1usize..10, gamma in 0.0f64..1.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let shared = FilterTaps::random(2, 1, 3, &mut rng);
                let g = FilterTaps::random(2, 1, 3, &mut rng);
                let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
                let s = SupportMatrix::from_undirected_edges(n, &edges).unwrap();
                let next = decentralized_step(&NodeParamSet::replicate(&shared, n), &s, |_, _| Ok(g.clone()), gamma).unwrap();
                let expected = shared.add_scaled(-gamma, &g);
                for t in &next.taps {
                    prop_assert!(t.distance(&expected) < 1e-12);
                }
            }
        }
    }
}
