use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::graph::FilterTaps;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    Tanh,
    Relu,
}

impl Nonlinearity {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => v.tanh(),
            Nonlinearity::Relu => v.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    pub fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => 1.0 - out * out,
            Nonlinearity::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Convolutional GNN: a cascade of graph filters and pointwise nonlinearities.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnParams {
    pub layers: Vec<FilterTaps>,
    pub nonlinearity: Nonlinearity,
}

impl GnnParams {
    pub fn new(layers: Vec<FilterTaps>, nonlinearity: Nonlinearity) -> Result<Self> {
        let p = Self { layers, nonlinearity };
        p.validate()?;
        Ok(p)
    }

    /// Layer widths `widths[0] -> widths[1] -> ...`, all with the same order.
    pub fn random<R: Rng + ?Sized>(order: usize, widths: &[usize], nonlinearity: Nonlinearity, rng: &mut R) -> Self {
        let layers = widths
            .windows(2)
            .map(|w| FilterTaps::random(order, w[0], w[1], rng))
            .collect();
        Self { layers, nonlinearity }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidInput("GNN needs at least one layer".into()));
        }
        for w in self.layers.windows(2) {
            check_dim("GNN layer chaining", w[0].out_features(), w[1].in_features())?;
        }
        if self.layers.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite {
                context: "GNN taps".into(),
            });
        }
        Ok(())
    }

    pub fn in_features(&self) -> usize {
        self.layers[0].in_features()
    }

    pub fn out_features(&self) -> usize {
        self.layers.last().expect("validated non-empty").out_features()
    }

    /// Largest tap order across layers.
    pub fn order(&self) -> usize {
        self.layers.iter().map(FilterTaps::order).max().unwrap_or(0)
    }
}

/// Per-node linear readout `h ↦ hᵀW + b`, shared by all nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Readout {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Readout {
    pub fn identity(width: usize) -> Self {
        Self {
            weight: Array2::eye(width),
            bias: Array1::zeros(width),
        }
    }

    pub fn random<R: Rng + ?Sized>(in_features: usize, out_features: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_features as f64).sqrt();
        Self {
            weight: Array2::from_shape_fn((in_features, out_features), |_| rng.gen_range(-bound..=bound)),
            bias: Array1::zeros(out_features),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_features(&self) -> usize {
        self.weight.ncols()
    }
}

/// All parameters of a wide-and-deep GNN.
///
/// The same container doubles as the gradient of a scalar loss with respect
/// to every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct WdGnnParams {
    pub deep: GnnParams,
    pub wide: FilterTaps,
    pub alpha_d: f64,
    pub alpha_w: f64,
    pub beta: f64,
    pub readout: Readout,
}

/// Shape hyperparameters for random initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub in_features: usize,
    /// Width G of both the wide and the deep output.
    pub hidden: usize,
    pub out_features: usize,
    pub order: usize,
    pub layers: usize,
    pub nonlinearity: Nonlinearity,
}

impl WdGnnParams {
    pub fn new(
        deep: GnnParams,
        wide: FilterTaps,
        alpha_d: f64,
        alpha_w: f64,
        beta: f64,
        readout: Readout,
    ) -> Result<Self> {
        let p = Self {
            deep,
            wide,
            alpha_d,
            alpha_w,
            beta,
            readout,
        };
        p.validate()?;
        Ok(p)
    }

    /// Random taps and readout; α_D = α_W = 1, β = 0. Deep hidden layers all have width G.
    pub fn random<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Self {
        let mut widths = vec![arch.in_features];
        widths.extend(std::iter::repeat_n(arch.hidden, arch.layers.max(1)));
        let deep = GnnParams::random(arch.order, &widths, arch.nonlinearity, rng);
        let wide = FilterTaps::random(arch.order, arch.in_features, arch.hidden, rng);
        let readout = Readout::random(arch.hidden, arch.out_features, rng);
        Self {
            deep,
            wide,
            alpha_d: 1.0,
            alpha_w: 1.0,
            beta: 0.0,
            readout,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.deep.validate()?;
        check_dim(
            "wide vs deep input features",
            self.deep.in_features(),
            self.wide.in_features(),
        )?;
        check_dim(
            "wide vs deep output features",
            self.deep.out_features(),
            self.wide.out_features(),
        )?;
        check_dim(
            "readout input vs combined features",
            self.wide.out_features(),
            self.readout.in_features(),
        )?;
        check_dim("readout bias", self.readout.out_features(), self.readout.bias.len())?;
        if !self.flatten().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "WD-GNN parameters".into(),
            });
        }
        Ok(())
    }

    pub fn in_features(&self) -> usize {
        self.wide.in_features()
    }

    pub fn hidden(&self) -> usize {
        self.wide.out_features()
    }

    pub fn out_features(&self) -> usize {
        self.readout.out_features()
    }

    /// Receptive depth in time: how many past slots a delayed forward can use.
    pub fn temporal_depth(&self) -> usize {
        let deep: usize = self.deep.layers.iter().map(FilterTaps::order).sum();
        deep.max(self.wide.order())
    }

    /// Same shapes, every value zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.map_inplace(|_| 0.0);
        z
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        // Products with transposed views can come back column-major.
        fn row_major(t: &mut Array2<f64>) -> &mut [f64] {
            if !t.is_standard_layout() {
                *t = t.as_standard_layout().into_owned();
            }
            t.as_slice_mut().expect("standard layout")
        }
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.deep.layers {
            for t in layer.taps_mut() {
                out.push(row_major(t));
            }
        }
        for t in self.wide.taps_mut() {
            out.push(row_major(t));
        }
        out.push(std::slice::from_mut(&mut self.alpha_d));
        out.push(std::slice::from_mut(&mut self.alpha_w));
        out.push(std::slice::from_mut(&mut self.beta));
        out.push(row_major(&mut self.readout.weight));
        out.push(self.readout.bias.as_slice_mut().expect("standard layout"));
        out
    }

    fn map_inplace(&mut self, mut f: impl FnMut(f64) -> f64) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v = f(*v);
            }
        }
    }

    /// All values in a fixed order: deep taps, wide taps, α_D, α_W, β, readout weight, readout bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut c = self.clone();
        c.tensors_mut().into_iter().flat_map(|t| t.to_vec()).collect()
    }

    /// Inverse of [`flatten`](Self::flatten), using `self` for the shapes.
    pub fn unflatten(&self, values: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        let total: usize = out.tensors_mut().iter().map(|t| t.len()).sum();
        check_dim("flat parameter vector", total, values.len())?;
        let mut offset = 0;
        for t in out.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(out)
    }

    pub fn n_params(&self) -> usize {
        self.flatten().len()
    }

    /// Sizes of each tensor in [`flatten`](Self::flatten) order.
    pub fn tensor_sizes(&self) -> Vec<usize> {
        let mut c = self.clone();
        c.tensors_mut().iter().map(|t| t.len()).collect()
    }

    /// Keeps only the entries selected by `mask`, zeroing the rest.
    pub fn masked(&self, mask: &ParamMask) -> Self {
        let mut out = self.clone();
        if !mask.deep {
            for l in &mut out.deep.layers {
                *l = FilterTaps::zeros(l.order(), l.in_features(), l.out_features());
            }
        }
        if !mask.wide {
            out.wide = FilterTaps::zeros(out.wide.order(), out.wide.in_features(), out.wide.out_features());
        }
        if !mask.alpha_d {
            out.alpha_d = 0.0;
        }
        if !mask.alpha_w {
            out.alpha_w = 0.0;
        }
        if !mask.beta {
            out.beta = 0.0;
        }
        if !mask.readout {
            out.readout.weight.fill(0.0);
            out.readout.bias.fill(0.0);
        }
        out
    }

    /// Everything except the wide taps, as a flat vector.
    pub fn frozen_part(&self) -> Vec<f64> {
        self.masked(&ParamMask {
            wide: false,
            ..ParamMask::all()
        })
        .flatten()
    }
}

/// Which parameter blocks are trainable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamMask {
    pub deep: bool,
    pub wide: bool,
    pub alpha_d: bool,
    pub alpha_w: bool,
    pub beta: bool,
    pub readout: bool,
}

impl ParamMask {
    pub fn all() -> Self {
        Self {
            deep: true,
            wide: true,
            alpha_d: true,
            alpha_w: true,
            beta: true,
            readout: true,
        }
    }

    pub fn wide_only() -> Self {
        Self {
            deep: false,
            wide: true,
            alpha_d: false,
            alpha_w: false,
            beta: false,
            readout: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn arch() -> Architecture {
        Architecture {
            in_features: 3,
            hidden: 4,
            out_features: 2,
            order: 2,
            layers: 2,
            nonlinearity: Nonlinearity::Tanh,
        }
    }

    #[test]
    fn flatten_round_trip() {
        let p = WdGnnParams::random(&arch(), &mut ChaCha8Rng::seed_from_u64(3));
        let flat = p.flatten();
        assert_eq!(flat.len(), p.n_params());
        assert_eq!(p.unflatten(&flat).unwrap(), p);
        assert!(p.unflatten(&flat[1..]).is_err());
    }

    #[test]
    fn random_init_respects_bounds() {
        let p = WdGnnParams::random(&arch(), &mut ChaCha8Rng::seed_from_u64(0));
        let bound = 1.0 / ((3 * 3) as f64).sqrt();
        assert!(p.wide.taps().iter().flat_map(|t| t.iter()).all(|v| v.abs() <= bound));
        assert_eq!((p.alpha_d, p.alpha_w, p.beta), (1.0, 1.0, 0.0));
        p.validate().unwrap();
    }

    #[test]
    fn mismatched_widths_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = WdGnnParams::random(&arch(), &mut rng);
        let bad_wide = FilterTaps::random(2, 3, 5, &mut rng);
        assert!(WdGnnParams::new(p.deep.clone(), bad_wide, 1.0, 1.0, 0.0, p.readout.clone()).is_err());
        let bad_deep = GnnParams {
            layers: vec![
                FilterTaps::random(1, 3, 4, &mut rng),
                FilterTaps::random(1, 5, 4, &mut rng),
            ],
            nonlinearity: Nonlinearity::Relu,
        };
        assert!(bad_deep.validate().is_err());
    }

    #[test]
    fn frozen_part_ignores_wide_taps() {
        let p = WdGnnParams::random(&arch(), &mut ChaCha8Rng::seed_from_u64(5));
        let mut q = p.clone();
        q.wide = q.wide.scaled(3.0);
        assert_eq!(p.frozen_part(), q.frozen_part());
        q.beta = 0.5;
        assert_ne!(p.frozen_part(), q.frozen_part());
    }
}
