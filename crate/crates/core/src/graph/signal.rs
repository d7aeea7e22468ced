use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::error::{Error, Result};

/// An N×F graph signal; row `i` is the feature vector of node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSignal(Array2<f64>);

impl GraphSignal {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidInput("graph signal must be non-empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "graph signal".into(),
            });
        }
        Ok(Self(values))
    }

    pub fn zeros(n_nodes: usize, n_features: usize) -> Self {
        Self(Array2::zeros((n_nodes, n_features)))
    }

    pub fn n_nodes(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }

    /// Wraps an array produced internally from finite inputs.
    pub(crate) fn from_array_unchecked(values: Array2<f64>) -> Self {
        Self(values)
    }
}

/// The K+1 matrix taps `{B_0, ..., B_K}` of a graph filter, each F×G.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTaps {
    taps: Vec<Array2<f64>>,
}

impl FilterTaps {
    pub fn new(taps: Vec<Array2<f64>>) -> Result<Self> {
        let first = taps
            .first()
            .ok_or_else(|| Error::InvalidInput("filter needs at least one tap".into()))?;
        let shape = first.dim();
        if shape.0 == 0 || shape.1 == 0 {
            return Err(Error::InvalidInput("filter taps must be non-empty".into()));
        }
        for (k, t) in taps.iter().enumerate() {
            if t.dim() != shape {
                return Err(Error::InvalidInput(format!(
                    "tap {k} has shape {:?}, expected {:?}",
                    t.dim(),
                    shape
                )));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("filter tap {k}"),
                });
            }
        }
        Ok(Self { taps })
    }

    pub fn zeros(order: usize, in_features: usize, out_features: usize) -> Self {
        Self {
            taps: vec![Array2::zeros((in_features, out_features)); order + 1],
        }
    }

    /// Scalar taps for F = G = 1.
    pub fn scalar(coeffs: &[f64]) -> Result<Self> {
        Self::new(coeffs.iter().map(|&c| Array2::from_elem((1, 1), c)).collect())
    }

    /// Entries uniform in ±1/√(F·(K+1)).
    pub fn random<R: Rng + ?Sized>(order: usize, in_features: usize, out_features: usize, rng: &mut R) -> Self {
        let bound = 1.0 / ((in_features * (order + 1)) as f64).sqrt();
        let taps = (0..=order)
            .map(|_| Array2::from_shape_fn((in_features, out_features), |_| rng.gen_range(-bound..=bound)))
            .collect();
        Self { taps }
    }

    pub fn order(&self) -> usize {
        self.taps.len() - 1
    }

    pub fn in_features(&self) -> usize {
        self.taps[0].nrows()
    }

    pub fn out_features(&self) -> usize {
        self.taps[0].ncols()
    }

    pub fn taps(&self) -> &[Array2<f64>] {
        &self.taps
    }

    pub fn taps_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.taps
    }

    pub fn n_params(&self) -> usize {
        self.taps.iter().map(|t| t.len()).sum()
    }

    /// Frobenius norm over all taps.
    pub fn norm(&self) -> f64 {
        self.taps
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.taps
            .iter()
            .zip(&other.taps)
            .flat_map(|(a, b)| a.iter().zip(b.iter()))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// `self + scale·other`, element-wise.
    pub fn add_scaled(&self, scale: f64, other: &Self) -> Self {
        Self {
            taps: self
                .taps
                .iter()
                .zip(&other.taps)
                .map(|(a, b)| a + &(b * scale))
                .collect(),
        }
    }

    pub fn scaled(&self, scale: f64) -> Self {
        Self {
            taps: self.taps.iter().map(|t| t * scale).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.taps.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}
