use ndarray::{Array2, ArrayView2};

use crate::error::{check_dim, Error, Result};

/// Counts the multiply-adds performed by shift operations.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OpCounter {
    pub multiply_adds: u64,
}

/// Sparse N×N support matrix of a graph.
///
/// Entry `(i, j)` is the weight with which node `i` aggregates the value held
/// by node `j`, so a nonzero off-diagonal entry means `j` is an in-neighbor
/// of `i`. Stored row-compressed; rows are sorted by column and duplicate
/// entries are rejected at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportMatrix {
    n_nodes: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
}

impl SupportMatrix {
    pub fn from_triplets(n_nodes: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::InvalidInput("support matrix needs at least one node".into()));
        }
        let mut sorted = triplets.to_vec();
        for &(i, j, w) in &sorted {
            if i >= n_nodes || j >= n_nodes {
                return Err(Error::InvalidInput(format!(
                    "entry ({i}, {j}) outside a {n_nodes}x{n_nodes} support"
                )));
            }
            if !w.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("support entry ({i}, {j})"),
                });
            }
        }
        sorted.sort_by_key(|t| (t.0, t.1));
        if let Some(w) = sorted.windows(2).find(|w| w[0].0 == w[1].0 && w[0].1 == w[1].1) {
            return Err(Error::InvalidInput(format!(
                "duplicate support entry ({}, {})",
                w[0].0, w[0].1
            )));
        }

        let mut row_ptr = vec![0usize; n_nodes + 1];
        for &(i, _, _) in &sorted {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n_nodes {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            n_nodes,
            row_ptr,
            cols: sorted.iter().map(|t| t.1).collect(),
            weights: sorted.iter().map(|t| t.2).collect(),
        })
    }

    pub fn zeros(n_nodes: usize) -> Result<Self> {
        Self::from_triplets(n_nodes, &[])
    }

    pub fn identity(n_nodes: usize) -> Result<Self> {
        let t: Vec<_> = (0..n_nodes).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n_nodes, &t)
    }

    /// Binary symmetric adjacency from an undirected edge list.
    pub fn from_undirected_edges(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut t = Vec::with_capacity(2 * edges.len());
        for &(i, j) in edges {
            if i == j {
                return Err(Error::InvalidInput(format!("self-loop ({i}, {i}) in edge list")));
            }
            t.push((i, j, 1.0));
            t.push((j, i, 1.0));
        }
        Self::from_triplets(n_nodes, &t)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Number of stored entries (including any diagonal ones).
    pub fn n_entries(&self) -> usize {
        self.weights.len()
    }

    /// Stored `(column, weight)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    /// In-neighbors of node `i`: columns of row `i` with a nonzero weight, excluding `i`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i).filter(move |&(j, w)| j != i && w != 0.0).map(|(j, _)| j)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n_nodes)
            .flat_map(|i| self.row(i).map(move |(j, w)| (i, j, w)))
            .collect()
    }

    /// Divides row `i` by `max(1, |N_i|)`.
    pub fn degree_normalized(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.n_nodes {
            let d = self.degree(i).max(1) as f64;
            for w in &mut out.weights[self.row_ptr[i]..self.row_ptr[i + 1]] {
                *w /= d;
            }
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut d = Array2::zeros((self.n_nodes, self.n_nodes));
        for (i, j, w) in self.triplets() {
            d[[i, j]] = w;
        }
        d
    }

    /// `S X` using only the stored entries.
    pub fn shift(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.shift_counted(x, &mut OpCounter::default())
    }

    pub fn shift_counted(&self, x: ArrayView2<'_, f64>, counter: &mut OpCounter) -> Result<Array2<f64>> {
        check_dim("graph shift (support nodes vs signal rows)", self.n_nodes, x.nrows())?;
        let f = x.ncols();
        let mut out = Array2::zeros((self.n_nodes, f));
        for i in 0..self.n_nodes {
            let mut row = out.row_mut(i);
            for (j, w) in self.row(i) {
                row.scaled_add(w, &x.row(j));
            }
        }
        counter.multiply_adds += (self.n_entries() * f) as u64;
        Ok(out)
    }

    /// `Sᵀ Y`, the adjoint of [`shift`](Self::shift).
    pub fn shift_transpose(&self, y: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_dim("transposed graph shift", self.n_nodes, y.nrows())?;
        let mut out = Array2::zeros((self.n_nodes, y.ncols()));
        for i in 0..self.n_nodes {
            for (j, w) in self.row(i) {
                let yi = y.row(i);
                out.row_mut(j).scaled_add(w, &yi);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn duplicate_entries_are_rejected() {
        let err = SupportMatrix::from_triplets(2, &[(0, 1, 1.0), (0, 1, 2.0)]).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn out_of_range_and_non_finite_entries_are_rejected() {
        assert!(SupportMatrix::from_triplets(2, &[(0, 2, 1.0)]).is_err());
        assert!(SupportMatrix::from_triplets(2, &[(0, 1, f64::NAN)]).is_err());
        assert!(SupportMatrix::from_triplets(0, &[]).is_err());
    }

    #[test]
    fn shift_transpose_is_adjoint() {
        let s = SupportMatrix::from_triplets(3, &[(0, 1, 2.0), (1, 2, -1.0), (2, 0, 0.5), (1, 1, 3.0)]).unwrap();
        let x = array![[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]];
        let y = array![[0.2, 1.0], [-2.0, 0.1], [1.5, 4.0]];
        let lhs = (&s.shift(x.view()).unwrap() * &y).sum();
        let rhs = (&x * &s.shift_transpose(y.view()).unwrap()).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn degree_normalization_divides_rows() {
        let s = SupportMatrix::from_undirected_edges(3, &[(0, 1), (0, 2)]).unwrap();
        let d = s.degree_normalized().to_dense();
        assert_eq!(d.row(0).to_vec(), vec![0.0, 0.5, 0.5]);
        assert_eq!(d.row(1).to_vec(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn neighbors_skip_the_diagonal() {
        let s = SupportMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 1.0)]).unwrap();
        assert_eq!(s.neighbors(0).collect::<Vec<_>>(), vec![1]);
        assert_eq!(s.degree(1), 0);
    }
}
