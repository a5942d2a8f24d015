//! Similarity graphs, Laplacians and cut metrics.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, SparseSymOperator};
use crate::scalar::Scalar;

/// Points closer than this are treated as duplicates.
pub const DUPLICATE_TOL: f64 = 1e-12;

/// Undirected graph with nonnegative symmetric weights and zero diagonal.
#[derive(Debug, Clone)]
pub struct WeightedGraph<T: Scalar> {
    weights: CsrMatrix<T>,
    degrees: DVector<T>,
}

impl<T: Scalar> WeightedGraph<T> {
    /// Builds a graph from undirected edges `(i, j, w)`. Each pair may appear
    /// once in either orientation; repeated pairs have their weights summed.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, T)>) -> Result<Self> {
        let mut trip = Vec::new();
        for (i, j, w) in edges {
            if i == j {
                return Err(Error::Invalid(format!("self loop at vertex {i}")));
            }
            if w < T::zero() {
                return Err(Error::Invalid(format!("negative weight on edge ({i}, {j})")));
            }
            trip.push((i, j, w));
            trip.push((j, i, w));
        }
        Self::from_weights(CsrMatrix::from_triplets(n, trip)?)
    }

    /// Validates a symmetric weight matrix.
    pub fn from_weights(weights: CsrMatrix<T>) -> Result<Self> {
        let n = weights.dim();
        for (i, j, w) in weights.triplets() {
            if i == j {
                return Err(Error::Invalid(format!("nonzero diagonal weight at vertex {i}")));
            }
            if w < T::zero() {
                return Err(Error::Invalid(format!("negative weight on edge ({i}, {j})")));
            }
            let back = weights.row(j).find(|&(k, _)| k == i).map(|(_, v)| v).unwrap_or_else(T::zero);
            if (back - w).abs() > T::lit(1e-12) * w.abs() {
                return Err(Error::NotSymmetric(((back - w).abs() / w).as_f64()));
            }
        }
        let degrees = DVector::from_fn(n, |i, _| weights.row(i).fold(T::zero(), |s, (_, w)| s + w));
        Ok(Self { weights, degrees })
    }

    /// Recovers the weights from a combinatorial Laplacian (`W = D − L`).
    pub fn from_laplacian(l: &CsrMatrix<T>) -> Result<Self> {
        let trip: Vec<_> = l.triplets().filter(|&(i, j, _)| i != j).map(|(i, j, v)| (i, j, -v)).collect();
        Self::from_weights(CsrMatrix::from_triplets(l.dim(), trip)?)
    }

    pub fn n(&self) -> usize {
        self.weights.dim()
    }

    pub fn weights(&self) -> &CsrMatrix<T> {
        &self.weights
    }

    pub fn degrees(&self) -> &DVector<T> {
        &self.degrees
    }

    /// Number of stored (directed) nonzero weights.
    pub fn nnz(&self) -> usize {
        self.weights.nnz()
    }

    /// Connected-component id per vertex, numbered in order of first vertex.
    pub fn components(&self) -> Vec<usize> {
        let n = self.n();
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = next;
            queue.push_back(s);
            while let Some(v) = queue.pop_front() {
                for (u, w) in self.weights.row(v) {
                    if w > T::zero() && comp[u] == usize::MAX {
                        comp[u] = next;
                        queue.push_back(u);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    pub fn component_count(&self) -> usize {
        self.components().into_iter().max().map_or(0, |m| m + 1)
    }
}

/// Directed k-nearest-neighbour graph with Gaussian weights
/// `exp(−4‖xᵢ − xⱼ‖² / d_k(xᵢ)²)`, symmetrized as `(W + Wᵀ)/2`.
///
/// Rows of `points` are the data points. Neighbour ties are broken by index.
pub fn knn_gaussian_graph<T: Scalar>(points: &DMatrix<T>, k: usize) -> Result<WeightedGraph<T>> {
    let n = points.nrows();
    if k == 0 || k >= n {
        return Err(Error::Invalid(format!("k must satisfy 1 <= k < {n}, got {k}")));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("points contain non-finite coordinates".into()));
    }
    let dup = T::lit(DUPLICATE_TOL);
    let rows: Vec<_> = (0..n).map(|i| points.row(i).into_owned()).collect();
    let directed: Vec<Result<Vec<(usize, T)>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut dist: Vec<(T, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| ((&rows[i] - &rows[j]).norm_squared(), j))
                .collect();
            if let Some(&(_, j)) = dist.iter().find(|(d, _)| d.sqrt() <= dup) {
                return Err(Error::DuplicatePoints(i.min(j), i.max(j)));
            }
            let cmp = |a: &(T, usize), b: &(T, usize)| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1));
            dist.select_nth_unstable_by(k - 1, cmp);
            let near = &mut dist[..k];
            near.sort_by(cmp);
            let dk2 = near[k - 1].0;
            Ok(near.iter().map(|&(d2, j)| (j, (T::lit(-4.0) * d2 / dk2).exp())).collect())
        })
        .collect();
    let half = T::lit(0.5);
    let mut trip = Vec::with_capacity(2 * n * k);
    for (i, row) in directed.into_iter().enumerate() {
        for (j, w) in row? {
            trip.push((i, j, w * half));
            trip.push((j, i, w * half));
        }
    }
    WeightedGraph::from_weights(CsrMatrix::from_triplets(n, trip)?)
}

/// `L = diag(w) − W`.
pub fn laplacian<T: Scalar>(g: &WeightedGraph<T>) -> SparseSymOperator<T> {
    let trip: Vec<_> = g
        .weights
        .triplets()
        .map(|(i, j, w)| (i, j, -w))
        .chain((0..g.n()).map(|i| (i, i, g.degrees[i])))
        .collect();
    SparseSymOperator::from_triplets(g.n(), trip).expect("graph weights are symmetric and finite")
}

/// `cut(S) / min(vol(S), vol(Sᶜ))`.
pub fn conductance<T: Scalar>(g: &WeightedGraph<T>, s: &[usize]) -> Result<T> {
    let n = g.n();
    let mut inside = vec![false; n];
    for &v in s {
        if v >= n {
            return Err(Error::Dimension(format!("vertex {v} outside graph with {n} vertices")));
        }
        inside[v] = true;
    }
    let size = inside.iter().filter(|&&b| b).count();
    if size == 0 || size == n {
        return Err(Error::Conductance(format!("subset has {size} of {n} vertices")));
    }
    let (mut cut, mut vol_in, mut vol_out) = (T::zero(), T::zero(), T::zero());
    for i in 0..n {
        if inside[i] {
            vol_in += g.degrees[i];
            for (j, w) in g.weights.row(i) {
                if !inside[j] {
                    cut += w;
                }
            }
        } else {
            vol_out += g.degrees[i];
        }
    }
    let denom = vol_in.min(vol_out);
    if denom <= T::zero() {
        return Err(Error::Conductance("a side has zero volume".into()));
    }
    Ok(cut / denom)
}
