//! Sparse symmetric operators with optional low-rank corrections.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::dense::sym;
use crate::scalar::Scalar;

/// A symmetric linear operator on `ℝⁿ`, applied to blocks of column vectors.
pub trait SymOperator<T: Scalar>: Send + Sync {
    fn dim(&self) -> usize;

    /// `A·X` for an `n×k` block `X`.
    fn apply(&self, x: &DMatrix<T>) -> DMatrix<T>;

    /// Diagonal entries of `A`.
    fn diagonal(&self) -> DVector<T>;

    /// The compression `VᵀAV`, symmetrized.
    fn compress(&self, v: &DMatrix<T>) -> DMatrix<T> {
        sym(&(v.transpose() * self.apply(v)))
    }

    /// Estimate of the spectral norm by power iteration.
    fn norm_estimate(&self, seed: u64) -> T {
        power_norm(self, 50, seed)
    }
}

impl<T: Scalar> SymOperator<T> for DMatrix<T> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &DMatrix<T>) -> DMatrix<T> {
        self * x
    }

    fn diagonal(&self) -> DVector<T> {
        DMatrix::diagonal(self)
    }
}

pub(crate) fn power_norm<T: Scalar, O: SymOperator<T> + ?Sized>(op: &O, iters: usize, seed: u64) -> T {
    let n = op.dim();
    if n == 0 {
        return T::zero();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = DMatrix::from_fn(n, 1, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        T::lit(z)
    });
    let nv = v.norm();
    v /= nv;
    let mut est = T::zero();
    for _ in 0..iters {
        let w = op.apply(&v);
        let nw = w.norm();
        if nw == T::zero() {
            return T::zero();
        }
        est = nw;
        v = w / nw;
    }
    est
}

/// Compressed sparse row storage of a square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T: Scalar> {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: impl IntoIterator<Item = (usize, usize, T)>) -> Result<Self> {
        let mut rows: Vec<BTreeMap<usize, T>> = vec![BTreeMap::new(); n];
        for (i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::Dimension(format!("entry ({i}, {j}) outside {n}x{n}")));
            }
            if !v.is_finite() {
                return Err(Error::Invalid(format!("non-finite entry at ({i}, {j})")));
            }
            *rows[i].entry(j).or_insert_with(T::zero) += v;
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in rows {
            for (j, v) in row {
                if v != T::zero() {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self { n, indptr, indices, values })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let (s, e) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[s..e].iter().copied().zip(self.values[s..e].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn mul_block(&self, x: &DMatrix<T>) -> DMatrix<T> {
        let k = x.ncols();
        let mut out = DMatrix::zeros(self.n, k);
        for c in 0..k {
            let xc = x.column(c);
            for i in 0..self.n {
                let mut acc = T::zero();
                for (j, v) in self.row(i) {
                    acc += v * xc[j];
                }
                out[(i, c)] = acc;
            }
        }
        out
    }

    pub fn diagonal(&self) -> DVector<T> {
        DVector::from_fn(self.n, |i, _| {
            self.row(i).find(|&(j, _)| j == i).map(|(_, v)| v).unwrap_or_else(T::zero)
        })
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    /// Extracts the block of rows `rows` and columns `cols`.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> SparseBlock<T> {
        let mut col_pos = vec![usize::MAX; self.n];
        for (p, &c) in cols.iter().enumerate() {
            col_pos[c] = p;
        }
        let mut entries = Vec::new();
        for (p, &r) in rows.iter().enumerate() {
            for (j, v) in self.row(r) {
                if col_pos[j] != usize::MAX {
                    entries.push((p, col_pos[j], v));
                }
            }
        }
        SparseBlock {
            nrows: rows.len(),
            ncols: cols.len(),
            entries,
        }
    }
}

/// A rectangular sparse block in coordinate form.
#[derive(Debug, Clone)]
pub struct SparseBlock<T: Scalar> {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize, T)>,
}

impl<T: Scalar> SparseBlock<T> {
    pub fn mul_block(&self, x: &DMatrix<T>) -> DMatrix<T> {
        assert_eq!(x.nrows(), self.ncols, "sparse block shape mismatch");
        let mut out = DMatrix::zeros(self.nrows, x.ncols());
        for &(i, j, v) in &self.entries {
            for c in 0..x.ncols() {
                out[(i, c)] += v * x[(j, c)];
            }
        }
        out
    }
}

/// Symmetric low-rank term `U·S·Uᵀ` with a small symmetric core `S`.
#[derive(Debug, Clone)]
pub struct LowRankTerm<T: Scalar> {
    pub basis: DMatrix<T>,
    pub core: DMatrix<T>,
}

impl<T: Scalar> LowRankTerm<T> {
    pub fn new(basis: DMatrix<T>, core: DMatrix<T>) -> Result<Self> {
        if core.nrows() != basis.ncols() || !core.is_square() {
            return Err(Error::Dimension(format!(
                "low-rank core {}x{} does not match basis with {} columns",
                core.nrows(),
                core.ncols(),
                basis.ncols()
            )));
        }
        Ok(Self {
            basis,
            core: sym(&core),
        })
    }

    /// `U diag(weights) Uᵀ`.
    pub fn diagonal_core(basis: DMatrix<T>, weights: &DVector<T>) -> Result<Self> {
        Self::new(basis, DMatrix::from_diagonal(weights))
    }

    pub fn apply(&self, x: &DMatrix<T>) -> DMatrix<T> {
        &self.basis * (&self.core * (self.basis.transpose() * x))
    }

    fn diagonal(&self) -> DVector<T> {
        let us = &self.basis * &self.core;
        DVector::from_fn(self.basis.nrows(), |i, _| us.row(i).dot(&self.basis.row(i)))
    }
}

/// Sparse symmetric matrix plus a sum of symmetric low-rank corrections.
///
/// Applying it costs `O(nnz + n·rank)` per column.
#[derive(Debug, Clone)]
pub struct SparseSymOperator<T: Scalar> {
    sparse: CsrMatrix<T>,
    corrections: Vec<LowRankTerm<T>>,
}

impl<T: Scalar> SparseSymOperator<T> {
    /// Builds the symmetric closure of the given triplets.
    ///
    /// An off-diagonal entry given in only one orientation is mirrored. If both
    /// orientations are present they must agree. Duplicates in the same
    /// orientation are summed.
    pub fn from_triplets(n: usize, triplets: impl IntoIterator<Item = (usize, usize, T)>) -> Result<Self> {
        // (value stored as given for i <= j, value given for i > j)
        let mut pairs: BTreeMap<(usize, usize), (Option<T>, Option<T>)> = BTreeMap::new();
        for (i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::Dimension(format!("entry ({i}, {j}) outside {n}x{n}")));
            }
            if !v.is_finite() {
                return Err(Error::Invalid(format!("non-finite entry at ({i}, {j})")));
            }
            let slot = pairs.entry((i.min(j), i.max(j))).or_insert((None, None));
            let target = if i <= j { &mut slot.0 } else { &mut slot.1 };
            *target = Some(target.unwrap_or_else(T::zero) + v);
        }
        let mut full = Vec::with_capacity(2 * pairs.len());
        for ((i, j), (upper, lower)) in pairs {
            let v = match (upper, lower) {
                (Some(a), Some(b)) if i != j => {
                    let scale = a.abs().max(b.abs());
                    if (a - b).abs() > T::lit(1e-12) * scale {
                        return Err(Error::NotSymmetric(((a - b).abs() / scale).as_f64()));
                    }
                    a
                }
                (Some(a), _) | (None, Some(a)) => a,
                (None, None) => continue,
            };
            full.push((i, j, v));
            if i != j {
                full.push((j, i, v));
            }
        }
        Ok(Self {
            sparse: CsrMatrix::from_triplets(n, full)?,
            corrections: Vec::new(),
        })
    }

    pub fn from_dense(m: &DMatrix<T>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension("operator must be square".into()));
        }
        let n = m.nrows();
        let trip = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter_map(|(i, j)| {
            let v = m[(i, j)];
            (v != T::zero()).then_some((i, j, v))
        });
        Self::from_triplets(n, trip.collect::<Vec<_>>())
    }

    pub fn diagonal_matrix(values: &[T]) -> Result<Self> {
        Self::from_triplets(
            values.len(),
            values.iter().enumerate().map(|(i, &v)| (i, i, v)).collect::<Vec<_>>(),
        )
    }

    /// Returns a copy with an additional low-rank term.
    pub fn with_correction(&self, term: LowRankTerm<T>) -> Result<Self> {
        if term.basis.nrows() != self.dim() {
            return Err(Error::Dimension(format!(
                "low-rank basis has {} rows, operator dimension is {}",
                term.basis.nrows(),
                self.dim()
            )));
        }
        let mut out = self.clone();
        out.corrections.push(term);
        Ok(out)
    }

    pub fn sparse_part(&self) -> &CsrMatrix<T> {
        &self.sparse
    }

    pub fn corrections(&self) -> &[LowRankTerm<T>] {
        &self.corrections
    }

    pub fn nnz(&self) -> usize {
        self.sparse.nnz()
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = self.sparse.to_dense();
        for t in &self.corrections {
            m += &t.basis * &t.core * t.basis.transpose();
        }
        sym(&m)
    }
}

impl<T: Scalar> SymOperator<T> for SparseSymOperator<T> {
    fn dim(&self) -> usize {
        self.sparse.dim()
    }

    fn apply(&self, x: &DMatrix<T>) -> DMatrix<T> {
        let mut y = self.sparse.mul_block(x);
        for t in &self.corrections {
            y += t.apply(x);
        }
        y
    }

    fn diagonal(&self) -> DVector<T> {
        let mut d = self.sparse.diagonal();
        for t in &self.corrections {
            d += t.diagonal();
        }
        d
    }
}

/// Wraps an operator and counts block applications.
#[derive(Debug)]
pub struct CountingOperator<'a, O: ?Sized> {
    inner: &'a O,
    count: std::sync::atomic::AtomicUsize,
}

impl<'a, O: ?Sized> CountingOperator<'a, O> {
    pub fn new(inner: &'a O) -> Self {
        Self {
            inner,
            count: std::sync::atomic::AtomicUsize::new(0),
        }
    }

    pub fn count(&self) -> usize {
        self.count.load(std::sync::atomic::Ordering::Relaxed)
    }
}

impl<'a, T: Scalar, O: SymOperator<T> + ?Sized> SymOperator<T> for CountingOperator<'a, O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &DMatrix<T>) -> DMatrix<T> {
        self.count.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        self.inner.apply(x)
    }

    fn diagonal(&self) -> DVector<T> {
        self.inner.diagonal()
    }
}
