//! Dense symmetric eigendecomposition and small-matrix helpers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Eigenpairs of a symmetric operator, values ascending.
#[derive(Debug, Clone)]
pub struct EigPairs<T: Scalar> {
    pub values: DVector<T>,
    /// Columns are the unit eigenvectors, in the order of `values`.
    pub vectors: DMatrix<T>,
}

impl<T: Scalar> EigPairs<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Keeps the first `k` pairs.
    pub fn truncate(mut self, k: usize) -> Self {
        let k = k.min(self.len());
        self.values = self.values.rows(0, k).into_owned();
        self.vectors = self.vectors.columns(0, k).into_owned();
        self
    }
}

/// Symmetric part `(M + Mᵀ)/2`.
pub fn sym<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

/// Largest absolute entry.
pub fn max_abs<T: Scalar>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
}

/// Relative asymmetry `max|M - Mᵀ| / max|M|` (0 for the zero matrix).
pub fn asymmetry<T: Scalar>(m: &DMatrix<T>) -> T {
    let scale = max_abs(m);
    if scale == T::zero() {
        return T::zero();
    }
    max_abs(&(m - m.transpose())) / scale
}

fn symmetry_tolerance<T: Scalar>() -> T {
    T::lit(1e-12).max(T::eps() * T::lit(16.0))
}

/// Flips the sign of each column so that its first largest-magnitude entry
/// is positive. Makes eigenvector output deterministic.
pub(crate) fn canonical_signs<T: Scalar>(v: &mut DMatrix<T>) {
    for mut col in v.column_iter_mut() {
        let peak = col.iter().fold(T::zero(), |acc, x| acc.max(x.abs()));
        if peak == T::zero() {
            continue;
        }
        let cut = peak * (T::one() - T::lit(1e-8).max(T::eps() * T::lit(64.0)));
        if let Some(first) = col.iter().copied().find(|x| x.abs() >= cut) {
            if first < T::zero() {
                col.neg_mut();
            }
        }
    }
}

/// Full eigendecomposition of a dense symmetric matrix, ascending.
pub fn dense_sym_eig<T: Scalar>(m: &DMatrix<T>) -> Result<EigPairs<T>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let asym = asymmetry(m);
    if asym > symmetry_tolerance() {
        return Err(Error::NotSymmetric(asym.as_f64()));
    }
    Ok(sym_eig_unchecked(&sym(m)))
}

/// Eigendecomposition of a matrix the caller guarantees to be symmetric.
pub(crate) fn sym_eig_unchecked<T: Scalar>(m: &DMatrix<T>) -> EigPairs<T> {
    let n = m.nrows();
    if n == 0 {
        return EigPairs {
            values: DVector::zeros(0),
            vectors: DMatrix::zeros(0, 0),
        };
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    canonical_signs(&mut vectors);
    EigPairs { values, vectors }
}

/// Applies a scalar function to the eigenvalues of a symmetric matrix.
pub fn sym_fn<T: Scalar>(m: &DMatrix<T>, f: impl Fn(T) -> T) -> DMatrix<T> {
    let eig = sym_eig_unchecked(&sym(m));
    let mapped = DVector::from_iterator(eig.len(), eig.values.iter().map(|&v| f(v)));
    &eig.vectors * DMatrix::from_diagonal(&mapped) * eig.vectors.transpose()
}

/// Singular values, descending.
pub fn singular_values<T: Scalar>(m: &DMatrix<T>) -> Vec<T> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<T> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    s
}

/// Smallest singular value (0 for an empty matrix).
pub fn smallest_singular_value<T: Scalar>(m: &DMatrix<T>) -> T {
    let s = singular_values(m);
    if s.len() < m.nrows().min(m.ncols()) || s.is_empty() {
        return T::zero();
    }
    *s.last().unwrap()
}

/// Nuclear norm: the sum of singular values.
pub fn nuclear_norm<T: Scalar>(m: &DMatrix<T>) -> T {
    singular_values(m).into_iter().fold(T::zero(), |a, b| a + b)
}

/// Spectral norm of a small dense matrix.
pub fn spectral_norm<T: Scalar>(m: &DMatrix<T>) -> T {
    singular_values(m).first().copied().unwrap_or_else(T::zero)
}

/// Cached matrix functions of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactors<T: Scalar> {
    pub matrix: DMatrix<T>,
    pub sqrt: DMatrix<T>,
    pub inv_sqrt: DMatrix<T>,
    pub inv: DMatrix<T>,
    /// Eigenvalues, ascending.
    pub eigenvalues: DVector<T>,
}

impl<T: Scalar> SpdFactors<T> {
    pub fn new(c: &DMatrix<T>) -> Result<Self> {
        let eig = dense_sym_eig(c)?;
        let min = eig.values.iter().copied().fold(T::lit(f64::INFINITY), |a, b| a.min(b));
        if eig.is_empty() || min <= T::zero() {
            return Err(Error::Degenerate(format!(
                "matrix is not positive definite (smallest eigenvalue {:e})",
                min.as_f64()
            )));
        }
        let build = |f: &dyn Fn(T) -> T| {
            let d = DVector::from_iterator(eig.len(), eig.values.iter().map(|&v| f(v)));
            &eig.vectors * DMatrix::from_diagonal(&d) * eig.vectors.transpose()
        };
        Ok(Self {
            matrix: sym(c),
            sqrt: build(&|v: T| v.sqrt()),
            inv_sqrt: build(&|v: T| T::one() / v.sqrt()),
            inv: build(&|v: T| T::one() / v),
            eigenvalues: eig.values,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Eigenvalues of `C^{-1/2} Λ C^{-1/2}` with their eigenvectors, ascending.
    pub fn whitened_eig(&self, lambda: &DMatrix<T>) -> EigPairs<T> {
        sym_eig_unchecked(&sym(&(&self.inv_sqrt * lambda * &self.inv_sqrt)))
    }
}
