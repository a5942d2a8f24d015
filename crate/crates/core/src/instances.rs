//! Deterministic problem generators for tests and benchmarks.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::linalg::{sym, SparseSymOperator};
use crate::model::QuadraticProblem;
use crate::scalar::Scalar;

fn gaussian<T: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<T> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        T::lit(z)
    })
}

/// `A = diag(d)`, `B` with `δᵢ` on its leading diagonal, `C = I`.
pub fn diagonal_example<T: Scalar>(d: &[f64], delta: &[f64]) -> Result<QuadraticProblem<T>> {
    let n = d.len();
    let r = delta.len();
    let a = SparseSymOperator::diagonal_matrix(&d.iter().map(|&v| T::lit(v)).collect::<Vec<_>>())?;
    let mut b = DMatrix::zeros(n, r);
    for (i, &v) in delta.iter().enumerate() {
        b[(i, i)] = T::lit(v);
    }
    QuadraticProblem::new(a, b, DMatrix::identity(r, r))
}

/// `A = diag(1, 2, 4)`, `B = [[0.5, 0], [0, 0.5], [0, 0]]`, `C = I₂`.
pub fn e1<T: Scalar>() -> QuadraticProblem<T> {
    diagonal_example(&[1.0, 2.0, 4.0], &[0.5, 0.5]).expect("fixed instance is well formed")
}

/// Random dense symmetric `A`, Gaussian `B` scaled by `b_scale`, and
/// `C = GGᵀ/r + I/2`.
pub fn random_problem<T: Scalar>(n: usize, r: usize, b_scale: f64, seed: u64) -> Result<QuadraticProblem<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_symmetric::<T>(&mut rng, n);
    let b = gaussian::<T>(&mut rng, n, r) * T::lit(b_scale);
    let g = gaussian::<T>(&mut rng, r, r);
    let c = &g * g.transpose() / T::from_count(r) + DMatrix::identity(r, r) * T::lit(0.5);
    QuadraticProblem::new(SparseSymOperator::from_dense(&a)?, b, sym(&c))
}

/// Like [`random_problem`] with `C = I`.
pub fn random_problem_identity_c<T: Scalar>(n: usize, r: usize, b_scale: f64, seed: u64) -> Result<QuadraticProblem<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_symmetric::<T>(&mut rng, n);
    let b = gaussian::<T>(&mut rng, n, r) * T::lit(b_scale);
    QuadraticProblem::new(SparseSymOperator::from_dense(&a)?, b, DMatrix::identity(r, r))
}

fn random_symmetric<T: Scalar>(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<T> {
    let g = gaussian::<T>(rng, n, n);
    sym(&g)
}

/// Random `r = 1`, `C = 1` instance in the degenerate regime: `b` is
/// orthogonal to the ground eigenvector of `A` and
/// `‖(A − d₁I)†b‖ = c_perp ≤ 1`.
pub fn random_degenerate_sphere<T: Scalar>(n: usize, c_perp: f64, seed: u64) -> Result<QuadraticProblem<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Known spectrum in a random orthonormal basis.
    let q = crate::linalg::thin_qr(&gaussian::<T>(&mut rng, n, n));
    let mut d: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
    d.sort_by(f64::total_cmp);
    d[0] = 0.0;
    let a = &q * DMatrix::from_diagonal(&DVector::from_iterator(n, d.iter().map(|&v| T::lit(v)))) * q.transpose();
    // Pick coefficients on v₂…v_n, then scale so ‖(A − d₁I)†b‖ = c_perp.
    let coef: Vec<f64> = (1..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let pinv_norm = coef
        .iter()
        .zip(&d[1..])
        .map(|(c, dv)| (c / dv).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = c_perp / pinv_norm;
    let mut b = DMatrix::zeros(n, 1);
    for (k, c) in coef.iter().enumerate() {
        b += q.column(k + 1) * T::lit(c * scale);
    }
    QuadraticProblem::new(SparseSymOperator::from_dense(&sym(&a))?, b, DMatrix::identity(1, 1))
}
