//! Conjugate gradients on matrix-valued unknowns.
//!
//! The unknown is an `n×r` block treated as one vector under the Frobenius
//! inner product, so operators such as `Z ↦ AZC − ZΛ` that couple columns are
//! handled directly.

use nalgebra::DMatrix;

use crate::error::Error;
use crate::scalar::Scalar;

/// The true residual is recomputed every this many iterations.
const RESIDUAL_REFRESH: usize = 50;

#[derive(Debug, Clone)]
pub struct CgSolution<T: Scalar> {
    pub x: DMatrix<T>,
    pub iterations: usize,
    pub residual: T,
    /// True residual norms at the start and at every refresh point.
    pub restart_residuals: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgFailureKind {
    NegativeCurvature,
    MaxIterations,
}

/// A failed solve. `partial` holds the last iterate.
#[derive(Debug, Clone)]
pub struct CgFailure<T: Scalar> {
    pub kind: CgFailureKind,
    pub partial: DMatrix<T>,
    pub iterations: usize,
    pub residual: T,
    pub curvature: T,
}

impl<T: Scalar> From<CgFailure<T>> for Error {
    fn from(f: CgFailure<T>) -> Self {
        match f.kind {
            CgFailureKind::NegativeCurvature => Error::Indefinite(f.curvature.as_f64()),
            CgFailureKind::MaxIterations => Error::NoConvergence {
                method: "conjugate gradient",
                iterations: f.iterations,
                residual: f.residual.as_f64(),
            },
        }
    }
}

/// Solves `op(X) = rhs` for a symmetric positive (semi)definite `op`.
///
/// Stops when `‖op(X) − rhs‖ ≤ tol·max(1, ‖rhs‖)`. Fails on a search direction
/// with `⟨p, op(p)⟩ < −tol·‖p‖²` or after `max_iter` iterations.
pub fn cg_solve<T, F>(op: F, rhs: &DMatrix<T>, tol: T, max_iter: usize) -> Result<CgSolution<T>, CgFailure<T>>
where
    T: Scalar,
    F: Fn(&DMatrix<T>) -> DMatrix<T>,
{
    let target = tol * rhs.norm().max(T::one());
    let mut x = DMatrix::zeros(rhs.nrows(), rhs.ncols());
    let mut r = rhs.clone();
    let mut rr = r.norm_squared();
    let mut restart_residuals = vec![rr.sqrt()];
    if rr.sqrt() <= target {
        return Ok(CgSolution {
            x,
            iterations: 0,
            residual: rr.sqrt(),
            restart_residuals,
        });
    }
    let mut p = r.clone();
    for it in 1..=max_iter {
        let ap = op(&p);
        let curv = p.dot(&ap);
        let pp = p.norm_squared();
        if curv < -tol * pp || curv == T::zero() {
            return Err(CgFailure {
                kind: CgFailureKind::NegativeCurvature,
                partial: x,
                iterations: it,
                residual: rr.sqrt(),
                curvature: curv / pp,
            });
        }
        let alpha = rr / curv;
        x += &p * alpha;
        if it % RESIDUAL_REFRESH == 0 {
            r = rhs - op(&x);
            restart_residuals.push(r.norm());
        } else {
            r -= &ap * alpha;
        }
        let rr_new = r.norm_squared();
        if rr_new.sqrt() <= target {
            // Confirm with the true residual before declaring success.
            let true_res = (rhs - op(&x)).norm();
            if true_res <= target {
                return Ok(CgSolution {
                    x,
                    iterations: it,
                    residual: true_res,
                    restart_residuals,
                });
            }
        }
        let beta = rr_new / rr;
        p = &r + &p * beta;
        rr = rr_new;
    }
    let residual = (rhs - op(&x)).norm();
    Err(CgFailure {
        kind: CgFailureKind::MaxIterations,
        partial: x,
        iterations: max_iter,
        residual,
        curvature: T::zero(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_operator() {
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let s = cg_solve(|x: &DMatrix<f64>| x.clone(), &r, 1e-12, 10).unwrap();
        assert!((s.x - r).norm() < 1e-14);
    }

    #[test]
    fn diagonal_columnwise() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0]));
        let rhs = DMatrix::from_row_slice(2, 1, &[2.0, 2.0]);
        let s = cg_solve(|x: &DMatrix<f64>| &d * x, &rhs, 1e-12, 10).unwrap();
        assert!((s.x[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((s.x[(1, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_spd_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = DMatrix::from_fn(20, 20, |_, _| rng.random_range(-1.0..1.0));
        let a = &g * g.transpose() + DMatrix::identity(20, 20) * 0.5;
        let rhs = DMatrix::from_fn(20, 3, |_, _| rng.random_range(-1.0..1.0));
        let s = cg_solve(|x: &DMatrix<f64>| &a * x, &rhs, 1e-13, 500).unwrap();
        let oracle = a.clone().cholesky().unwrap().solve(&rhs);
        assert!((s.x - oracle).norm() <= 1e-9);
    }

    #[test]
    fn detects_negative_curvature() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0]));
        let rhs = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let err = cg_solve(|x: &DMatrix<f64>| &a * x, &rhs, 1e-10, 10).unwrap_err();
        assert_eq!(err.kind, CgFailureKind::NegativeCurvature);
        assert!(matches!(Error::from(err), Error::Indefinite(_)));
    }

    #[test]
    fn iteration_cap_reports_partial() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = DMatrix::from_fn(30, 30, |_, _| rng.random_range(-1.0..1.0));
        let a = &g * g.transpose() + DMatrix::identity(30, 30) * 1e-3;
        let rhs = DMatrix::from_fn(30, 1, |_, _| rng.random_range(-1.0..1.0));
        let err = cg_solve(|x: &DMatrix<f64>| &a * x, &rhs, 1e-14, 2).unwrap_err();
        assert_eq!(err.kind, CgFailureKind::MaxIterations);
        assert_eq!(err.partial.shape(), (30, 1));
    }

    #[test]
    fn residual_decreases_across_restarts() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 300;
        // Tridiagonal SPD operator needing a few hundred iterations.
        let op = |x: &DMatrix<f64>| {
            let mut y = x * 2.002;
            for i in 0..n {
                if i > 0 {
                    y[(i, 0)] -= x[(i - 1, 0)];
                }
                if i + 1 < n {
                    y[(i, 0)] -= x[(i + 1, 0)];
                }
            }
            y
        };
        let rhs = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
        let s = cg_solve(op, &rhs, 1e-12, 2000).unwrap();
        assert!(s.restart_residuals.len() > 2);
        for w in s.restart_residuals.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }
}
