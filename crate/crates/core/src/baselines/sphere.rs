//! Closed-form global minimizer of `xᵀAx − 2⟨b, x⟩` on the unit sphere.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::dense_sym_eig;
use crate::scalar::Scalar;

/// Largest dimension accepted by the dense oracle.
pub const SPHERE_ORACLE_MAX_DIM: usize = 2000;

/// Iteration cap of the secular-equation solve.
const SECULAR_MAX_ITER: usize = 80;

#[derive(Debug, Clone)]
pub struct SphereSolution<T: Scalar> {
    pub x: DVector<T>,
    /// Multiplier with `(A − λI)x = b`, `λ ≤ d₁`.
    pub lambda: T,
    /// The minimizer came from the `V_gᵀb = 0`, `‖(A − d₁I)†b‖ ≤ 1` branch.
    pub degenerate: bool,
}

impl<T: Scalar> SphereSolution<T> {
    /// `xᵀAx − 2⟨b, x⟩`.
    pub fn objective(&self, a: &DMatrix<T>, b: &DVector<T>) -> T {
        (a * &self.x).dot(&self.x) - self.x.dot(b) * T::lit(2.0)
    }
}

/// Global minimizer via the eigendecomposition of `A` and the secular
/// equation `‖(A − λI)⁻¹b‖ = 1` on `λ < d₁`.
pub fn sphere_trs_oracle<T: Scalar>(a: &DMatrix<T>, b: &DVector<T>) -> Result<SphereSolution<T>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::Dimension(format!("A is {}x{}, b has {}", n, a.ncols(), b.len())));
    }
    if n == 0 || n > SPHERE_ORACLE_MAX_DIM {
        return Err(Error::Invalid(format!("sphere oracle needs 1 <= n <= {SPHERE_ORACLE_MAX_DIM}, got {n}")));
    }
    let eig = dense_sym_eig(a)?;
    let d = &eig.values;
    let beta = eig.vectors.transpose() * b;
    let bnorm = b.norm();
    let d1 = d[0];
    let scale = d.iter().fold(T::one(), |m, v| m.max(v.abs()));
    let ground_tol = T::lit(1e-10) * scale;
    let in_ground = |i: usize| d[i] - d1 <= ground_tol;
    let bg = (0..n).filter(|&i| in_ground(i)).map(|i| beta[i] * beta[i]).fold(T::zero(), |s, v| s + v).sqrt();
    let deg_tol = T::lit(1e-12) * bnorm.max(T::one());

    let coords = |lam: T| DVector::from_fn(n, |i, _| beta[i] / (d[i] - lam));

    if bg <= deg_tol {
        // ‖(A − d₁I)†b‖ over the non-ground coordinates.
        let perp = DVector::from_fn(n, |i, _| if in_ground(i) { T::zero() } else { beta[i] / (d[i] - d1) });
        let c_perp = perp.norm();
        if c_perp <= T::one() {
            let mut y = perp;
            y[0] = (T::one() - c_perp * c_perp).max(T::zero()).sqrt();
            return Ok(SphereSolution {
                x: &eig.vectors * y,
                lambda: d1,
                degenerate: true,
            });
        }
    }

    // ‖x(λ)‖ increases on (−∞, d₁); the root lies in [d₁ − ‖b‖, d₁ − ‖V_gᵀb‖].
    let norm_at = |lam: T| -> T {
        (0..n)
            .filter(|&i| !(bg <= deg_tol && in_ground(i)))
            .map(|i| {
                let t = beta[i] / (d[i] - lam);
                t * t
            })
            .fold(T::zero(), |s, v| s + v)
            .sqrt()
    };
    let mut lo = d1 - bnorm;
    let mut hi = if bg > deg_tol { d1 - bg } else { d1 };
    if norm_at(lo) >= T::one() {
        // Only when ‖b‖ = ‖V_gᵀb‖ exactly; then lo is the root.
        hi = lo;
    }
    let mut lam = if hi > lo { T::lit(0.5) * (lo + hi) } else { lo };
    for _ in 0..SECULAR_MAX_ITER {
        if hi - lo <= T::eps() * scale.max(bnorm) {
            break;
        }
        // Newton on ψ(λ) = 1/‖x(λ)‖ − 1, which is nearly linear.
        let nx = norm_at(lam);
        let psi = T::one() / nx - T::one();
        if psi > T::zero() {
            lo = lam;
        } else {
            hi = lam;
        }
        let dn = (0..n)
            .filter(|&i| !(bg <= deg_tol && in_ground(i)))
            .map(|i| {
                let t = d[i] - lam;
                beta[i] * beta[i] / (t * t * t)
            })
            .fold(T::zero(), |s, v| s + v)
            / nx;
        let dpsi = -dn / (nx * nx);
        let newton = lam - psi / dpsi;
        lam = if dpsi != T::zero() && newton > lo && newton < hi {
            newton
        } else {
            T::lit(0.5) * (lo + hi)
        };
    }
    let mut x = &eig.vectors * coords(lam);
    if bg <= deg_tol {
        // Drop roundoff in the ground coordinates.
        let y = DVector::from_fn(n, |i, _| if in_ground(i) { T::zero() } else { beta[i] / (d[i] - lam) });
        x = &eig.vectors * y;
    }
    let nx = x.norm();
    if nx > T::zero() {
        x /= nx;
    }
    Ok(SphereSolution {
        x,
        lambda: lam,
        degenerate: false,
    })
}
