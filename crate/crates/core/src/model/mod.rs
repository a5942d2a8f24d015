//! The quadratic objective, its Riemannian derivatives, the lifted surrogate
//! and the optimality certificates.

mod certificate;
mod problem;

use nalgebra::{DMatrix, DVector};

pub use certificate::{degenerate_solution, second_order_margin, QualifiedCertificate, CERT_EIG_TOL};
pub use problem::{
    euclidean_grad, hessian_apply, multiplier, objective, riemannian_grad, GroundSpectrum, QuadraticProblem,
    DENSE_GROUND_LIMIT,
};

use crate::error::{Error, Result};
use crate::linalg::{nuclear_norm, smallest_singular_value, LowRankTerm, SpdFactors, SparseSymOperator, SymOperator};
use crate::scalar::Scalar;

/// `Ã = A + V_g diag(d_r − dᵢ) V_gᵀ`, kept as a low-rank correction.
pub fn lift<T: Scalar>(a: &SparseSymOperator<T>, ground: &GroundSpectrum<T>) -> Result<SparseSymOperator<T>> {
    let dr = ground.dr();
    let shift = ground.d.map(|d| dr - d);
    if shift.iter().all(|&s| s == T::zero()) {
        return Ok(a.clone());
    }
    a.with_correction(LowRankTerm::diagonal_core(ground.vg.clone(), &shift)?)
}

/// Smallest singular value of `V_gᵀ B C⁻¹`.
pub fn sigma_nondegeneracy<T: Scalar>(ground: &GroundSpectrum<T>, b: &DMatrix<T>, c: &SpdFactors<T>) -> T {
    smallest_singular_value(&(ground.vg.transpose() * b * &c.inv))
}

/// Replacement for `σ` when it vanishes: `1e-8·max(|d_r|, 1)`.
pub fn sigma_floor<T: Scalar>(dr: T) -> T {
    T::lit(1e-8) * dr.abs().max(T::one())
}

/// `C^{1/2} U diag(min(γᵢ, d_r − σ)) Uᵀ C^{1/2}` where `C^{-1/2} Λ C^{-1/2} = U diag(γ) Uᵀ`.
pub fn safeguard<T: Scalar>(lambda: &DMatrix<T>, c: &SpdFactors<T>, dr: T, sigma: T) -> Result<DMatrix<T>> {
    if !(sigma > T::zero()) {
        return Err(Error::Degenerate(format!("safeguard needs sigma > 0, got {sigma}")));
    }
    Ok(clamp_whitened(lambda, c, dr - sigma))
}

/// Safeguard with the degenerate fallback. Returns the clamped multiplier and
/// whether `σ` had to be replaced by [`sigma_floor`].
pub fn safeguard_or_floor<T: Scalar>(lambda: &DMatrix<T>, c: &SpdFactors<T>, dr: T, sigma: T) -> (DMatrix<T>, bool) {
    let floor = sigma_floor(dr);
    if sigma > floor {
        (clamp_whitened(lambda, c, dr - sigma), false)
    } else {
        (clamp_whitened(lambda, c, dr - floor), true)
    }
}

fn clamp_whitened<T: Scalar>(lambda: &DMatrix<T>, c: &SpdFactors<T>, cap: T) -> DMatrix<T> {
    let eig = c.whitened_eig(lambda);
    let clamped = DVector::from_iterator(eig.len(), eig.values.iter().map(|&g| g.min(cap)));
    let inner = &eig.vectors * DMatrix::from_diagonal(&clamped) * eig.vectors.transpose();
    crate::linalg::sym(&(&c.sqrt * inner * &c.sqrt))
}

/// `½ tr(C) d_r − ‖B‖_*`, a lower bound for the lifted objective.
pub fn lower_bound<T: Scalar>(problem: &QuadraticProblem<T>) -> T {
    T::lit(0.5) * problem.c().trace() * problem.ground().dr() - nuclear_norm(problem.b())
}

/// The majorizing model `f_k(X) = ½⟨X, ÃXC⟩ − ⟨X, B_k⟩ + ½⟨X_k, D X_k C⟩`
/// with `D = Ã − A` and `B_k = B + D X_k C`.
///
/// It touches `f` at `X_k` to first order and dominates it on the manifold.
#[derive(Debug, Clone)]
pub struct SurrogateModel<'a, T: Scalar, O: SymOperator<T> + ?Sized = SparseSymOperator<T>> {
    pub base: DMatrix<T>,
    pub a_tilde: &'a O,
    pub c: &'a DMatrix<T>,
    pub b_k: DMatrix<T>,
    pub constant: T,
}

impl<'a, T: Scalar, O: SymOperator<T> + ?Sized> SurrogateModel<'a, T, O> {
    pub fn objective(&self, x: &DMatrix<T>) -> T {
        objective(self.a_tilde, &self.b_k, self.c, x) + self.constant
    }

    /// `ÃXC − B_k`.
    pub fn euclidean_grad(&self, x: &DMatrix<T>) -> DMatrix<T> {
        euclidean_grad(self.a_tilde, &self.b_k, self.c, x)
    }

    pub fn multiplier(&self, x: &DMatrix<T>) -> DMatrix<T> {
        multiplier(self.a_tilde, &self.b_k, self.c, x)
    }
}

/// Builds the surrogate at `x_k`.
pub fn surrogate<'a, T: Scalar>(problem: &'a QuadraticProblem<T>, x_k: &DMatrix<T>) -> SurrogateModel<'a, T> {
    surrogate_with(problem.lifted(), problem, x_k)
}

/// [`surrogate`] with a caller-supplied handle to `Ã` (for instance a
/// counting wrapper).
pub fn surrogate_with<'a, T: Scalar, O: SymOperator<T> + ?Sized>(
    a_tilde: &'a O,
    problem: &'a QuadraticProblem<T>,
    x_k: &DMatrix<T>,
) -> SurrogateModel<'a, T, O> {
    let g = problem.ground();
    let dr = g.dr();
    let shift = g.d.map(|d| dr - d);
    // D X_k C with D = V_g diag(d_r − dᵢ) V_gᵀ.
    let dx = &g.vg * DMatrix::from_diagonal(&shift) * (g.vg.transpose() * x_k);
    let dxc = &dx * problem.c();
    let constant = x_k.dot(&dxc) * T::lit(0.5);
    SurrogateModel {
        base: x_k.clone(),
        a_tilde,
        c: problem.c(),
        b_k: problem.b() + dxc,
        constant,
    }
}
