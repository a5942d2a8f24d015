use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{objective, sigma_nondegeneracy, QuadraticProblem};
use crate::error::{Error, Result};
use crate::linalg::{cg_solve, dense_sym_eig, project_out, spectral_norm, sym_fn, SymOperator};
use crate::manifold::{polar_project, StiefelPoint};
use crate::scalar::Scalar;

/// Relative tolerance for eigenvalue comparisons in certificates.
pub const CERT_EIG_TOL: f64 = 1e-10;

/// Checkable evidence about a candidate solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualifiedCertificate {
    /// `(Xᵀ(AXC − B))_sym`, row-major.
    pub lambda: Vec<Vec<f64>>,
    /// Eigenvalues of `C^{-1/2} Λ C^{-1/2}`, ascending.
    pub gamma: Vec<f64>,
    /// `‖AXC − B − XΛ‖_F`.
    pub residual: f64,
    /// `‖WᵀX‖_F` for a constrained problem, else zero. Above `tol` the point
    /// is infeasible and neither flag is set.
    #[serde(default)]
    pub constraint_violation: f64,
    pub sigma: f64,
    pub d1: f64,
    pub dr: f64,
    /// `d_r − σ`: every qualified point has `γᵢ` below this.
    pub safeguard_bound: f64,
    pub qualified: bool,
    pub global: bool,
    /// `C = I`, the left singular vectors of `B` lie in `span(V_g)` and `X`
    /// is as good as the polar factor of `B`, which is then a global minimizer.
    pub aligned_global: bool,
}

impl QualifiedCertificate {
    /// Certificate for `x` with first-order tolerance `tol`.
    pub fn compute<T: Scalar>(problem: &QuadraticProblem<T>, x: &DMatrix<T>, tol: f64) -> Self {
        let (a, b, c) = (problem.a(), problem.b(), problem.c());
        let g = a.apply(x) * c - b;
        let lambda = crate::linalg::sym(&(x.transpose() * &g));
        let residual = (&g - x * &lambda).norm().as_f64();
        let gamma: Vec<f64> = problem
            .c_factors()
            .whitened_eig(&lambda)
            .values
            .iter()
            .map(|v| v.as_f64())
            .collect();
        let gamma_max = gamma.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ground = problem.ground();
        let (d1, dr) = (ground.d1().as_f64(), ground.dr().as_f64());
        let sigma = sigma_nondegeneracy(ground, b, problem.c_factors()).as_f64();
        let constraint_violation = problem.constraint().map_or(0.0, |w| (w.transpose() * x).norm().as_f64());
        let critical = residual <= tol && constraint_violation <= tol;
        let qualified = critical && gamma_max <= dr + CERT_EIG_TOL * dr.abs().max(1.0);
        let global = critical && gamma_max <= d1 + CERT_EIG_TOL * d1.abs().max(1.0);
        let lambda_rows = (0..lambda.nrows())
            .map(|i| lambda.row(i).iter().map(|v| v.as_f64()).collect())
            .collect();
        Self {
            lambda: lambda_rows,
            gamma,
            residual,
            constraint_violation,
            sigma,
            d1,
            dr,
            safeguard_bound: dr - sigma,
            qualified,
            global,
            aligned_global: critical && aligned_global(problem, x, tol),
        }
    }

    pub fn gamma_max(&self) -> f64 {
        self.gamma.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn lambda_matrix(&self) -> DMatrix<f64> {
        let r = self.lambda.len();
        DMatrix::from_fn(r, r, |i, j| self.lambda[i][j])
    }
}

fn aligned_global<T: Scalar>(problem: &QuadraticProblem<T>, x: &DMatrix<T>, tol: f64) -> bool {
    let (b, c) = (problem.b(), problem.c());
    let r = problem.r();
    if (c - DMatrix::identity(r, r)).norm().as_f64() > 1e-10 {
        return false;
    }
    let vg = &problem.ground().vg;
    let outside = (b - vg * (vg.transpose() * b)).norm().as_f64();
    if outside > 1e-10 * b.norm().as_f64().max(1.0) {
        return false;
    }
    let Ok(p) = polar_project(b) else {
        return false;
    };
    let a = problem.a();
    let fx = objective(a, b, c, x).as_f64();
    let fp = objective(a, b, c, p.matrix()).as_f64();
    fx <= fp + tol.max(1e-12) * fp.abs().max(1.0)
}

impl<T: Scalar> QuadraticProblem<T> {
    pub fn qualified_certificate(&self, x: &StiefelPoint<T>, tol: f64) -> QualifiedCertificate {
        QualifiedCertificate::compute(self, x.matrix(), tol)
    }
}

/// `λ_min(X⊥ᵀ A X⊥) − max γᵢ` at a critical point. Nonnegative is necessary
/// for a local minimum.
pub fn second_order_margin<T: Scalar>(problem: &QuadraticProblem<T>, x: &StiefelPoint<T>, x_perp: &DMatrix<T>) -> Result<T> {
    let (n, r) = (problem.n(), problem.r());
    if x_perp.nrows() != n || x_perp.ncols() == 0 || x_perp.ncols() > n - r {
        return Err(Error::Dimension("complement basis shape".into()));
    }
    let cert = problem.qualified_certificate(x, 1e-6);
    if cert.residual > 1e-6 {
        return Err(Error::NotCritical(cert.residual));
    }
    let compressed = problem.a().compress(x_perp);
    let d_perp = dense_sym_eig(&compressed)?.values[0];
    Ok(d_perp - T::lit(cert.gamma_max()))
}

/// Global solution `X = V_g Q (I − MᵀM)^{1/2} + M` of the lifted problem in the
/// degenerate case `V_gᵀBC⁻¹ = 0`, where `M = (Ã − d_r I)† B C⁻¹` and `Q` is
/// the orthogonal `u_choice`. The multiplier is `d_r C`.
pub fn degenerate_solution<T: Scalar>(problem: &QuadraticProblem<T>, u_choice: &DMatrix<T>) -> Result<StiefelPoint<T>> {
    let r = problem.r();
    if u_choice.shape() != (r, r) {
        return Err(Error::Dimension("u_choice must be r x r".into()));
    }
    if (u_choice.transpose() * u_choice - DMatrix::identity(r, r)).norm().as_f64() > 1e-10 {
        return Err(Error::Invalid("u_choice must be orthogonal".into()));
    }
    let ground = problem.ground();
    let vg = &ground.vg;
    let g = problem.b() * &problem.c_factors().inv;
    let overlap = (vg.transpose() * &g).norm();
    if overlap > T::lit(1e-10) * g.norm().max(T::one()) {
        return Err(Error::NotDegenerate(overlap.as_f64()));
    }
    let dr = ground.dr();
    let lifted = problem.lifted();
    let w = problem.constraint();
    let proj = |z: &DMatrix<T>| project_out(&(z - vg * (vg.transpose() * z)), w);
    let rhs = proj(&g);
    let op = |z: &DMatrix<T>| {
        let pz = proj(z);
        proj(&(lifted.apply(&pz) - &pz * dr))
    };
    let m = cg_solve(op, &rhs, T::lit(1e-13), 20 * problem.n().max(50)).map_err(Error::from)?.x;
    let m = proj(&m);
    let bound = spectral_norm(&m);
    if bound > T::one() + T::lit(1e-12) {
        return Err(Error::NormBound(bound.as_f64()));
    }
    let gram = DMatrix::identity(r, r) - m.transpose() * &m;
    let root = sym_fn(&gram, |v| v.max(T::zero()).sqrt());
    let x = vg * u_choice * root + m;
    let err = crate::manifold::feasibility_error(&x);
    if err.as_f64() > 1e-8 {
        return Err(Error::Invalid(format!("degenerate construction left the manifold ({:e})", err.as_f64())));
    }
    StiefelPoint::new(polar_project(&x)?.into_matrix())
}
