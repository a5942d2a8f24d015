//! Sequential subspace method: each outer step minimizes the lifted surrogate
//! over a subspace of dimension at most `4r` built from the ground space, the
//! iterate, the gradient and an SQP direction.

mod subproblem;

use std::time::Instant;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use subproblem::{newton_direction_subspace, subproblem_solve, NewtonDirection, ReducedProblem, SubproblemResult};

use crate::error::{Error, Result};
use crate::linalg::{cg_solve, orthogonal_complement, project_out, sym, CgFailure, CountingOperator, SymOperator};
use crate::manifold::{polar_project, StiefelPoint};
use crate::model::{
    multiplier, objective, safeguard_or_floor, sigma_nondegeneracy, surrogate_with, QualifiedCertificate,
    QuadraticProblem, SurrogateModel,
};
use crate::report::{summary, IterationRecord, SandwichRecord, SolveReport, Termination};
use crate::scalar::Scalar;

/// Backtracking parameters for Armijo line searches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArmijoOptions {
    pub c1: f64,
    pub factor: f64,
    pub max_backtracks: usize,
}

impl Default for ArmijoOptions {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            factor: 0.5,
            max_backtracks: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsmOptions {
    /// Outer stop on the Riemannian gradient norm of the original problem.
    pub tol_grad: f64,
    pub max_outer: usize,
    pub cg_tol: f64,
    pub cg_max: usize,
    /// Inner stop on the reduced gradient norm.
    pub newton_tol: f64,
    pub newton_max: usize,
    pub armijo: ArmijoOptions,
    /// First-order tolerance used by the final certificate.
    pub cert_tol: f64,
}

impl Default for SsmOptions {
    fn default() -> Self {
        Self {
            tol_grad: 1e-9,
            max_outer: 200,
            cg_tol: 1e-10,
            cg_max: 1000,
            newton_tol: 1e-12,
            newton_max: 100,
            armijo: ArmijoOptions::default(),
            cert_tol: 1e-8,
        }
    }
}

impl SsmOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.tol_grad, self.cg_tol, self.newton_tol, self.cert_tol];
        if positive.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Invalid("tolerances must be positive".into()));
        }
        if self.max_outer == 0 || self.cg_max == 0 || self.newton_max == 0 {
            return Err(Error::Invalid("iteration counts must be at least 1".into()));
        }
        let a = &self.armijo;
        if !(a.c1 > 0.0 && a.c1 < 1.0 && a.factor > 0.0 && a.factor < 1.0) {
            return Err(Error::Invalid("Armijo c1 and factor must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Rank cut used when completing the polar factor of `V_gᵀB`.
const INIT_RANK_TOL: f64 = 1e-12;

/// Starting point `X₁ = polar(V_g V_gᵀ B)` and its lifted multiplier.
///
/// When `V_gᵀB` is rank deficient the missing singular directions are
/// completed deterministically (lowest coordinate indices first), so `B = 0`
/// gives `X₁ = V_g`.
pub fn initialize<T: Scalar>(problem: &QuadraticProblem<T>) -> (StiefelPoint<T>, DMatrix<T>) {
    let vg = &problem.ground().vg;
    let m = vg.transpose() * problem.b();
    let q = polar_factor_completed(&m);
    let x = vg * q;
    let lambda = multiplier(problem.lifted(), problem.b(), problem.c(), &x);
    (StiefelPoint::new_unchecked(x), lambda)
}

/// Orthogonal `Q` with `Q = U Vᵀ` on the numerical range of the square `m`.
fn polar_factor_completed<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    let r = m.nrows();
    let svd = m.clone().svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let smax = svd.singular_values.iter().fold(T::zero(), |a, &s| a.max(s));
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].partial_cmp(&svd.singular_values[i]).unwrap());
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&i| smax > T::zero() && svd.singular_values[i] > T::lit(INIT_RANK_TOL) * smax)
        .collect();
    let k = keep.len();
    let uk = DMatrix::from_fn(r, k, |i, j| u[(i, keep[j])]);
    let vk = DMatrix::from_fn(r, k, |i, j| vt[(keep[j], i)]);
    let mut q = &uk * vk.transpose();
    if k < r {
        let (u_perp, v_perp) = if k == 0 {
            (DMatrix::identity(r, r), DMatrix::identity(r, r))
        } else {
            (orthogonal_complement(&uk), orthogonal_complement(&vk))
        };
        q += u_perp * v_perp.transpose();
    }
    q
}

/// SQP direction and the CG work it took.
#[derive(Debug, Clone)]
pub struct SqpDirection<T: Scalar> {
    pub z: DMatrix<T>,
    pub cg_iterations: usize,
}

/// Solves `P(Ã(PZ)C − (PZ)Λ) = P E`, `E = −ÃX C + B_k + XΛ`, where `P`
/// projects out the ground space (and the constraint space, if any).
///
/// `lambda` must be safeguarded, which makes the operator positive definite
/// on the range of `P`.
pub fn sqp_direction<T: Scalar, O: SymOperator<T> + ?Sized>(
    problem: &QuadraticProblem<T>,
    surrogate: &SurrogateModel<'_, T, O>,
    x: &DMatrix<T>,
    lambda: &DMatrix<T>,
    cg_tol: T,
    cg_max: usize,
) -> std::result::Result<SqpDirection<T>, CgFailure<T>> {
    let vg = &problem.ground().vg;
    let w = problem.constraint();
    let proj = |m: &DMatrix<T>| project_out(&(m - vg * (vg.transpose() * m)), w);
    let c = surrogate.c;
    let e = -surrogate.euclidean_grad(x) + x * lambda;
    let rhs = proj(&e);
    let op = |z: &DMatrix<T>| {
        let pz = proj(z);
        proj(&(surrogate.a_tilde.apply(&pz) * c - &pz * lambda))
    };
    let sol = cg_solve(op, &rhs, cg_tol, cg_max)?;
    Ok(SqpDirection {
        z: proj(&sol.x),
        cg_iterations: sol.iterations,
    })
}

/// Appends to an orthonormal basis the parts of `cols` not already in its
/// span, dropping columns whose remainder is below `tol` times their norm.
fn extend_basis<T: Scalar>(basis: &mut Vec<DVector<T>>, cols: &DMatrix<T>, tol: T, cap: usize) {
    for col in cols.column_iter() {
        if basis.len() >= cap {
            return;
        }
        let norm = col.norm();
        if norm == T::zero() {
            continue;
        }
        let mut v = col.into_owned();
        for _ in 0..2 {
            for q in basis.iter() {
                let h = q.dot(&v);
                v.axpy(-h, q, T::one());
            }
        }
        let nv = v.norm();
        if nv > tol * norm {
            basis.push(v / nv);
        }
    }
}

/// Orthonormal basis of `span{V_g, X, G, Z}` with `W` projected out.
///
/// `V_g` and `X` are kept to roundoff; nearly dependent gradient and SQP
/// columns are pruned.
pub fn build_subspace<T: Scalar>(
    vg: &DMatrix<T>,
    x: &DMatrix<T>,
    grad: &DMatrix<T>,
    z: Option<&DMatrix<T>>,
    w: Option<&DMatrix<T>>,
) -> DMatrix<T> {
    let n = vg.nrows();
    let cap = n - w.map_or(0, |w| w.ncols());
    let mut basis: Vec<DVector<T>> = Vec::with_capacity(4 * x.ncols());
    extend_basis(&mut basis, &project_out(vg, w), T::lit(1e-13), cap);
    extend_basis(&mut basis, &project_out(x, w), T::lit(1e-13), cap);
    extend_basis(&mut basis, &project_out(grad, w), T::lit(crate::linalg::qr::RANK_DROP_TOL), cap);
    if let Some(z) = z {
        extend_basis(&mut basis, &project_out(z, w), T::lit(crate::linalg::qr::RANK_DROP_TOL), cap);
    }
    if basis.is_empty() {
        return DMatrix::zeros(n, 0);
    }
    DMatrix::from_columns(&basis)
}

/// `(VᵀÃV, VᵀB_k)`.
pub fn reduce<T: Scalar, O: SymOperator<T> + ?Sized>(
    surrogate: &SurrogateModel<'_, T, O>,
    v: &DMatrix<T>,
) -> (DMatrix<T>, DMatrix<T>) {
    (surrogate.a_tilde.compress(v), v.transpose() * &surrogate.b_k)
}

/// Non-improving outer steps tolerated before stopping.
const STALL_LIMIT: usize = 3;

/// Runs the sequential subspace method from [`initialize`].
pub fn ssm_solve<T: Scalar>(problem: &QuadraticProblem<T>, opts: &SsmOptions) -> Result<SolveReport<T>> {
    ssm_solve_from(problem, initialize(problem).0, opts)
}

/// SSM started at `x0` instead of the default initialization.
pub fn ssm_solve_from<T: Scalar>(problem: &QuadraticProblem<T>, x0: StiefelPoint<T>, opts: &SsmOptions) -> Result<SolveReport<T>> {
    opts.validate()?;
    if x0.matrix().shape() != (problem.n(), problem.r()) {
        return Err(Error::Dimension(format!(
            "start point is {:?}, problem is {}x{}",
            x0.matrix().shape(),
            problem.n(),
            problem.r()
        )));
    }
    let start = Instant::now();
    let a = CountingOperator::new(problem.a());
    let a_tilde = CountingOperator::new(problem.lifted());
    let (b, c, cf) = (problem.b(), problem.c(), problem.c_factors());
    let ground = problem.ground();
    let dr = ground.dr();
    let w = problem.constraint();

    let mut x = x0.into_matrix();
    let mut lambda = multiplier(problem.lifted(), b, c, &x);

    let mut iterations = Vec::new();
    let mut sandwich: Vec<SandwichRecord> = Vec::new();
    let mut warnings = Vec::new();
    let mut cg_total = 0usize;
    let mut termination = Termination::MaxIterations;
    let mut best = (T::lit(f64::INFINITY), T::lit(f64::INFINITY));
    let mut stalls = 0usize;
    let mut floor_warned = false;

    for k in 1.. {
        let egrad = a.apply(&x) * c - b;
        let lam_orig = sym(&(x.transpose() * &egrad));
        let gn = (&egrad - &x * &lam_orig).norm();
        let f = objective_from_grad(&x, &egrad, b);
        if let Some(last) = sandwich.last_mut() {
            last.multiplier_drift = (&lambda - &lam_orig).norm().as_f64();
        }
        let gamma_max = cf.whitened_eig(&lam_orig).values.iter().fold(T::lit(f64::NEG_INFINITY), |m, &g| m.max(g));
        iterations.push(IterationRecord {
            k,
            f: f.as_f64(),
            grad_norm: gn.as_f64(),
            gamma_max: gamma_max.as_f64(),
            cg_iters: 0,
            subspace_rank: 0,
        });
        debug!("ssm k={k} f={f} grad={gn:e}");
        if gn <= T::lit(opts.tol_grad) {
            termination = Termination::Converged;
            break;
        }
        let scale = f.abs().max(T::one());
        if f < best.0 - T::lit(4.0) * T::eps() * scale || gn < best.1 * T::lit(0.9) {
            stalls = 0;
        } else {
            stalls += 1;
        }
        best = (best.0.min(f), best.1.min(gn));
        if stalls >= STALL_LIMIT {
            termination = Termination::Stalled;
            warnings.push(format!("no progress for {STALL_LIMIT} outer steps at k={k}"));
            break;
        }
        if k > opts.max_outer {
            break;
        }

        let sur = surrogate_with(&a_tilde, problem, &x);
        let sigma = sigma_nondegeneracy(ground, &sur.b_k, cf);
        let (lam_safe, floored) = safeguard_or_floor(&lambda, cf, dr, sigma);
        if floored && !floor_warned {
            floor_warned = true;
            warnings.push(format!("sigma = {:e} below floor; safeguard uses the floor", sigma.as_f64()));
        }
        let mut cg_iters = 0;
        let z = match sqp_direction(problem, &sur, &x, &lam_safe, T::lit(opts.cg_tol), opts.cg_max) {
            Ok(d) => {
                cg_iters += d.cg_iterations;
                Some(d.z)
            }
            Err(fail) => {
                cg_iters += fail.iterations;
                warnings.push(format!("k={k}: SQP direction dropped ({})", Error::from(fail)));
                None
            }
        };
        let v = build_subspace(&ground.vg, &x, &egrad, z.as_ref(), w);
        let (a_k, b_k) = reduce(&sur, &v);
        let vg_k = v.transpose() * &ground.vg;
        let reduced = ReducedProblem {
            a: &a_k,
            b: &b_k,
            c: cf,
            vg: &vg_k,
            dr,
        };
        let y0 = v.transpose() * &x;
        let sub = subproblem_solve(&reduced, &y0, &lam_safe, opts);
        cg_iters += sub.cg_iterations;
        cg_total += cg_iters;
        if sub.stalled && sub.grad_norm > T::lit(opts.tol_grad) {
            warnings.push(format!("k={k}: subproblem line search stalled at grad {:e}", sub.grad_norm.as_f64()));
        }
        if let Some(rec) = iterations.last_mut() {
            rec.cg_iters = cg_iters;
            rec.subspace_rank = v.ncols();
        }

        let x_next = match polar_project(&(&v * &sub.y)) {
            Ok(p) => p.into_matrix(),
            Err(e) => {
                warnings.push(format!("k={k}: {e}"));
                termination = Termination::Stalled;
                break;
            }
        };
        let f_sur = sur.objective(&x_next);
        let f_next = objective(problem.a(), b, c, &x_next);
        let record = SandwichRecord {
            k,
            f_prev: f.as_f64(),
            surrogate_next: f_sur.as_f64(),
            f_next: f_next.as_f64(),
            step_norm: (&x_next - &x).norm().as_f64(),
            multiplier_drift: 0.0,
        };
        if f_sur > f + T::lit(1e-12) * scale {
            warnings.push(format!("k={k}: step rejected, surrogate rose by {:e}", (f_sur - f).as_f64()));
            termination = Termination::Stalled;
            break;
        }
        sandwich.push(record);
        x = x_next;
        lambda = sub.xi;
    }

    let cert = QualifiedCertificate::compute(problem, &x, opts.cert_tol);
    let f = objective(problem.a(), b, c, &x).as_f64();
    if !cert.qualified && termination == Termination::Converged {
        warn!("ssm converged to a non-qualified point (gamma_max {:e} > d_r {:e})", cert.gamma_max(), cert.dr);
    }
    Ok(SolveReport {
        solver: "ssm".into(),
        iterations,
        final_summary: summary(&cert, f),
        certificate: cert,
        termination,
        wall_time_s: start.elapsed().as_secs_f64(),
        operator_applications: a.count() + a_tilde.count(),
        cg_iterations: cg_total,
        sandwich,
        warnings,
        x,
    })
}

/// `f(X)` from `G = AXC − B`: `½⟨X, G + B⟩ − ⟨X, B⟩ = ½⟨X, G⟩ − ½⟨X, B⟩`.
fn objective_from_grad<T: Scalar>(x: &DMatrix<T>, g: &DMatrix<T>, b: &DMatrix<T>) -> T {
    (x.dot(g) - x.dot(b)) * T::lit(0.5)
}

#[cfg(test)]
mod tests;
