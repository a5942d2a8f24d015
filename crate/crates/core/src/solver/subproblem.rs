//! Riemannian Newton on the reduced problem `min ½⟨Y, ÃY C⟩ − ⟨B̃, Y⟩`,
//! `Y ∈ St(l, r)`, where the smallest eigenvalue `d_r` of `Ã` has its
//! eigenspace spanned by `Ṽ_g`.

use nalgebra::DMatrix;

use super::{ArmijoOptions, SsmOptions};
use crate::linalg::{cg_solve, dense_sym_eig, smallest_singular_value, sym, CgFailureKind, SpdFactors};
use crate::manifold::{polar_project, project_matrix};
use crate::model::{hessian_apply, multiplier, objective, riemannian_grad, safeguard_or_floor};
use crate::scalar::Scalar;

/// Data of the reduced problem.
#[derive(Debug, Clone, Copy)]
pub struct ReducedProblem<'a, T: Scalar> {
    pub a: &'a DMatrix<T>,
    pub b: &'a DMatrix<T>,
    pub c: &'a SpdFactors<T>,
    /// Orthonormal basis of the `d_r` eigenspace of `a`.
    pub vg: &'a DMatrix<T>,
    pub dr: T,
}

impl<'a, T: Scalar> ReducedProblem<'a, T> {
    pub fn objective(&self, y: &DMatrix<T>) -> T {
        objective(self.a, self.b, &self.c.matrix, y)
    }

    pub fn grad(&self, y: &DMatrix<T>) -> DMatrix<T> {
        riemannian_grad(self.a, self.b, &self.c.matrix, y)
    }

    pub fn multiplier(&self, y: &DMatrix<T>) -> DMatrix<T> {
        multiplier(self.a, self.b, &self.c.matrix, y)
    }

    /// `f(Y) − f(Y')` for feasible `Y, Y'`, accurate when the two values
    /// nearly agree (the normal part of the gradient is handled exactly).
    pub fn decrease(&self, y: &DMatrix<T>, y_next: &DMatrix<T>) -> T {
        let c = &self.c.matrix;
        let g = self.a * y * c - self.b;
        let lam = sym(&(y.transpose() * &g));
        let rg = &g - y * &lam;
        let d = y_next - y;
        -(d.dot(&rg) + d.dot(&(self.a * &d * c - &d * &lam)) * T::lit(0.5))
    }

    /// Smallest singular value of `Ṽ_gᵀ B̃ C⁻¹`.
    pub fn sigma(&self) -> T {
        smallest_singular_value(&(self.vg.transpose() * self.b * &self.c.inv))
    }
}

#[derive(Debug, Clone)]
pub struct SubproblemResult<T: Scalar> {
    pub y: DMatrix<T>,
    pub xi: DMatrix<T>,
    pub objective: T,
    pub grad_norm: T,
    pub iterations: usize,
    pub cg_iterations: usize,
    /// Newton systems replaced by steepest descent.
    pub fallbacks: usize,
    /// Steps taken to leave non-qualified stationary points.
    pub escapes: usize,
    /// The line search failed before reaching the tolerance.
    pub stalled: bool,
}

/// Outcome of a tangent-space Newton solve.
#[derive(Debug, Clone)]
pub struct NewtonDirection<T: Scalar> {
    pub z: DMatrix<T>,
    pub cg_iterations: usize,
    /// True when the Newton system was abandoned for `−grad`.
    pub fallback: bool,
}

/// Solves `Pj_Y{A(Pj_Y Z)C − (Pj_Y Z) Ξ} = Pj_Y E` for a tangent `Z` by CG.
///
/// `xi` should already be safeguarded. On negative curvature, iteration cap,
/// or a non-descent result, returns `Z = Pj_Y E` (steepest descent, since
/// `Pj_Y E = −grad`).
pub fn newton_direction_subspace<T: Scalar>(
    a: &DMatrix<T>,
    c: &DMatrix<T>,
    y: &DMatrix<T>,
    xi: &DMatrix<T>,
    e: &DMatrix<T>,
    cg_tol: T,
    cg_max: usize,
) -> NewtonDirection<T> {
    let rhs = project_matrix(y, e);
    let rn = rhs.norm();
    if rn == T::zero() {
        return NewtonDirection {
            z: rhs,
            cg_iterations: 0,
            fallback: false,
        };
    }
    let op = |z: &DMatrix<T>| hessian_apply(a, c, y, xi, &project_matrix(y, z));
    let descent_cut = T::lit(1e-12);
    match cg_solve(op, &rhs, cg_tol, cg_max) {
        Ok(sol) => {
            let z = project_matrix(y, &sol.x);
            // rhs = −grad, so descent means ⟨rhs, Z⟩ > 0.
            if rhs.dot(&z) > descent_cut * rn * z.norm() {
                NewtonDirection {
                    z,
                    cg_iterations: sol.iterations,
                    fallback: false,
                }
            } else {
                NewtonDirection {
                    z: rhs,
                    cg_iterations: sol.iterations,
                    fallback: true,
                }
            }
        }
        Err(fail) => {
            // A partial CG iterate before negative curvature is still a
            // descent direction when nonzero.
            let partial = project_matrix(y, &fail.partial);
            let usable = fail.kind == CgFailureKind::NegativeCurvature && rhs.dot(&partial) > descent_cut * rn * partial.norm();
            NewtonDirection {
                z: if usable { partial } else { rhs },
                cg_iterations: fail.iterations,
                fallback: true,
            }
        }
    }
}

/// Backtracking line search along the retraction. `decrease(Y')` returns
/// `f(Y) − f(Y')`. Returns the accepted point and the decrease.
pub(crate) fn armijo<T: Scalar>(
    decrease: impl Fn(&DMatrix<T>) -> T,
    y: &DMatrix<T>,
    slope: T,
    z: &DMatrix<T>,
    opts: &ArmijoOptions,
) -> Option<(DMatrix<T>, T)> {
    let mut alpha = T::one();
    let c1 = T::lit(opts.c1);
    let factor = T::lit(opts.factor);
    for _ in 0..=opts.max_backtracks {
        let cand = y + z * alpha;
        if let Ok(p) = polar_project(&cand) {
            let x = p.into_matrix();
            let dec = decrease(&x);
            if -dec <= c1 * alpha * slope {
                return Some((x, dec));
            }
        }
        alpha *= factor;
    }
    None
}

/// Full step accepted when the objective change is below roundoff but the
/// gradient clearly shrinks, where Armijo cannot discriminate.
fn roundoff_step<T: Scalar>(p: &ReducedProblem<'_, T>, y: &DMatrix<T>, gn: T, z: &DMatrix<T>) -> Option<(DMatrix<T>, T)> {
    let x = polar_project(&(y + z)).ok()?.into_matrix();
    let dec = p.decrease(y, &x);
    let noise = T::lit(16.0) * T::eps() * p.objective(y).abs().max(T::one());
    (dec >= -noise && p.grad(&x).norm() <= gn * T::lit(0.5)).then_some((x, dec))
}

/// Moves off a stationary point whose multiplier violates `Λ ⪯ d_r C`.
///
/// A reflection `I − 2vvᵀ` with `v` in the ground space leaves the quadratic
/// term unchanged and shifts the objective by `2aᵀ(d_r C − Λ)a`, `a = Yᵀv`.
/// When no reflection helps (the ground space is orthogonal to the relevant
/// part of `Y`), a tangent direction `v qᵀ` with `v ⟂ Y` has curvature
/// `qᵀ(d_r C − Λ)q < 0` and a short move along it decreases `f`.
fn escape<T: Scalar>(p: &ReducedProblem<'_, T>, y: &DMatrix<T>, f0: T) -> Option<(DMatrix<T>, T)> {
    let lambda = p.multiplier(y);
    let c = &p.c.matrix;
    let slack = sym(&(c * p.dr - &lambda));
    let scale = f0.abs().max(T::one());
    let tiny = T::lit(1e-13) * scale;

    let n_mat = y.transpose() * p.vg;
    let m = sym(&(n_mat.transpose() * &slack * &n_mat));
    if let Ok(eig) = dense_sym_eig(&m) {
        if eig.values[0] * T::lit(2.0) < -tiny {
            let w = eig.vectors.column(0).into_owned();
            let v = p.vg * w;
            let v = &v / v.norm();
            let reflected = y - &v * (v.transpose() * y) * T::lit(2.0);
            let fr = p.objective(&reflected);
            if fr < f0 - tiny {
                return Some((reflected, fr));
            }
        }
    }

    // Tangent escape: v in span(Ṽ_g) orthogonal to Y, q the most negative
    // direction of d_r C − Λ.
    let eig_slack = dense_sym_eig(&slack).ok()?;
    if eig_slack.values[0] >= T::zero() {
        return None;
    }
    let q = eig_slack.vectors.column(0).into_owned();
    let resid = p.vg - y * (y.transpose() * p.vg);
    let (col, best) = resid
        .column_iter()
        .enumerate()
        .map(|(i, c)| (i, c.norm()))
        .fold((0, T::zero()), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
    if best <= T::lit(1e-8) {
        return None;
    }
    let v = resid.column(col) / best;
    let dir = &v * q.transpose();
    let mut t = T::one();
    for _ in 0..40 {
        if let Ok(pt) = polar_project(&(y + &dir * t)) {
            let x = pt.into_matrix();
            let fx = p.objective(&x);
            if fx < f0 - tiny {
                return Some((x, fx));
            }
        }
        t *= T::lit(0.5);
    }
    None
}

/// Solves the reduced problem starting from `y0` with initial multiplier `xi0`.
///
/// Newton steps use the safeguarded multiplier; stationary points that are
/// not qualified are escaped, so the result is a qualified critical point of
/// the reduced problem and hence a global minimizer of it.
pub fn subproblem_solve<T: Scalar>(
    p: &ReducedProblem<'_, T>,
    y0: &DMatrix<T>,
    xi0: &DMatrix<T>,
    opts: &SsmOptions,
) -> SubproblemResult<T> {
    let (l, r) = y0.shape();
    let mut y = y0.clone();
    let mut f = p.objective(&y);
    let mut res = SubproblemResult {
        y: y.clone(),
        xi: xi0.clone(),
        objective: f,
        grad_norm: T::zero(),
        iterations: 0,
        cg_iterations: 0,
        fallbacks: 0,
        escapes: 0,
        stalled: false,
    };

    // St(r, r) with a flat quadratic term: the polar factor of B̃ is optimal.
    if l == r && (p.a - DMatrix::identity(l, l) * p.dr).norm() <= T::lit(1e-12) * p.dr.abs().max(T::one()) {
        if let Ok(q) = polar_project(p.b) {
            let fq = p.objective(q.matrix());
            if fq <= f {
                y = q.into_matrix();
                f = fq;
            }
        }
    }

    let sigma = p.sigma();
    let newton_tol = T::lit(opts.newton_tol);
    let mut xi = xi0.clone();
    let max_escapes = 4 * r + 4;
    let mut j = 0;
    loop {
        let mut stalled = false;
        while j < opts.newton_max {
            j += 1;
            let grad = p.grad(&y);
            let gn = grad.norm();
            if gn <= newton_tol {
                break;
            }
            let (xi_safe, _) = safeguard_or_floor(&xi, p.c, p.dr, sigma);
            let e = -&grad;
            let forcing = gn.sqrt().min(T::lit(0.1)) * gn / gn.max(T::one());
            let cg_tol = forcing.max(T::lit(opts.cg_tol));
            let dir = newton_direction_subspace(p.a, &p.c.matrix, &y, &xi_safe, &e, cg_tol, opts.cg_max);
            res.cg_iterations += dir.cg_iterations;
            if dir.fallback {
                res.fallbacks += 1;
            }
            let slope = -dir.z.dot(&e);
            let dec = |x: &DMatrix<T>| p.decrease(&y, x);
            let step = armijo(dec, &y, slope, &dir.z, &opts.armijo).or_else(|| {
                // Newton step rejected: try steepest descent before giving up.
                if dir.fallback {
                    return None;
                }
                res.fallbacks += 1;
                armijo(dec, &y, -e.norm_squared(), &e, &opts.armijo)
            });
            let Some((yn, progress)) = step.or_else(|| roundoff_step(p, &y, gn, &dir.z)) else {
                stalled = true;
                break;
            };
            y = yn;
            f = p.objective(&y);
            xi = p.multiplier(&y);
            if progress <= T::eps() * f.abs().max(T::one()) && gn <= newton_tol * T::lit(1e3) {
                // Converged to roundoff.
                break;
            }
        }
        // Leave non-qualified stationary points and resume Newton.
        if res.escapes < max_escapes {
            if let Some((ye, fe)) = escape(p, &y, f) {
                y = ye;
                f = fe;
                xi = p.multiplier(&y);
                res.escapes += 1;
                continue;
            }
        }
        res.stalled = stalled && p.grad(&y).norm() > newton_tol;
        break;
    }
    res.iterations = j;
    res.grad_norm = p.grad(&y).norm();
    res.xi = xi;
    res.objective = f;
    res.y = y;
    res
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SpdFactors;
    use crate::manifold::random_point;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lifted_random(l: usize, r: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>, SpdFactors<f64>, DMatrix<f64>, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = crate::linalg::thin_qr(&DMatrix::from_fn(l, l, |_, _| rng.random_range(-1.0..1.0)));
        let dr = 0.5;
        let mut d: Vec<f64> = (0..l).map(|_| rng.random_range(1.0..4.0)).collect();
        for v in d.iter_mut().take(r) {
            *v = dr;
        }
        let a = sym(&(&q * DMatrix::from_diagonal(&DVector::from_vec(d)) * q.transpose()));
        let vg = q.columns(0, r).into_owned();
        let b = DMatrix::from_fn(l, r, |_, _| rng.random_range(-1.0..1.0));
        let g = DMatrix::from_fn(r, r, |_, _| rng.random_range(-1.0..1.0));
        let c = SpdFactors::new(&sym(&(&g * g.transpose() + DMatrix::identity(r, r)))).unwrap();
        (a, b, c, vg, dr)
    }

    #[test]
    fn zero_rhs_gives_zero_direction() {
        let a = DMatrix::<f64>::identity(3, 3);
        let y = DMatrix::identity(3, 1);
        let d = newton_direction_subspace(&a, &DMatrix::identity(1, 1), &y, &DMatrix::zeros(1, 1), &DMatrix::zeros(3, 1), 1e-12, 10);
        assert_eq!(d.z.norm(), 0.0);
        assert!(!d.fallback);
    }

    #[test]
    fn scalar_newton_system_closed_form() {
        // l = 3, r = 1, C = 1 at y = e₁: the tangent space is span(e₂, e₃)
        // and the system is diagonal with entries aᵢ − ξ.
        let a: DMatrix<f64> = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0, 5.0]));
        let y = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let xi = DMatrix::from_element(1, 1, 0.5);
        let e = DMatrix::from_column_slice(3, 1, &[0.7, 2.0, -1.0]);
        let d = newton_direction_subspace(&a, &DMatrix::identity(1, 1), &y, &xi, &e, 1e-14, 50);
        assert!(!d.fallback);
        assert!(d.z[(0, 0)].abs() < 1e-14_f64);
        assert!((d.z[(1, 0)] - 2.0_f64 / 2.5).abs() < 1e-12);
        assert!((d.z[(2, 0)] + 1.0_f64 / 4.5).abs() < 1e-12);
    }

    #[test]
    fn random_direction_descends() {
        for seed in 0..10 {
            let (a, b, c, vg, dr) = lifted_random(8, 2, seed);
            let p = ReducedProblem { a: &a, b: &b, c: &c, vg: &vg, dr };
            let y = random_point::<f64>(8, 2, seed + 3).unwrap().into_matrix();
            let grad = p.grad(&y);
            let (xi, _) = safeguard_or_floor(&p.multiplier(&y), &c, dr, p.sigma());
            let d = newton_direction_subspace(&a, &c.matrix, &y, &xi, &(-&grad), 1e-10, 200);
            assert!(grad.dot(&d.z) < 0.0);
        }
    }

    #[test]
    fn reduced_solve_is_self_consistent_and_qualified() {
        let opts = SsmOptions::default();
        for seed in 0..10 {
            let (a, b, c, vg, dr) = lifted_random(8, 2, 40 + seed);
            let p = ReducedProblem { a: &a, b: &b, c: &c, vg: &vg, dr };
            let y0 = random_point::<f64>(8, 2, seed).unwrap().into_matrix();
            let xi0 = p.multiplier(&y0);
            let f0 = p.objective(&y0);
            let res = subproblem_solve(&p, &y0, &xi0, &opts);
            assert!(res.objective <= f0);
            assert!(res.grad_norm <= 1e-9, "grad {}", res.grad_norm);
            assert!((&res.xi - p.multiplier(&res.y)).norm() <= 1e-8);
            let gamma = c.whitened_eig(&res.xi).values;
            assert!(gamma[1] <= dr + 1e-8, "gamma {} > {dr}", gamma[1]);
        }
    }

    #[test]
    fn square_case_returns_polar_factor() {
        let a = DMatrix::identity(2, 2) * 2.0;
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let c = SpdFactors::new(&DMatrix::identity(2, 2)).unwrap();
        let vg = DMatrix::identity(2, 2);
        let p = ReducedProblem { a: &a, b: &b, c: &c, vg: &vg, dr: 2.0 };
        let y0 = DMatrix::identity(2, 2);
        let res = subproblem_solve(&p, &y0, &p.multiplier(&y0), &SsmOptions::default());
        assert!((res.y - &b).norm() < 1e-12);
    }

    #[test]
    fn escape_leaves_reflected_stationary_point() {
        // Ã = diag(2, 2, 4), Y₀ = [−e₁, e₂] is stationary with γ = (3, 1.5),
        // so γ_max > d_r = 2.
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0, 4.0]));
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.5, 0.0, 0.0]);
        let c = SpdFactors::new(&DMatrix::identity(2, 2)).unwrap();
        let vg = DMatrix::identity(3, 2);
        let p = ReducedProblem { a: &a, b: &b, c: &c, vg: &vg, dr: 2.0 };
        let y0 = DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(p.grad(&y0).norm() < 1e-15);
        let f0 = p.objective(&y0);
        let res = subproblem_solve(&p, &y0, &p.multiplier(&y0), &SsmOptions::default());
        assert!(res.escapes >= 1);
        assert!(res.objective < f0 - 1e-10);
        assert!((res.objective - 0.5_f64).abs() < 1e-12);
    }
}
