//! Reference solvers: projected gradient, Riemannian gradient descent, the
//! Riemannian Newton step, the `r = 1` sphere oracle and a multistart oracle.

mod sphere;

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use sphere::{sphere_trs_oracle, SphereSolution, SPHERE_ORACLE_MAX_DIM};

use crate::error::{Error, Result};
use crate::linalg::{
    cg_solve, dense_sym_eig, project_out, smallest_eigenpairs, sym, CountingOperator,
    LobpcgOptions, SymOperator,
};
use crate::manifold::{polar_project, random_point, StiefelPoint, TangentVector};
use crate::model::{hessian_apply, QualifiedCertificate, QuadraticProblem};
use crate::report::{summary, IterationRecord, SolveReport, Termination};
use crate::scalar::Scalar;
use crate::solver::ArmijoOptions;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Constant step `α`.
    Fixed(f64),
    /// Constant step `1/(‖A‖₂‖C‖₂)`.
    Lipschitz,
    /// Backtracking from twice the previous accepted step.
    Armijo(ArmijoOptions),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineOptions {
    pub step: StepRule,
    pub tol_grad: f64,
    pub max_iter: usize,
    /// Seed of the random starting point.
    pub seed: u64,
    pub cert_tol: f64,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        Self {
            step: StepRule::Armijo(ArmijoOptions::default()),
            tol_grad: 1e-8,
            max_iter: 10_000,
            seed: 0,
            cert_tol: 1e-6,
        }
    }
}

impl BaselineOptions {
    pub fn validate(&self) -> Result<()> {
        if let StepRule::Fixed(a) = self.step {
            if !(a > 0.0) {
                return Err(Error::Invalid(format!("fixed step must be positive, got {a}")));
            }
        }
        if !(self.tol_grad > 0.0) || self.max_iter == 0 {
            return Err(Error::Invalid("tol_grad must be positive and max_iter at least 1".into()));
        }
        Ok(())
    }
}

/// Seeded random feasible point (orthogonal to the constraint space).
pub fn random_start<T: Scalar>(problem: &QuadraticProblem<T>, seed: u64) -> Result<StiefelPoint<T>> {
    let g = random_point::<T>(problem.n(), problem.r(), seed)?.into_matrix();
    polar_project(&project_out(&g, problem.constraint()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Update {
    /// `polar(X − αG)` with the Euclidean gradient.
    Projected,
    /// `polar(X − α grad f)` with the Riemannian gradient.
    Riemannian,
}

/// `X_{k+1} = polar(X_k − α(AX_kC − B))` from a seeded random start.
pub fn projected_gradient_solve<T: Scalar>(problem: &QuadraticProblem<T>, opts: &BaselineOptions) -> Result<SolveReport<T>> {
    let x0 = random_start(problem, opts.seed)?;
    projected_gradient_from(problem, x0, opts)
}

pub fn projected_gradient_from<T: Scalar>(
    problem: &QuadraticProblem<T>,
    x0: StiefelPoint<T>,
    opts: &BaselineOptions,
) -> Result<SolveReport<T>> {
    gradient_method(problem, x0, opts, Update::Projected)
}

/// `X_{k+1} = R_{X_k}(−α grad f(X_k))` from a seeded random start.
pub fn riemannian_gd_solve<T: Scalar>(problem: &QuadraticProblem<T>, opts: &BaselineOptions) -> Result<SolveReport<T>> {
    let x0 = random_start(problem, opts.seed)?;
    riemannian_gd_from(problem, x0, opts)
}

pub fn riemannian_gd_from<T: Scalar>(
    problem: &QuadraticProblem<T>,
    x0: StiefelPoint<T>,
    opts: &BaselineOptions,
) -> Result<SolveReport<T>> {
    gradient_method(problem, x0, opts, Update::Riemannian)
}

/// `1/(‖A‖₂‖C‖₂)` with `‖A‖₂` from power iteration.
pub fn lipschitz_step<T: Scalar>(problem: &QuadraticProblem<T>, seed: u64) -> f64 {
    let a_norm = problem.a().norm_estimate(seed).as_f64();
    let c_norm = problem.c_factors().eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.as_f64()));
    1.0 / (a_norm * c_norm).max(f64::MIN_POSITIVE)
}

fn gradient_method<T: Scalar>(
    problem: &QuadraticProblem<T>,
    x0: StiefelPoint<T>,
    opts: &BaselineOptions,
    update: Update,
) -> Result<SolveReport<T>> {
    opts.validate()?;
    if x0.n() != problem.n() || x0.r() != problem.r() {
        return Err(Error::Dimension("starting point shape".into()));
    }
    let start = Instant::now();
    let a = CountingOperator::new(problem.a());
    let (b, c, cf) = (problem.b(), problem.c(), problem.c_factors());
    let w = problem.constraint();
    let eval = |x: &DMatrix<T>| {
        let ax = a.apply(x);
        let g = project_out(&(&ax * c - b), w);
        let f = (x.dot(&g) - x.dot(b)) * T::lit(0.5);
        Eval { x: x.clone(), f, g, ax }
    };

    let (mut alpha, armijo) = match opts.step {
        StepRule::Fixed(s) => (s, None),
        StepRule::Lipschitz => (lipschitz_step(problem, opts.seed), None),
        StepRule::Armijo(ar) => (lipschitz_step(problem, opts.seed), Some(ar)),
    };

    let mut cur = eval(&x0.into_matrix());
    let mut iterations = Vec::new();
    let mut warnings = Vec::new();
    let mut termination = Termination::MaxIterations;
    for k in 0..=opts.max_iter {
        let lam = sym(&(cur.x.transpose() * &cur.g));
        let rgrad = &cur.g - &cur.x * &lam;
        let gn = rgrad.norm();
        let gamma_max = cf.whitened_eig(&lam).values.iter().fold(f64::NEG_INFINITY, |m, g| m.max(g.as_f64()));
        iterations.push(IterationRecord {
            k,
            f: cur.f.as_f64(),
            grad_norm: gn.as_f64(),
            gamma_max,
            cg_iters: 0,
            subspace_rank: 0,
        });
        if gn <= T::lit(opts.tol_grad) {
            termination = Termination::Converged;
            break;
        }
        if k == opts.max_iter {
            break;
        }
        let dir = match update {
            Update::Projected => cur.g.clone(),
            Update::Riemannian => rgrad,
        };
        // Re-projecting keeps roundoff along `W` from being amplified by `XΛ`.
        let trial =
            |step: f64| polar_project(&project_out(&(&cur.x - &dir * T::lit(step)), w)).ok().map(|p| eval(&p.into_matrix()));
        let accepted = match armijo {
            None => trial(alpha),
            Some(ar) => {
                let slope = gn * gn;
                let noise = T::lit(64.0) * T::eps() * cur.f.abs().max(T::one());
                let mut step = alpha * 2.0;
                let mut found = None;
                for _ in 0..=ar.max_backtracks {
                    if let Some(next) = trial(step) {
                        let decrease = cur.decrease_to(&next, c);
                        // Below roundoff in f, fall back to a gradient-norm test.
                        let flat = decrease >= -noise && next.grad_norm() < gn;
                        if decrease >= T::lit(ar.c1 * step) * slope || flat {
                            found = Some(next);
                            break;
                        }
                    }
                    step *= ar.factor;
                }
                if found.is_some() {
                    alpha = step;
                }
                found
            }
        };
        match accepted {
            Some(next) => cur = next,
            None => {
                warnings.push(format!("line search failed at k={k} (grad {:e})", gn.as_f64()));
                termination = Termination::Stalled;
                break;
            }
        }
    }
    let Eval { x, f, .. } = cur;

    let cert = QualifiedCertificate::compute(problem, &x, opts.cert_tol);
    let name = match update {
        Update::Projected => "pg",
        Update::Riemannian => "rgd",
    };
    Ok(SolveReport {
        solver: name.into(),
        iterations,
        final_summary: summary(&cert, f.as_f64()),
        certificate: cert,
        termination,
        wall_time_s: start.elapsed().as_secs_f64(),
        operator_applications: a.count(),
        cg_iterations: 0,
        sandwich: Vec::new(),
        warnings,
        x,
    })
}

/// A point with its objective, Euclidean gradient and `AX`.
struct Eval<T: Scalar> {
    x: DMatrix<T>,
    f: T,
    g: DMatrix<T>,
    ax: DMatrix<T>,
}

impl<T: Scalar> Eval<T> {
    /// `f(X) − f(X')` for feasible `X, X'`, written as
    /// `−⟨D, grad f⟩ − ½⟨D, ADC − DΛ⟩` with `D = X' − X`. Feasibility turns
    /// the normal part `⟨D, XΛ⟩` into `−½⟨D, DΛ⟩`, so no term cancels at
    /// the scale of `f` and the difference stays accurate near a minimizer.
    fn decrease_to(&self, next: &Self, c: &DMatrix<T>) -> T {
        let d = &next.x - &self.x;
        let lam = sym(&(self.x.transpose() * &self.g));
        let rg = &self.g - &self.x * &lam;
        let ad = &next.ax - &self.ax;
        -(d.dot(&rg) + d.dot(&(ad * c - &d * &lam)) * T::lit(0.5))
    }

    fn grad_norm(&self) -> T {
        (&self.g - &self.x * sym(&(self.x.transpose() * &self.g))).norm()
    }
}

/// Tangent vectors at `X` (also orthogonal to `W`), flattened column-major.
struct TangentHessian<'a, T: Scalar> {
    problem: &'a QuadraticProblem<T>,
    x: &'a DMatrix<T>,
    lambda: &'a DMatrix<T>,
}

impl<T: Scalar> TangentHessian<'_, T> {
    fn project(&self, z: &DMatrix<T>) -> DMatrix<T> {
        let p = z - self.x * sym(&(self.x.transpose() * z));
        project_out(&p, self.problem.constraint())
    }

    fn apply_matrix(&self, z: &DMatrix<T>) -> DMatrix<T> {
        let pz = self.project(z);
        self.project(&hessian_apply(self.problem.a(), self.problem.c(), self.x, self.lambda, &pz))
    }
}

impl<T: Scalar> SymOperator<T> for TangentHessian<'_, T> {
    fn dim(&self) -> usize {
        self.x.len()
    }

    fn apply(&self, v: &DMatrix<T>) -> DMatrix<T> {
        let (n, r) = self.x.shape();
        let mut out = DMatrix::zeros(v.nrows(), v.ncols());
        for (j, col) in v.column_iter().enumerate() {
            let z = DMatrix::from_column_slice(n, r, col.as_slice());
            out.column_mut(j).copy_from_slice(self.apply_matrix(&z).as_slice());
        }
        out
    }

    fn diagonal(&self) -> nalgebra::DVector<T> {
        nalgebra::DVector::from_element(self.x.len(), T::one())
    }
}

/// Above this many unknowns the Hessian test uses LOBPCG instead of a dense
/// eigendecomposition.
const DENSE_HESSIAN_LIMIT: usize = 400;

/// Smallest eigenvalue of the Riemannian Hessian at `x` on its tangent space.
pub fn hessian_min_eigenvalue<T: Scalar>(problem: &QuadraticProblem<T>, x: &StiefelPoint<T>) -> Result<T> {
    let lambda = problem.multiplier(x);
    let op = TangentHessian {
        problem,
        x: x.matrix(),
        lambda: &lambda,
    };
    let m = op.dim();
    if m <= DENSE_HESSIAN_LIMIT {
        let dense = sym(&op.apply(&DMatrix::identity(m, m)));
        // The normal directions contribute zero eigenvalues; that is harmless
        // for a PSD test.
        return Ok(dense_sym_eig(&dense)?.values[0]);
    }
    let pairs = smallest_eigenpairs(&op, 1, None, &LobpcgOptions { tol: 1e-8, ..LobpcgOptions::default() })?;
    Ok(pairs.values[0])
}

/// Solves `Hess f(X)[Z] = −grad f(X)` on the tangent space by CG (tolerance
/// `1e-10`). Fails with an indefinite-operator error when the Hessian has a
/// negative eigenvalue.
pub fn riemannian_newton_step<T: Scalar>(problem: &QuadraticProblem<T>, x: &StiefelPoint<T>) -> Result<TangentVector<T>> {
    let scale = problem.a().norm_estimate(0x4e57) * problem.c_factors().eigenvalues.iter().fold(T::one(), |m, &v| m.max(v));
    let min_eig = hessian_min_eigenvalue(problem, x)?;
    if min_eig < -T::lit(1e-8) * scale.max(T::one()) {
        return Err(Error::Indefinite(min_eig.as_f64()));
    }
    let lambda = problem.multiplier(x);
    let op = TangentHessian {
        problem,
        x: x.matrix(),
        lambda: &lambda,
    };
    let rhs = -op.project(&problem.riemannian_grad(x).v);
    let sol = cg_solve(|z| op.apply_matrix(z), &rhs, T::lit(1e-10), 10 * x.matrix().len().max(10))?;
    Ok(TangentVector { v: op.project(&sol.x) })
}

/// Inner solver used by [`multistart_oracle`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineSolver {
    ProjectedGradient,
    RiemannianGradient,
}

impl BaselineSolver {
    pub fn solve<T: Scalar>(self, problem: &QuadraticProblem<T>, opts: &BaselineOptions) -> Result<SolveReport<T>> {
        match self {
            Self::ProjectedGradient => projected_gradient_solve(problem, opts),
            Self::RiemannianGradient => riemannian_gd_solve(problem, opts),
        }
    }
}

/// Best of `n_starts` runs of `inner` from seeds `seed, seed + 1, …`.
///
/// Runs execute in parallel; the winner is the smallest final objective, ties
/// broken by the smaller seed, so the result does not depend on scheduling.
pub fn multistart_oracle<T: Scalar>(
    problem: &QuadraticProblem<T>,
    n_starts: usize,
    inner: BaselineSolver,
    opts: &BaselineOptions,
) -> Result<SolveReport<T>> {
    if n_starts == 0 {
        return Err(Error::Invalid("multistart needs at least one start".into()));
    }
    let runs: Vec<(u64, Result<SolveReport<T>>)> = (0..n_starts as u64)
        .into_par_iter()
        .map(|i| {
            let seed = opts.seed.wrapping_add(i);
            let o = BaselineOptions { seed, ..*opts };
            (seed, inner.solve(problem, &o))
        })
        .collect();
    let mut best: Option<(f64, u64, SolveReport<T>)> = None;
    for (seed, run) in runs {
        let rep = run?;
        let f = rep.objective();
        let better = match &best {
            None => true,
            Some((bf, bs, _)) => f < *bf || (f == *bf && seed < *bs),
        };
        if better {
            best = Some((f, seed, rep));
        }
    }
    let (_, seed, mut rep) = best.expect("n_starts > 0");
    rep.solver = format!("multistart({})", rep.solver);
    rep.warnings.push(format!("best of {n_starts} starts at seed {seed}"));
    Ok(rep)
}
