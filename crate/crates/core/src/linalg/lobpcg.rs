//! Block eigensolver for the smallest eigenpairs of a large symmetric operator.
//!
//! Locally optimal block preconditioned conjugate gradients with a Jacobi
//! preconditioner, soft locking of converged columns and optional deflation
//! against a fixed orthonormal basis.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::dense::{canonical_signs, sym, sym_eig_unchecked, EigPairs};
use crate::linalg::qr::{project_out, thin_qr, thin_qr_with_tol};
use crate::linalg::sparse::SymOperator;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct LobpcgOptions {
    /// Residual tolerance relative to the operator norm estimate.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for LobpcgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 5000,
            seed: 0x5eed,
        }
    }
}

enum Preconditioner<T: Scalar> {
    Jacobi(DVector<T>),
    Identity,
}

impl<T: Scalar> Preconditioner<T> {
    fn for_operator<O: SymOperator<T> + ?Sized>(op: &O) -> Self {
        let diag = op.diagonal();
        let floor = T::lit(1e-12);
        // Zero or negative diagonal entries make Jacobi scaling meaningless.
        if diag.iter().any(|&d| d <= T::zero()) {
            return Preconditioner::Identity;
        }
        Preconditioner::Jacobi(diag.map(|d| T::one() / d.max(floor)))
    }

    fn apply(&self, r: &DMatrix<T>) -> DMatrix<T> {
        match self {
            Preconditioner::Jacobi(inv) => {
                let mut w = r.clone();
                for mut col in w.column_iter_mut() {
                    col.component_mul_assign(inv);
                }
                w
            }
            Preconditioner::Identity => r.clone(),
        }
    }
}

/// Normalizes every column (zero columns are left untouched).
fn normalize_columns<T: Scalar>(m: &mut DMatrix<T>) {
    for mut c in m.column_iter_mut() {
        let n = c.norm();
        if n > T::zero() {
            c /= n;
        }
    }
}

/// The `k` smallest eigenpairs of `op` restricted to the orthogonal
/// complement of `deflate` (orthonormal columns).
///
/// Converged when every residual `‖Av − λv‖ ≤ tol·‖A‖`, with `‖A‖` estimated
/// by power iteration.
pub fn smallest_eigenpairs<T: Scalar, O: SymOperator<T> + ?Sized>(
    op: &O,
    k: usize,
    deflate: Option<&DMatrix<T>>,
    opts: &LobpcgOptions,
) -> Result<EigPairs<T>> {
    let n = op.dim();
    let q = deflate.map_or(0, |w| w.ncols());
    if k == 0 || k + q >= n {
        return Err(Error::Invalid(format!(
            "need 0 < k + deflation rank < n, got k = {k}, rank = {q}, n = {n}"
        )));
    }
    if let Some(w) = deflate {
        if w.nrows() != n {
            return Err(Error::Dimension("deflation basis row count".into()));
        }
        let gram_err = (w.transpose() * w - DMatrix::identity(q, q)).norm();
        if gram_err.as_f64() > 1e-8 {
            return Err(Error::Invalid("deflation basis is not orthonormal".into()));
        }
    }

    let norm = op.norm_estimate(opts.seed ^ 0x9e37).max(T::eps());
    let target = T::lit(opts.tol) * norm;
    let precond = Preconditioner::for_operator(op);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = DMatrix::zeros(n, 0);
    while x.ncols() < k {
        let g = DMatrix::from_fn(n, k, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            T::lit(z)
        });
        x = thin_qr(&project_out(&g, deflate));
        x = x.columns(0, x.ncols().min(k)).into_owned();
    }

    // Initial Rayleigh-Ritz.
    let mut ax = op.apply(&x);
    let (mut theta, rot) = rayleigh_ritz(&(x.transpose() * &ax), k);
    x = &x * &rot;
    ax = &ax * &rot;

    let mut p: Option<DMatrix<T>> = None;
    let mut best = T::lit(f64::INFINITY);
    for _it in 0..opts.max_iter {
        let mut r = &ax - &x * DMatrix::from_diagonal(&theta);
        r = project_out(&r, deflate);
        let norms: Vec<T> = r.column_iter().map(|c| c.norm()).collect();
        let worst = norms.iter().copied().fold(T::zero(), |a, b| a.max(b));
        best = best.min(worst);
        if worst <= target {
            return Ok(finalize(op, x, deflate));
        }

        let active: Vec<usize> = (0..k).filter(|&i| norms[i] > target).collect();
        let r_active = DMatrix::from_columns(&active.iter().map(|&i| r.column(i).into_owned()).collect::<Vec<_>>());
        let mut w = precond.apply(&r_active);
        normalize_columns(&mut w);

        let mut block = match &p {
            Some(p) => {
                let mut s = DMatrix::zeros(n, w.ncols() + p.ncols());
                s.columns_mut(0, w.ncols()).copy_from(&w);
                let mut pn = p.clone();
                normalize_columns(&mut pn);
                s.columns_mut(w.ncols(), p.ncols()).copy_from(&pn);
                s
            }
            None => w,
        };
        block = project_out(&block, deflate);
        block = &block - &x * (x.transpose() * &block);
        block = &block - &x * (x.transpose() * &block);
        let mut s = thin_qr_with_tol(&block, T::lit(1e-8));
        if s.ncols() == 0 {
            // Search space exhausted; nothing left to improve.
            return Ok(finalize(op, x, deflate));
        }
        s = project_out(&s, deflate);
        s = &s - &x * (x.transpose() * &s);
        s = thin_qr_with_tol(&s, T::lit(1e-8));
        if s.ncols() == 0 {
            return Ok(finalize(op, x, deflate));
        }

        let as_ = op.apply(&s);
        let m = s.ncols();
        let mut h = DMatrix::zeros(k + m, k + m);
        h.view_mut((0, 0), (k, k)).copy_from(&DMatrix::from_diagonal(&theta));
        let xas = x.transpose() * &as_;
        h.view_mut((0, k), (k, m)).copy_from(&xas);
        h.view_mut((k, 0), (m, k)).copy_from(&xas.transpose());
        h.view_mut((k, k), (m, m)).copy_from(&sym(&(s.transpose() * &as_)));
        let (new_theta, coef) = rayleigh_ritz(&h, k);
        let cx = coef.rows(0, k).into_owned();
        let cs = coef.rows(k, m).into_owned();

        let p_new = &s * &cs;
        x = &x * &cx + &p_new;
        ax = &ax * &cx + &as_ * &cs;
        theta = new_theta;
        p = Some(p_new);

        // Guard against loss of orthogonality in X.
        let drift = (x.transpose() * &x - DMatrix::identity(k, k)).norm();
        if drift > T::lit(1e-10) {
            x = thin_qr(&project_out(&x, deflate));
            if x.ncols() < k {
                return Err(Error::NoConvergence {
                    method: "LOBPCG",
                    iterations: _it,
                    residual: best.as_f64(),
                });
            }
            ax = op.apply(&x);
            let (t, rot) = rayleigh_ritz(&(x.transpose() * &ax), k);
            x = &x * &rot;
            ax = &ax * &rot;
            theta = t;
            p = None;
        }
    }
    Err(Error::NoConvergence {
        method: "LOBPCG",
        iterations: opts.max_iter,
        residual: (best / norm).as_f64(),
    })
}

/// Smallest `k` eigenpairs of a small projected matrix.
fn rayleigh_ritz<T: Scalar>(h: &DMatrix<T>, k: usize) -> (DVector<T>, DMatrix<T>) {
    let e = sym_eig_unchecked(&sym(h));
    (
        e.values.rows(0, k).into_owned(),
        e.vectors.columns(0, k).into_owned(),
    )
}

/// Final cleanup: re-project, re-orthonormalize and re-solve the projected
/// problem so the output basis is exactly orthogonal to the deflation basis.
fn finalize<T: Scalar, O: SymOperator<T> + ?Sized>(op: &O, x: DMatrix<T>, deflate: Option<&DMatrix<T>>) -> EigPairs<T> {
    let k = x.ncols();
    let q = thin_qr(&project_out(&x, deflate));
    let aq = op.apply(&q);
    let (values, rot) = rayleigh_ritz(&(q.transpose() * &aq), k.min(q.ncols()));
    let mut vectors = project_out(&(&q * rot), deflate);
    canonical_signs(&mut vectors);
    EigPairs { values, vectors }
}
