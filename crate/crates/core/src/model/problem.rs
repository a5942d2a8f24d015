use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{
    dense_sym_eig, orthogonal_complement, project_out, smallest_eigenpairs, sym, LobpcgOptions, SpdFactors,
    SparseSymOperator, SymOperator,
};
use crate::manifold::{project_matrix, StiefelPoint, TangentVector};
use crate::scalar::Scalar;

/// Problems with at most this many free dimensions get their ground spectrum
/// from a dense eigendecomposition.
pub const DENSE_GROUND_LIMIT: usize = 256;

/// The `r` smallest eigenpairs of `A` and the next eigenvalue.
#[derive(Debug, Clone)]
pub struct GroundSpectrum<T: Scalar> {
    /// `d₁ ≤ … ≤ d_r`.
    pub d: DVector<T>,
    /// `d_{r+1}`, or `+∞` when the space has dimension `r`.
    pub d_next: T,
    /// Orthonormal ground eigenvectors, `n×r`.
    pub vg: DMatrix<T>,
}

impl<T: Scalar> GroundSpectrum<T> {
    pub fn new(d: DVector<T>, d_next: T, vg: DMatrix<T>) -> Result<Self> {
        if d.len() != vg.ncols() || d.is_empty() {
            return Err(Error::Dimension(format!(
                "{} ground eigenvalues for {} ground vectors",
                d.len(),
                vg.ncols()
            )));
        }
        if d.as_slice().windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Invalid("ground eigenvalues must be ascending".into()));
        }
        let gram = (vg.transpose() * &vg - DMatrix::identity(vg.ncols(), vg.ncols())).norm();
        if gram.as_f64() > 1e-8 {
            return Err(Error::Invalid("ground eigenvectors are not orthonormal".into()));
        }
        Ok(Self { d, d_next, vg })
    }

    /// Computes the ground spectrum of `a`, restricted to the orthogonal
    /// complement of `deflate` when given.
    pub fn compute<O: SymOperator<T> + ?Sized>(
        a: &O,
        r: usize,
        deflate: Option<&DMatrix<T>>,
        opts: &LobpcgOptions,
    ) -> Result<Self> {
        let n = a.dim();
        let q = deflate.map_or(0, |w| w.ncols());
        if r == 0 || r + q > n {
            return Err(Error::Dimension(format!(
                "cannot take {r} ground vectors in dimension {n} with {q} deflated"
            )));
        }
        let free = n - q;
        if free <= DENSE_GROUND_LIMIT || r + 1 >= free {
            let basis = match deflate {
                Some(w) if q > 0 => orthogonal_complement(w),
                _ => DMatrix::identity(n, n),
            };
            let compressed = sym(&(basis.transpose() * a.apply(&basis)));
            let eig = dense_sym_eig(&compressed)?;
            let d = eig.values.rows(0, r).into_owned();
            let d_next = if eig.len() > r {
                eig.values[r]
            } else {
                T::lit(f64::INFINITY)
            };
            let vg = project_out(&(&basis * eig.vectors.columns(0, r)), deflate);
            return Self::new(d, d_next, vg);
        }
        let eig = smallest_eigenpairs(a, r + 1, deflate, opts)?;
        Self::new(
            eig.values.rows(0, r).into_owned(),
            eig.values[r],
            eig.vectors.columns(0, r).into_owned(),
        )
    }

    pub fn r(&self) -> usize {
        self.d.len()
    }

    pub fn d1(&self) -> T {
        self.d[0]
    }

    pub fn dr(&self) -> T {
        self.d[self.d.len() - 1]
    }

    pub fn gap(&self) -> T {
        self.d_next - self.dr()
    }
}

/// `min ½tr(XᵀAXC) − tr(BᵀX)` over `X ∈ St(n, r)`, optionally restricted to
/// the orthogonal complement of an invariant subspace `W` of `A`.
#[derive(Debug, Clone)]
pub struct QuadraticProblem<T: Scalar> {
    a: SparseSymOperator<T>,
    lifted: SparseSymOperator<T>,
    b: DMatrix<T>,
    c: SpdFactors<T>,
    ground: GroundSpectrum<T>,
    constraint: Option<DMatrix<T>>,
}

impl<T: Scalar> QuadraticProblem<T> {
    /// Builds the problem, computing the ground spectrum with default options.
    pub fn new(a: SparseSymOperator<T>, b: DMatrix<T>, c: DMatrix<T>) -> Result<Self> {
        let r = b.ncols();
        let ground = GroundSpectrum::compute(&a, r, None, &LobpcgOptions::default())?;
        Self::from_parts(a, b, c, ground, None)
    }

    /// Builds the problem restricted to `span(W)⊥`. `W` must be orthonormal,
    /// `AW` must lie in `span(W)` and `WᵀB` must vanish.
    pub fn with_constraint(a: SparseSymOperator<T>, b: DMatrix<T>, c: DMatrix<T>, w: DMatrix<T>) -> Result<Self> {
        let r = b.ncols();
        let ground = GroundSpectrum::compute(&a, r, Some(&w), &LobpcgOptions::default())?;
        Self::from_parts(a, b, c, ground, Some(w))
    }

    pub fn from_parts(
        a: SparseSymOperator<T>,
        b: DMatrix<T>,
        c: DMatrix<T>,
        ground: GroundSpectrum<T>,
        constraint: Option<DMatrix<T>>,
    ) -> Result<Self> {
        let (n, r) = b.shape();
        if a.dim() != n || c.shape() != (r, r) || ground.vg.nrows() != n || ground.r() != r {
            return Err(Error::Dimension(format!(
                "A is {0}x{0}, B is {n}x{r}, C is {1}x{2}, ground block is {3}x{4}",
                a.dim(),
                c.nrows(),
                c.ncols(),
                ground.vg.nrows(),
                ground.r()
            )));
        }
        if r == 0 || n < r {
            return Err(Error::Dimension(format!("need 1 <= r <= n, got n = {n}, r = {r}")));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("B has non-finite entries".into()));
        }
        let c = SpdFactors::new(&c)?;
        let scale = a.norm_estimate(7).max(T::one());
        if let Some(w) = &constraint {
            let q = w.ncols();
            if w.nrows() != n || q + r > n {
                return Err(Error::Dimension("constraint basis shape".into()));
            }
            if (w.transpose() * w - DMatrix::identity(q, q)).norm().as_f64() > 1e-8 {
                return Err(Error::Invalid("constraint basis is not orthonormal".into()));
            }
            let aw = a.apply(w);
            let leak = (&aw - w * (w.transpose() * &aw)).norm();
            if leak > T::lit(1e-8) * scale {
                return Err(Error::Invalid("constraint subspace is not invariant under A".into()));
            }
            if (w.transpose() * &b).norm() > T::lit(1e-8) * b.norm().max(T::one()) {
                return Err(Error::Invalid("B is not orthogonal to the constraint subspace".into()));
            }
        }
        let av = a.apply(&ground.vg);
        let resid = (&av - &ground.vg * DMatrix::from_diagonal(&ground.d)).norm();
        if resid > T::lit(1e-6) * scale {
            return Err(Error::Invalid(format!(
                "ground block is not an eigenbasis of A (residual {:e})",
                resid.as_f64()
            )));
        }
        if ground.gap() <= T::lit(1e-12) * ground.dr().abs().max(T::one()) {
            return Err(Error::Degenerate(format!(
                "no spectral gap: d_r = {}, d_(r+1) = {}",
                ground.dr(),
                ground.d_next
            )));
        }
        let lifted = super::lift(&a, &ground)?;
        Ok(Self {
            a,
            lifted,
            b,
            c,
            ground,
            constraint,
        })
    }

    pub fn n(&self) -> usize {
        self.b.nrows()
    }

    pub fn r(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &SparseSymOperator<T> {
        &self.a
    }

    /// The lifted operator `Ã = A + V_g diag(d_r − dᵢ) V_gᵀ`.
    pub fn lifted(&self) -> &SparseSymOperator<T> {
        &self.lifted
    }

    pub fn b(&self) -> &DMatrix<T> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<T> {
        &self.c.matrix
    }

    pub fn c_factors(&self) -> &SpdFactors<T> {
        &self.c
    }

    pub fn ground(&self) -> &GroundSpectrum<T> {
        &self.ground
    }

    pub fn constraint(&self) -> Option<&DMatrix<T>> {
        self.constraint.as_ref()
    }

    /// The same problem with `A` replaced by its lift.
    pub fn to_lifted(&self) -> Result<Self> {
        let d = DVector::from_element(self.r(), self.ground.dr());
        let ground = GroundSpectrum::new(d, self.ground.d_next, self.ground.vg.clone())?;
        let lifted = self.lifted.clone();
        Ok(Self {
            a: lifted.clone(),
            lifted,
            b: self.b.clone(),
            c: self.c.clone(),
            ground,
            constraint: self.constraint.clone(),
        })
    }

    pub fn objective(&self, x: &StiefelPoint<T>) -> T {
        objective(&self.a, &self.b, self.c(), x.matrix())
    }

    pub fn euclidean_grad(&self, x: &StiefelPoint<T>) -> DMatrix<T> {
        euclidean_grad(&self.a, &self.b, self.c(), x.matrix())
    }

    pub fn riemannian_grad(&self, x: &StiefelPoint<T>) -> TangentVector<T> {
        TangentVector {
            v: riemannian_grad(&self.a, &self.b, self.c(), x.matrix()),
        }
    }

    pub fn multiplier(&self, x: &StiefelPoint<T>) -> DMatrix<T> {
        multiplier(&self.a, &self.b, self.c(), x.matrix())
    }

    pub fn hessian_apply(&self, x: &StiefelPoint<T>, lambda: &DMatrix<T>, v: &TangentVector<T>) -> TangentVector<T> {
        TangentVector {
            v: hessian_apply(&self.a, self.c(), x.matrix(), lambda, &v.v),
        }
    }
}

/// `½⟨X, AXC⟩ − ⟨B, X⟩`.
pub fn objective<T: Scalar, O: SymOperator<T> + ?Sized>(a: &O, b: &DMatrix<T>, c: &DMatrix<T>, x: &DMatrix<T>) -> T {
    let axc = a.apply(x) * c;
    x.dot(&axc) * T::lit(0.5) - b.dot(x)
}

/// `AXC − B`.
pub fn euclidean_grad<T: Scalar, O: SymOperator<T> + ?Sized>(
    a: &O,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
    x: &DMatrix<T>,
) -> DMatrix<T> {
    a.apply(x) * c - b
}

/// `Pj_X(AXC − B)`. Its norm equals the first-order residual `‖AXC − B − XΛ‖`.
pub fn riemannian_grad<T: Scalar, O: SymOperator<T> + ?Sized>(
    a: &O,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
    x: &DMatrix<T>,
) -> DMatrix<T> {
    project_matrix(x, &euclidean_grad(a, b, c, x))
}

/// `(Xᵀ(AXC − B))_sym`.
pub fn multiplier<T: Scalar, O: SymOperator<T> + ?Sized>(
    a: &O,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
    x: &DMatrix<T>,
) -> DMatrix<T> {
    sym(&(x.transpose() * euclidean_grad(a, b, c, x)))
}

/// `Pj_X(AVC − VΛ_sym)`.
pub fn hessian_apply<T: Scalar, O: SymOperator<T> + ?Sized>(
    a: &O,
    c: &DMatrix<T>,
    x: &DMatrix<T>,
    lambda: &DMatrix<T>,
    v: &DMatrix<T>,
) -> DMatrix<T> {
    let w = a.apply(v) * c - v * sym(lambda);
    project_matrix(x, &w)
}
