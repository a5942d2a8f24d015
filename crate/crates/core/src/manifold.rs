//! Stiefel manifold `St(n, r) = {X : XᵀX = I}` with the polar retraction.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{sym, thin_qr};
use crate::scalar::Scalar;

/// Orthonormality tolerance accepted by [`StiefelPoint::new`].
pub const FEASIBILITY_TOL: f64 = 1e-10;

/// A point on the Stiefel manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint<T: Scalar> {
    x: DMatrix<T>,
}

impl<T: Scalar> StiefelPoint<T> {
    /// Wraps `x` after checking `n ≥ r` and `‖XᵀX − I‖ ≤ 1e-10`.
    pub fn new(x: DMatrix<T>) -> Result<Self> {
        if x.nrows() < x.ncols() {
            return Err(Error::Dimension(format!(
                "Stiefel point needs n >= r, got {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        let err = feasibility_error(&x);
        if err.as_f64() > FEASIBILITY_TOL {
            return Err(Error::Invalid(format!("columns are not orthonormal (‖XᵀX − I‖ = {:e})", err.as_f64())));
        }
        Ok(Self { x })
    }

    /// Wraps `x` without checking orthonormality.
    pub(crate) fn new_unchecked(x: DMatrix<T>) -> Self {
        Self { x }
    }

    /// The first `r` columns of the `n×n` identity.
    pub fn identity(n: usize, r: usize) -> Self {
        Self {
            x: DMatrix::identity(n, r),
        }
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.x
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.x
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn r(&self) -> usize {
        self.x.ncols()
    }

    pub fn feasibility_error(&self) -> T {
        feasibility_error(&self.x)
    }
}

impl<T: Scalar> AsRef<DMatrix<T>> for StiefelPoint<T> {
    fn as_ref(&self) -> &DMatrix<T> {
        &self.x
    }
}

/// `‖XᵀX − I‖_F`.
pub fn feasibility_error<T: Scalar>(x: &DMatrix<T>) -> T {
    (x.transpose() * x - DMatrix::identity(x.ncols(), x.ncols())).norm()
}

/// A tangent vector. The base point is carried by the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector<T: Scalar> {
    pub v: DMatrix<T>,
}

impl<T: Scalar> TangentVector<T> {
    pub fn zeros(n: usize, r: usize) -> Self {
        Self { v: DMatrix::zeros(n, r) }
    }

    pub fn norm(&self) -> T {
        self.v.norm()
    }

    pub fn inner(&self, other: &Self) -> T {
        self.v.dot(&other.v)
    }

    pub fn scaled(&self, t: T) -> Self {
        Self { v: &self.v * t }
    }

    /// Relative size of the symmetric part of `XᵀV` (zero for a tangent vector).
    pub fn tangency_error(&self, base: &StiefelPoint<T>) -> T {
        let xv = base.matrix().transpose() * &self.v;
        sym(&xv).norm()
    }
}

/// Nearest Stiefel point `U Vᵀ` to `y` via the reduced SVD.
pub fn polar_project<T: Scalar>(y: &DMatrix<T>) -> Result<StiefelPoint<T>> {
    if y.nrows() < y.ncols() {
        return Err(Error::Dimension(format!("polar projection of a wide {}x{} matrix", y.nrows(), y.ncols())));
    }
    if y.ncols() == 0 {
        return Ok(StiefelPoint { x: y.clone() });
    }
    let svd = y.clone().svd(true, true);
    let s = &svd.singular_values;
    let smax = s.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let smin = s.iter().copied().fold(smax, |a, b| a.min(b));
    if smax == T::zero() || smin <= T::lit(1e-12) * smax {
        let ratio = if smax == T::zero() { 0.0 } else { (smin / smax).as_f64() };
        return Err(Error::RankDeficient(ratio));
    }
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    Ok(StiefelPoint { x: u * vt })
}

/// `U − X (XᵀU)_sym`.
pub fn tangent_project<T: Scalar>(x: &StiefelPoint<T>, u: &DMatrix<T>) -> TangentVector<T> {
    TangentVector {
        v: project_matrix(x.matrix(), u),
    }
}

pub(crate) fn project_matrix<T: Scalar>(x: &DMatrix<T>, u: &DMatrix<T>) -> DMatrix<T> {
    u - x * sym(&(x.transpose() * u))
}

/// `polar(X + tV)`.
///
/// For tangent `V` every singular value of `X + tV` is at least one, so the
/// projection cannot fail.
pub fn retract<T: Scalar>(x: &StiefelPoint<T>, v: &TangentVector<T>, t: T) -> StiefelPoint<T> {
    let y = x.matrix() + &v.v * t;
    match polar_project(&y) {
        Ok(p) => p,
        // Only reachable for non-tangent input; fall back to the QR factor.
        Err(_) => StiefelPoint { x: thin_qr(&y) },
    }
}

/// `thin_qr` of a seeded Gaussian `n×r` matrix.
pub fn random_point<T: Scalar>(n: usize, r: usize, seed: u64) -> Result<StiefelPoint<T>> {
    if n < r {
        return Err(Error::Dimension(format!("random point needs n >= r, got n = {n}, r = {r}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let g = DMatrix::from_fn(n, r, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            T::lit(z)
        });
        let q = thin_qr(&g);
        if q.ncols() == r {
            return Ok(StiefelPoint { x: q });
        }
    }
}

/// The curve `[X, X⊥] exp(tΩ) I_{n,r}` with `Ω = [[Δ0, −Δ1ᵀ], [Δ1, 0]]`.
///
/// Starts at `X` with velocity `XΔ0 + X⊥Δ1`. Dense `n×n` exponential; meant
/// for small test problems.
pub fn test_curve<T: Scalar>(
    x: &StiefelPoint<T>,
    x_perp: &DMatrix<T>,
    delta0: &DMatrix<T>,
    delta1: &DMatrix<T>,
    t: T,
) -> Result<StiefelPoint<T>> {
    let (n, r) = (x.n(), x.r());
    if x_perp.shape() != (n, n - r) || delta0.shape() != (r, r) || delta1.shape() != (n - r, r) {
        return Err(Error::Dimension("test curve block shapes".into()));
    }
    if (delta0 + delta0.transpose()).norm().as_f64() > 1e-10 {
        return Err(Error::Invalid("Δ0 must be skew-symmetric".into()));
    }
    let mut omega = DMatrix::zeros(n, n);
    omega.view_mut((0, 0), (r, r)).copy_from(delta0);
    omega.view_mut((r, 0), (n - r, r)).copy_from(delta1);
    omega.view_mut((0, r), (r, n - r)).copy_from(&(-delta1.transpose()));
    let e = (omega * t).exp();
    let mut frame = DMatrix::zeros(n, n);
    frame.columns_mut(0, r).copy_from(x.matrix());
    frame.columns_mut(r, n - r).copy_from(x_perp);
    Ok(StiefelPoint {
        x: frame * e.columns(0, r),
    })
}
