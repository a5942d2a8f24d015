use nalgebra::DMatrix;

use crate::scalar::Scalar;

/// Relative column-norm threshold below which a column is treated as dependent.
pub const RANK_DROP_TOL: f64 = 1e-10;

/// Orthonormal basis of the column space of `m`, in column order.
///
/// Modified Gram-Schmidt with one re-orthogonalization pass. A column whose
/// remainder falls below `1e-10 × (largest input column norm)` is dropped,
/// so the output has as many columns as the numerical rank.
pub fn thin_qr<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    thin_qr_with_tol(m, T::lit(RANK_DROP_TOL))
}

pub fn thin_qr_with_tol<T: Scalar>(m: &DMatrix<T>, drop_tol: T) -> DMatrix<T> {
    let n = m.nrows();
    let largest = m.column_iter().fold(T::zero(), |acc, c| acc.max(c.norm()));
    if largest == T::zero() || n == 0 {
        return DMatrix::zeros(n, 0);
    }
    let cut = drop_tol * largest;
    let mut basis: Vec<nalgebra::DVector<T>> = Vec::with_capacity(m.ncols().min(n));
    for col in m.column_iter() {
        if basis.len() == n {
            break;
        }
        let mut v = col.into_owned();
        for _ in 0..2 {
            for q in &basis {
                let h = q.dot(&v);
                v.axpy(-h, q, T::one());
            }
        }
        let nv = v.norm();
        if nv > cut {
            basis.push(v / nv);
        }
    }
    DMatrix::from_columns(&basis)
}

/// Re-orthonormalizes the columns of `m` against an orthonormal `against`
/// (two passes), then against each other.
pub fn orthonormalize_against<T: Scalar>(m: &DMatrix<T>, against: Option<&DMatrix<T>>) -> DMatrix<T> {
    match against {
        Some(w) if w.ncols() > 0 => {
            let mut y = m - w * (w.transpose() * m);
            y -= w * (w.transpose() * &y);
            thin_qr(&y)
        }
        _ => thin_qr(m),
    }
}

/// `M − W(WᵀM)` applied twice.
pub fn project_out<T: Scalar>(m: &DMatrix<T>, w: Option<&DMatrix<T>>) -> DMatrix<T> {
    match w {
        Some(w) if w.ncols() > 0 => {
            let y = m - w * (w.transpose() * m);
            &y - w * (w.transpose() * &y)
        }
        _ => m.clone(),
    }
}

/// Orthonormal basis of the orthogonal complement of `x` (dense, small `n`).
pub fn orthogonal_complement<T: Scalar>(x: &DMatrix<T>) -> DMatrix<T> {
    let n = x.nrows();
    let mut stacked = DMatrix::zeros(n, x.ncols() + n);
    stacked.columns_mut(0, x.ncols()).copy_from(x);
    stacked
        .columns_mut(x.ncols(), n)
        .copy_from(&DMatrix::identity(n, n));
    let q = thin_qr_with_tol(&stacked, T::lit(1e-8));
    q.columns(x.ncols(), q.ncols() - x.ncols()).into_owned()
}
