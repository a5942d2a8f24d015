//! Dense and sparse linear algebra kernels used by the solvers.

pub mod cg;
pub mod dense;
pub mod lobpcg;
pub mod qr;
pub mod sparse;

pub use cg::{cg_solve, CgFailure, CgFailureKind, CgSolution};
pub use dense::{
    dense_sym_eig, nuclear_norm, singular_values, smallest_singular_value, spectral_norm, sym, sym_fn, EigPairs,
    SpdFactors,
};
pub use lobpcg::{smallest_eigenpairs, LobpcgOptions};
pub use qr::{orthogonal_complement, orthonormalize_against, project_out, thin_qr, thin_qr_with_tol};
pub use sparse::{CountingOperator, CsrMatrix, LowRankTerm, SparseBlock, SparseSymOperator, SymOperator};
