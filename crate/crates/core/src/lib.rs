//! Sequential subspace methods for quadratic minimization on the Stiefel
//! manifold, `min ½tr(XᵀAXC) − tr(BᵀX)` subject to `XᵀX = I`, together with
//! gradient baselines, global-optimality certificates and a semi-supervised
//! graph classification pipeline built on top of them.

pub mod baselines;
pub mod bench;
pub mod error;
pub mod instances;
pub mod io;
pub mod linalg;
pub mod manifold;
pub mod method;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use method::{Method, MethodKind};
pub use scalar::Scalar;

pub type QuadraticProblemF64 = model::QuadraticProblem<f64>;
pub type StiefelPointF64 = manifold::StiefelPoint<f64>;
pub type SolveReportF64 = report::SolveReport<f64>;
pub type SemiSupInstanceF64 = pipeline::SemiSupInstance<f64>;
pub type ClassificationResultF64 = pipeline::ClassificationResult<f64>;
