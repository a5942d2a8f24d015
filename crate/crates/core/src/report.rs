//! Solver output shared by SSM and the baselines.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::model::QualifiedCertificate;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    /// No acceptable step could be found.
    Stalled,
}

/// One outer iteration, measured at the iterate entering it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub k: usize,
    pub f: f64,
    pub grad_norm: f64,
    pub gamma_max: f64,
    pub cg_iters: usize,
    pub subspace_rank: usize,
}

/// The surrogate chain `f(X_{k+1}) ≤ f_k(X_{k+1}) ≤ f(X_k)` of one accepted
/// step, plus the gap between the surrogate and the true multiplier at
/// `X_{k+1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichRecord {
    pub k: usize,
    pub f_prev: f64,
    pub surrogate_next: f64,
    pub f_next: f64,
    pub step_norm: f64,
    pub multiplier_drift: f64,
}

impl SandwichRecord {
    /// Largest violation of either inequality, relative to `max(1, |f|)`.
    pub fn violation(&self) -> f64 {
        let scale = self.f_prev.abs().max(1.0);
        let lower = (self.f_next - self.surrogate_next).max(0.0);
        let upper = (self.surrogate_next - self.f_prev).max(0.0);
        lower.max(upper) / scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalSummary {
    pub objective: f64,
    pub residual: f64,
    pub gamma: Vec<f64>,
    pub qualified: bool,
    pub global: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport<T: Scalar> {
    pub solver: String,
    pub iterations: Vec<IterationRecord>,
    #[serde(rename = "final")]
    pub final_summary: FinalSummary,
    pub certificate: QualifiedCertificate,
    pub termination: Termination,
    pub wall_time_s: f64,
    /// Block applications of the `n×n` operator.
    pub operator_applications: usize,
    /// Total inner conjugate-gradient iterations.
    pub cg_iterations: usize,
    pub sandwich: Vec<SandwichRecord>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub x: DMatrix<T>,
}

impl<T: Scalar> SolveReport<T> {
    pub fn objective(&self) -> f64 {
        self.final_summary.objective
    }

    pub fn residual(&self) -> f64 {
        self.final_summary.residual
    }

    /// Number of outer iterations performed.
    pub fn outer_iterations(&self) -> usize {
        self.iterations.len().saturating_sub(1)
    }

    /// Outer iterations performed before the gradient norm first drops to
    /// `tol` (0 when the start already qualifies). Counted the same way for
    /// every solver, whatever its `k` numbering.
    pub fn iterations_to(&self, tol: f64) -> Option<usize> {
        self.iterations.iter().position(|r| r.grad_norm <= tol)
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

pub(crate) fn summary(cert: &QualifiedCertificate, objective: f64) -> FinalSummary {
    FinalSummary {
        objective,
        residual: cert.residual,
        gamma: cert.gamma.clone(),
        qualified: cert.qualified,
        global: cert.global,
    }
}
