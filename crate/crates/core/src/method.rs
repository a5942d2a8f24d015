//! Uniform entry point over SSM and the gradient baselines.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{projected_gradient_from, riemannian_gd_from, BaselineOptions};
use crate::error::{Error, Result};
use crate::model::QuadraticProblem;
use crate::report::SolveReport;
use crate::scalar::Scalar;
use crate::solver::{initialize, ssm_solve, SsmOptions};

/// A solver together with its options.
///
/// The baselines start from the same point as SSM, `polar(V_g V_gᵀ B)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solver", rename_all = "snake_case")]
pub enum Method {
    Ssm(SsmOptions),
    Rgd(BaselineOptions),
    Pg(BaselineOptions),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Ssm,
    Rgd,
    Pg,
}

impl MethodKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ssm => "ssm",
            Self::Rgd => "rgd",
            Self::Pg => "pg",
        }
    }

    /// Default options with the gradient tolerance replaced by `tol`.
    pub fn with_tol(self, tol: f64) -> Method {
        match self {
            Self::Ssm => Method::Ssm(SsmOptions {
                tol_grad: tol,
                ..SsmOptions::default()
            }),
            Self::Rgd => Method::Rgd(BaselineOptions {
                tol_grad: tol,
                ..BaselineOptions::default()
            }),
            Self::Pg => Method::Pg(BaselineOptions {
                tol_grad: tol,
                ..BaselineOptions::default()
            }),
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ssm" => Ok(Self::Ssm),
            "rgd" | "r-gd" | "riemannian_gradient" => Ok(Self::Rgd),
            "pg" | "projected_gradient" => Ok(Self::Pg),
            other => Err(Error::Invalid(format!("unknown solver '{other}' (expected ssm, rgd or pg)"))),
        }
    }
}

impl Default for Method {
    fn default() -> Self {
        Self::Ssm(SsmOptions::default())
    }
}

impl Method {
    pub fn kind(&self) -> MethodKind {
        match self {
            Self::Ssm(_) => MethodKind::Ssm,
            Self::Rgd(_) => MethodKind::Rgd,
            Self::Pg(_) => MethodKind::Pg,
        }
    }

    pub fn solve<T: Scalar>(&self, problem: &QuadraticProblem<T>) -> Result<SolveReport<T>> {
        match self {
            Self::Ssm(o) => ssm_solve(problem, o),
            Self::Rgd(o) => {
                o.validate()?;
                riemannian_gd_from(problem, initialize(problem).0, o)
            }
            Self::Pg(o) => {
                o.validate()?;
                projected_gradient_from(problem, initialize(problem).0, o)
            }
        }
    }
}
