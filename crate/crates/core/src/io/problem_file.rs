use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{read_dense, read_matrix_market};
use crate::baselines::BaselineOptions;
use crate::error::{Error, Result};
use crate::model::QuadraticProblem;
use crate::solver::SsmOptions;

/// TOML description of a problem instance.
///
/// ```toml
/// a = "a.mtx"        # Matrix Market, n×n symmetric
/// b = "b.csv"        # dense n×r (CSV or .bin)
/// c = "c.csv"        # dense r×r SPD; identity when omitted
/// constraint = "w.csv"  # optional orthonormal basis to stay orthogonal to
///
/// [ssm]
/// tol_grad = 1e-8
/// ```
///
/// Relative paths are resolved against the directory of the TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub a: PathBuf,
    pub b: PathBuf,
    #[serde(default)]
    pub c: Option<PathBuf>,
    /// Optional check on the number of columns of `B`.
    #[serde(default)]
    pub r: Option<usize>,
    #[serde(default)]
    pub constraint: Option<PathBuf>,
    #[serde(default)]
    pub ssm: Option<SsmOptions>,
    #[serde(default)]
    pub baseline: Option<BaselineOptions>,
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Loads the matrices, resolving paths against `base`.
    pub fn build(&self, base: &Path) -> Result<QuadraticProblem<f64>> {
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let a = read_matrix_market(resolve(&self.a))?;
        let b = read_dense(resolve(&self.b))?;
        let r = b.ncols();
        if let Some(expect) = self.r {
            if expect != r {
                return Err(Error::Dimension(format!("problem file says r = {expect}, B has {r} columns")));
            }
        }
        let c = match &self.c {
            Some(p) => read_dense(resolve(p))?,
            None => DMatrix::identity(r, r),
        };
        match &self.constraint {
            Some(p) => QuadraticProblem::with_constraint(a, b, c, read_dense(resolve(p))?),
            None => QuadraticProblem::new(a, b, c),
        }
    }
}

/// Reads a problem TOML file and the matrices it names.
pub fn load_problem(path: impl AsRef<Path>) -> Result<(ProblemFile, QuadraticProblem<f64>)> {
    let path = path.as_ref();
    let spec = ProblemFile::parse(&std::fs::read_to_string(path)?)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let problem = spec.build(base)?;
    Ok((spec, problem))
}
