//! Benchmark harness: datasets × solvers × seeds → one row per run.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instances::{e1, random_problem};
use crate::io::gen_circles;
use crate::method::MethodKind;
use crate::model::QuadraticProblem;
use crate::pipeline::{accuracy, assemble, balanced_cardinalities, knn_gaussian_graph, laplacian, SemiSupInstance};

/// Circles used by the `circles` suite.
pub const CIRCLES_PER_CLASS: usize = 300;
pub const CIRCLES_RADII: [f64; 3] = [1.0, 2.0, 3.0];
pub const CIRCLES_NOISE: f64 = 0.2;
pub const CIRCLES_LABELS_PER_CLASS: usize = 5;
pub const KNN_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    /// Semi-supervised problem on three noisy circles.
    Circles,
    /// Dense random instances, `n = 100`, `r = 4`.
    Random,
    /// The 3×2 diagonal example.
    E1,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Self::Circles => "circles",
            Self::Random => "random",
            Self::E1 => "e1",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "circles" => Ok(Self::Circles),
            "random" => Ok(Self::Random),
            "e1" => Ok(Self::E1),
            other => Err(Error::Invalid(format!("unknown suite '{other}' (expected circles, random or e1)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub suites: Vec<Suite>,
    pub solvers: Vec<MethodKind>,
    /// Seeds `seed0, seed0 + 1, …`.
    pub seeds: usize,
    pub seed0: u64,
    /// Gradient tolerance handed to every solver.
    pub tol: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            suites: vec![Suite::Circles],
            solvers: vec![MethodKind::Ssm, MethodKind::Rgd, MethodKind::Pg],
            seeds: 5,
            seed0: 0,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub dataset: String,
    pub solver: String,
    pub seed: u64,
    pub objective: f64,
    pub residual: f64,
    pub cg_evaluations: usize,
    pub runtime_s: f64,
    pub accuracy: Option<f64>,
    pub outer_iterations: usize,
    pub termination: String,
    pub qualified: bool,
    pub gamma_max: f64,
    pub dr: f64,
    /// Largest relative violation of the surrogate sandwich (SSM only).
    pub sandwich_violation: f64,
    pub iters_to_1e_2: Option<usize>,
    pub iters_to_1e_6: Option<usize>,
}

/// One point of an objective-versus-iteration series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRow {
    pub dataset: String,
    pub solver: String,
    pub seed: u64,
    pub k: usize,
    pub objective: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default)]
pub struct BenchOutput {
    pub rows: Vec<BenchRow>,
    pub plot: Vec<PlotRow>,
}

/// A benchmark problem and, for graph suites, what is needed to score it.
pub struct BenchInstance {
    pub suite: Suite,
    pub seed: u64,
    pub problem: QuadraticProblem<f64>,
    pub graph: Option<(SemiSupInstance<f64>, Vec<usize>)>,
}

/// `per_class` distinct random vertices from each contiguous class block.
pub fn sample_labels(seed: u64, classes: usize, block: usize, per_class: usize) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1abe1);
    let mut out = Vec::with_capacity(classes * per_class);
    for k in 0..classes {
        let mut picked: Vec<usize> = Vec::with_capacity(per_class);
        while picked.len() < per_class.min(block) {
            let v = k * block + rng.random_range(0..block);
            if !picked.contains(&v) {
                picked.push(v);
            }
        }
        out.extend(picked.into_iter().map(|v| (v, k + 1)));
    }
    out
}

/// `per_class` distinct random vertices of each class `1..=classes` of a
/// 1-based `truth`, in class order. Fails when a class has fewer vertices.
pub fn sample_labels_from_truth(seed: u64, truth: &[usize], classes: usize, per_class: usize) -> Result<Vec<(usize, usize)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1abe1);
    let mut out = Vec::with_capacity(classes * per_class);
    for k in 1..=classes {
        let mut members: Vec<usize> = (0..truth.len()).filter(|&v| truth[v] == k).collect();
        if members.len() < per_class {
            return Err(Error::Invalid(format!("class {k} has {} vertices, {per_class} requested", members.len())));
        }
        for i in 0..per_class {
            let j = rng.random_range(i..members.len());
            members.swap(i, j);
        }
        let mut picked = members[..per_class].to_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|v| (v, k)));
    }
    Ok(out)
}

/// The desk-scale circles instance for `seed`.
pub fn circles_instance(seed: u64) -> Result<(SemiSupInstance<f64>, Vec<usize>)> {
    let data = gen_circles(seed, CIRCLES_PER_CLASS, &CIRCLES_RADII, CIRCLES_NOISE)?;
    let g = knn_gaussian_graph(&data.points, KNN_K)?;
    let classes = CIRCLES_RADII.len();
    let labeled = sample_labels(seed, classes, CIRCLES_PER_CLASS, CIRCLES_LABELS_PER_CLASS);
    let inst = assemble(&laplacian(&g), &labeled, &balanced_cardinalities(g.n(), classes))?;
    Ok((inst, data.labels))
}

pub fn build_instance(suite: Suite, seed: u64) -> Result<BenchInstance> {
    let (problem, graph) = match suite {
        Suite::Circles => {
            let (inst, truth) = circles_instance(seed)?;
            (inst.standard_problem()?, Some((inst, truth)))
        }
        Suite::Random => (random_problem(100, 4, 1.0, seed)?, None),
        Suite::E1 => (e1(), None),
    };
    Ok(BenchInstance {
        suite,
        seed,
        problem,
        graph,
    })
}

/// Runs every (suite, seed, solver) cell. Cells run in parallel; rows come
/// back sorted by dataset, solver and seed.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchOutput> {
    if cfg.seeds == 0 || cfg.solvers.is_empty() || cfg.suites.is_empty() {
        return Err(Error::Invalid("bench needs at least one suite, solver and seed".into()));
    }
    let keys: Vec<(Suite, u64)> = cfg
        .suites
        .iter()
        .flat_map(|&s| (0..cfg.seeds as u64).map(move |i| (s, cfg.seed0 + i)))
        .collect();
    let instances: Vec<BenchInstance> = keys
        .par_iter()
        .map(|&(s, seed)| build_instance(s, seed))
        .collect::<Result<_>>()?;
    let cells: Vec<(&BenchInstance, MethodKind)> = instances
        .iter()
        .flat_map(|inst| cfg.solvers.iter().map(move |&m| (inst, m)))
        .collect();
    let results: Vec<(BenchRow, Vec<PlotRow>)> = cells
        .par_iter()
        .map(|&(inst, m)| run_cell(inst, m, cfg.tol))
        .collect::<Result<_>>()?;
    let mut out = BenchOutput::default();
    for (row, plot) in results {
        out.rows.push(row);
        out.plot.extend(plot);
    }
    out.rows
        .sort_by(|a, b| (&a.dataset, &a.solver, a.seed).cmp(&(&b.dataset, &b.solver, b.seed)));
    out.plot
        .sort_by(|a, b| (&a.dataset, &a.solver, a.seed, a.k).cmp(&(&b.dataset, &b.solver, b.seed, b.k)));
    Ok(out)
}

fn run_cell(inst: &BenchInstance, kind: MethodKind, tol: f64) -> Result<(BenchRow, Vec<PlotRow>)> {
    let start = Instant::now();
    let rep = kind.with_tol(tol).solve(&inst.problem)?;
    let runtime_s = start.elapsed().as_secs_f64();
    let accuracy = match &inst.graph {
        Some((g, truth)) => {
            let labels = g.labels_from(&g.recover(&rep.x));
            Some(accuracy(&labels, truth, &g.unlabeled)?)
        }
        None => None,
    };
    let dataset = inst.suite.name().to_string();
    let solver = kind.name().to_string();
    let plot = rep
        .iterations
        .iter()
        .map(|it| PlotRow {
            dataset: dataset.clone(),
            solver: solver.clone(),
            seed: inst.seed,
            k: it.k,
            objective: it.f,
            grad_norm: it.grad_norm,
        })
        .collect();
    let row = BenchRow {
        dataset,
        solver,
        seed: inst.seed,
        objective: rep.objective(),
        residual: rep.residual(),
        cg_evaluations: rep.operator_applications,
        runtime_s,
        accuracy,
        outer_iterations: rep.outer_iterations(),
        termination: serde_json::to_value(rep.termination)?.as_str().unwrap_or("unknown").to_string(),
        qualified: rep.certificate.qualified,
        gamma_max: rep.certificate.gamma_max(),
        dr: rep.certificate.dr,
        sandwich_violation: rep.sandwich.iter().map(|s| s.violation()).fold(0.0, f64::max),
        iters_to_1e_2: rep.iterations_to(1e-2),
        iters_to_1e_6: rep.iterations_to(1e-6),
    };
    Ok((row, plot))
}

fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rows_csv(path: impl AsRef<Path>, rows: &[BenchRow]) -> Result<()> {
    write_csv(path.as_ref(), rows)
}

pub fn write_plot_csv(path: impl AsRef<Path>, rows: &[PlotRow]) -> Result<()> {
    write_csv(path.as_ref(), rows)
}
