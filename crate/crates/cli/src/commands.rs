use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use log::info;
use nalgebra::DMatrix;
use stiefel_ssm::bench::{run_bench, sample_labels_from_truth, write_plot_csv, write_rows_csv, BenchConfig, Suite};
use stiefel_ssm::io::{
    gen_circles, load_idx, load_idx_labels, load_problem, read_dense, read_labels, read_matrix_market, write_dense_csv,
    write_labels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
use stiefel_ssm::linalg::{smallest_eigenpairs, LobpcgOptions, SymOperator};
use stiefel_ssm::pipeline::classify_points;
use stiefel_ssm::report::Termination;
use stiefel_ssm::{Error, Method, MethodKind};

use crate::{BenchArgs, CirclesArgs, ClassifyArgs, EigsArgs, SolveArgs};

/// How a command that produced its outputs ended.
pub enum Outcome {
    Done,
    NotConverged(String),
}

fn outcome(solver: &str, t: Termination) -> Outcome {
    match t {
        Termination::Converged => Outcome::Done,
        Termination::MaxIterations => Outcome::NotConverged(format!("{solver} hit its iteration cap")),
        Termination::Stalled => Outcome::NotConverged(format!("{solver} stalled before reaching the tolerance")),
    }
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    if let Some(err) = e.downcast_ref::<Error>() {
        return match err {
            Error::Invalid(_) => 1,
            Error::NoConvergence { .. } => 3,
            _ => 2,
        };
    }
    if e.downcast_ref::<std::io::Error>().is_some() {
        return 2;
    }
    1
}

/// Sizes the global rayon pool from `SSM_THREADS` when it is set.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("SSM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("SSM_THREADS must be a positive integer, got '{raw}'"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

/// Writes `text` to `path`, or to stdout without one.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

fn has_magic(path: &Path, magic: u32) -> Result<bool> {
    let mut head = [0u8; 4];
    let mut f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(std::io::Read::read(&mut f, &mut head)? == 4 && u32::from_be_bytes(head) == magic)
}

fn read_points(path: &Path) -> Result<DMatrix<f64>> {
    if has_magic(path, IDX_IMAGES_MAGIC)? {
        return Ok(load_idx(path)?);
    }
    Ok(read_dense(path)?)
}

/// Class of every vertex from a `vertex,class` CSV or an IDX label file.
fn read_truth(path: &Path, n: usize) -> Result<Vec<usize>> {
    if has_magic(path, IDX_LABELS_MAGIC)? {
        let digits = load_idx_labels(path)?;
        if digits.len() != n {
            return Err(Error::Format(format!("{} labels for {n} points", digits.len())).into());
        }
        return Ok(digits.into_iter().map(|d| d as usize + 1).collect());
    }
    let mut truth = vec![0; n];
    for (v, k) in read_labels(path)? {
        match truth.get_mut(v) {
            Some(slot) if *slot == 0 => *slot = k,
            Some(_) => return Err(Error::Format(format!("vertex {v} listed twice in {}", path.display())).into()),
            None => return Err(Error::Format(format!("vertex {v} out of range in {}", path.display())).into()),
        }
    }
    if let Some(v) = truth.iter().position(|&k| k == 0) {
        return Err(Error::Format(format!("{} has no class for vertex {v}", path.display())).into());
    }
    Ok(truth)
}

pub fn solve(a: SolveArgs) -> Result<Outcome> {
    let kind: MethodKind = a.solver.parse()?;
    let (spec, problem) = load_problem(&a.problem)?;
    let method = match kind {
        MethodKind::Ssm => {
            let mut o = spec.ssm.unwrap_or_default();
            o.tol_grad = a.tol.unwrap_or(o.tol_grad);
            o.max_outer = a.max_iter.unwrap_or(o.max_outer);
            Method::Ssm(o)
        }
        MethodKind::Rgd | MethodKind::Pg => {
            let mut o = spec.baseline.unwrap_or_default();
            o.tol_grad = a.tol.unwrap_or(o.tol_grad);
            o.max_iter = a.max_iter.unwrap_or(o.max_iter);
            if kind == MethodKind::Rgd {
                Method::Rgd(o)
            } else {
                Method::Pg(o)
            }
        }
    };
    let report = method.solve(&problem)?;
    emit(a.out.as_deref(), &report.to_json()?)?;
    if a.out.is_some() {
        println!(
            "{kind}: f = {:.12}, residual = {:.2e}, {} iterations, qualified = {}, global = {}",
            report.objective(),
            report.residual(),
            report.outer_iterations(),
            report.certificate.qualified,
            report.certificate.global
        );
    }
    Ok(outcome(kind.name(), report.termination))
}

pub fn classify(a: ClassifyArgs) -> Result<Outcome> {
    let kind: MethodKind = a.solver.parse()?;
    let mut points = read_points(&a.points)?;
    let total = points.nrows();
    let n = a.limit.map_or(total, |l| l.min(total));
    if n < total {
        points = points.rows(0, n).into_owned();
    }
    let mut truth = a.truth.as_deref().map(|p| read_truth(p, total)).transpose()?;
    if let Some(t) = truth.as_mut() {
        t.truncate(n);
    }
    let given = a.labels.as_deref().map(read_labels).transpose()?;
    let classes = match a.classes {
        Some(c) => c,
        None => given
            .iter()
            .flatten()
            .map(|l| l.1)
            .chain(truth.iter().flatten().copied())
            .max()
            .context("cannot infer the number of classes")?,
    };
    let labeled = match (given, a.sample_labels, &truth) {
        (Some(l), _, _) => l,
        (None, Some(m), Some(t)) => sample_labels_from_truth(a.seed, t, classes, m)?,
        _ => bail!(Error::Invalid("need --labels or --sample-labels with --truth".into())),
    };
    info!("{n} points, {} labeled, {classes} classes, k = {}", labeled.len(), a.k);
    let method = kind.with_tol(a.tol);
    let res = classify_points(&points, a.k, &labeled, classes, a.cardinality.as_deref(), &method, truth.as_deref())?;
    emit(a.out.as_deref(), &res.to_json()?)?;
    if let Some(p) = &a.labels_out {
        let rows: Vec<(usize, usize)> = res.labels.iter().copied().enumerate().collect();
        write_labels(p, &rows)?;
    }
    if a.out.is_some() {
        let acc = res.accuracy.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        println!("{kind}: f = {:.10}, accuracy = {acc}, {} iterations", res.objective, res.outer_iterations);
    }
    Ok(outcome(kind.name(), res.termination))
}

pub fn circles(a: CirclesArgs) -> Result<Outcome> {
    let data = gen_circles(a.seed, a.n_per, &a.radii, a.noise)?;
    write_dense_csv(&a.out, &data.points)?;
    if let Some(p) = &a.truth {
        let rows: Vec<(usize, usize)> = data.labels.iter().copied().enumerate().collect();
        write_labels(p, &rows)?;
    }
    if let Some(p) = &a.labeled {
        write_labels(p, &sample_labels_from_truth(a.seed, &data.labels, a.radii.len(), a.labels_per_class)?)?;
    }
    Ok(Outcome::Done)
}

pub fn eigs(a: EigsArgs) -> Result<Outcome> {
    let op = read_matrix_market(&a.matrix)?;
    let n = op.dim();
    let ones = a.deflate_constant.then(|| DMatrix::from_element(n, 1, 1.0 / (n as f64).sqrt()));
    let opts = LobpcgOptions {
        tol: a.tol,
        ..LobpcgOptions::default()
    };
    let pairs = smallest_eigenpairs(&op, a.k, ones.as_ref(), &opts)?;
    let doc = serde_json::json!({
        "n": n,
        "k": a.k,
        "deflated_constant": a.deflate_constant,
        "values": pairs.values.as_slice(),
    });
    emit(a.out.as_deref(), &serde_json::to_string_pretty(&doc)?)?;
    if let Some(p) = &a.vectors_out {
        write_dense_csv(p, &pairs.vectors)?;
    }
    Ok(Outcome::Done)
}

/// Baselines routinely stop at their iteration cap on the bench suites, so
/// non-convergence is recorded in the rows rather than in the exit code.
pub fn bench(a: BenchArgs) -> Result<Outcome> {
    let cfg = BenchConfig {
        suites: a.suite.iter().map(|s| s.parse::<Suite>()).collect::<Result<_, _>>()?,
        solvers: a.solvers.iter().map(|s| s.parse::<MethodKind>()).collect::<Result<_, _>>()?,
        seeds: a.seeds,
        seed0: a.seed,
        tol: a.tol,
    };
    let out = run_bench(&cfg)?;
    write_rows_csv(&a.out, &out.rows)?;
    if let Some(p) = &a.emit_plot_data {
        write_plot_csv(p, &out.plot)?;
    }
    println!("{} rows written to {}", out.rows.len(), a.out.display());
    Ok(Outcome::Done)
}
