//! `ssm`: solve Stiefel-constrained quadratics, classify graph data, and
//! benchmark solvers from the command line.
//!
//! Exit codes: 0 success, 1 usage, 2 input format, 3 solver did not converge
//! (outputs are still written).

mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Outcome;

#[derive(Parser, Debug)]
#[command(name = "ssm", version, about = "Sequential subspace methods on the Stiefel manifold")]
struct Cli {
    /// Repeat for more log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the problem described by a TOML file and write the report JSON.
    Solve(SolveArgs),
    /// Label the vertices of a k-NN graph built from points.
    Classify(ClassifyArgs),
    /// Write a noisy concentric-circles dataset.
    Circles(CirclesArgs),
    /// Smallest eigenpairs of a Matrix Market operator.
    Eigs(EigsArgs),
    /// Run every suite × solver × seed and write one CSV row per run.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long)]
    problem: std::path::PathBuf,
    #[arg(long, default_value = "ssm")]
    solver: String,
    /// Overrides the gradient tolerance from the problem file.
    #[arg(long)]
    tol: Option<f64>,
    /// Overrides the iteration cap (outer steps for ssm).
    #[arg(long)]
    max_iter: Option<usize>,
    /// Report JSON; stdout when omitted.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    /// Points as rows: CSV, `.bin`, or an IDX image file.
    #[arg(long)]
    points: std::path::PathBuf,
    /// `vertex,class` CSV of labeled vertices (classes from 1).
    #[arg(long, required_unless_present = "sample_labels")]
    labels: Option<std::path::PathBuf>,
    /// True class of every vertex: `vertex,class` CSV or IDX labels (digit d becomes class d+1).
    #[arg(long)]
    truth: Option<std::path::PathBuf>,
    /// Draw this many labeled vertices per class from `--truth` instead of `--labels`.
    #[arg(long, requires = "truth", conflicts_with = "labels")]
    sample_labels: Option<usize>,
    /// Use only the first N points (and truth entries).
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Number of classes; defaults to the largest class seen.
    #[arg(long)]
    classes: Option<usize>,
    /// Comma-separated class sizes; balanced when omitted.
    #[arg(long, value_delimiter = ',')]
    cardinality: Option<Vec<usize>>,
    #[arg(long, default_value = "ssm")]
    solver: String,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Result JSON; stdout when omitted.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    /// Also write the predicted `vertex,class` CSV here.
    #[arg(long)]
    labels_out: Option<std::path::PathBuf>,
}

#[derive(Args, Debug)]
struct CirclesArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    n_per: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    radii: Vec<f64>,
    #[arg(long, default_value_t = 0.2)]
    noise: f64,
    /// Points CSV (`x,y`).
    #[arg(long)]
    out: std::path::PathBuf,
    /// True classes as `vertex,class` CSV.
    #[arg(long)]
    truth: Option<std::path::PathBuf>,
    /// Sampled labeled vertices as `vertex,class` CSV.
    #[arg(long)]
    labeled: Option<std::path::PathBuf>,
    #[arg(long, default_value_t = 5)]
    labels_per_class: usize,
}

#[derive(Args, Debug)]
struct EigsArgs {
    #[arg(long)]
    matrix: std::path::PathBuf,
    #[arg(long, default_value_t = 4)]
    k: usize,
    /// Work orthogonally to the constant vector (graph Laplacians).
    #[arg(long)]
    deflate_constant: bool,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// JSON with the eigenvalues; stdout when omitted.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    /// Eigenvectors as CSV columns.
    #[arg(long)]
    vectors_out: Option<std::path::PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "circles")]
    suite: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "ssm,rgd,pg")]
    solvers: Vec<String>,
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    /// First seed; runs use `seed, seed + 1, …`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long)]
    out: std::path::PathBuf,
    /// Objective-versus-iteration series for every run.
    #[arg(long)]
    emit_plot_data: Option<std::path::PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = commands::configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }

    let result = match cli.command {
        Command::Solve(a) => commands::solve(a),
        Command::Classify(a) => commands::classify(a),
        Command::Circles(a) => commands::circles(a),
        Command::Eigs(a) => commands::eigs(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged(msg)) => {
            eprintln!("warning: {msg}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
