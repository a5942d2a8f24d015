//! Semi-supervised classification on graphs.
//!
//! The labeled vertices are moved to the front, the Laplacian is split into
//! labeled/unlabeled blocks, and the unlabeled part of the relaxed labeling
//! `X` is written as `X_u = Z + Z₀` with `𝟙ᵀZ = 0` and `ZᵀZ = C`. After
//! dropping the null space of `C` the problem becomes a standard Stiefel
//! problem in `Z̃ = Z Q̃ C̃^{-1/2}`.

mod graph;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

pub use graph::{conductance, knn_gaussian_graph, laplacian, WeightedGraph, DUPLICATE_TOL};

use crate::error::{Error, Result};
use crate::linalg::{dense_sym_eig, CsrMatrix, LowRankTerm, SparseBlock, SparseSymOperator, SymOperator};
use crate::method::Method;
use crate::model::{QualifiedCertificate, QuadraticProblem};
use crate::report::{SolveReport, Termination};
use crate::scalar::Scalar;

/// Eigenvalues of `C` at or below this fraction of the largest are dropped.
pub const RANK_REDUCE_TOL: f64 = 1e-10;

/// `C = Q̃ C̃ Q̃ᵀ` restricted to the positive eigenvalues.
#[derive(Debug, Clone)]
pub struct RankReduction<T: Scalar> {
    /// `r×r′` with orthonormal columns.
    pub q: DMatrix<T>,
    /// Positive diagonal of `C̃`.
    pub c_tilde: DVector<T>,
}

impl<T: Scalar> RankReduction<T> {
    pub fn rank(&self) -> usize {
        self.c_tilde.len()
    }

    pub fn c_matrix(&self) -> DMatrix<T> {
        DMatrix::from_diagonal(&self.c_tilde)
    }

    pub fn sqrt_c(&self) -> DMatrix<T> {
        DMatrix::from_diagonal(&self.c_tilde.map(|v| v.sqrt()))
    }

    pub fn reconstruct(&self) -> DMatrix<T> {
        &self.q * self.c_matrix() * self.q.transpose()
    }
}

/// Splits off the null space of a positive semidefinite `C`.
///
/// A diagonal `C` keeps its coordinate axes (in order); otherwise the kept
/// eigenvectors appear in ascending eigenvalue order.
pub fn rank_reduce<T: Scalar>(c: &DMatrix<T>) -> Result<RankReduction<T>> {
    let r = c.nrows();
    if !c.is_square() || r == 0 {
        return Err(Error::Dimension(format!("C must be square and nonempty, got {}x{}", c.nrows(), c.ncols())));
    }
    let diagonal = (0..r).all(|i| (0..r).all(|j| i == j || c[(i, j)] == T::zero()));
    let (values, vectors) = if diagonal {
        (c.diagonal(), DMatrix::identity(r, r))
    } else {
        let e = dense_sym_eig(c)?;
        (e.values, e.vectors)
    };
    let vmax = values.iter().fold(T::zero(), |m, &v| m.max(v));
    let vmin = values.iter().fold(T::zero(), |m, &v| m.min(v));
    if vmin < -T::lit(1e-10) * vmax.max(T::one()) {
        return Err(Error::Invalid(format!("C is not positive semidefinite (eigenvalue {vmin:e})")));
    }
    let keep: Vec<usize> = (0..r).filter(|&i| vmax > T::zero() && values[i] > T::lit(RANK_REDUCE_TOL) * vmax).collect();
    if keep.is_empty() {
        return Err(Error::Degenerate("C has rank 0".into()));
    }
    Ok(RankReduction {
        q: DMatrix::from_fn(r, keep.len(), |i, j| vectors[(i, keep[j])]),
        c_tilde: DVector::from_fn(keep.len(), |j, _| values[keep[j]]),
    })
}

/// `m′/r` vertices per class, with the remainder assigned by largest
/// remainder (lowest class index first on ties).
pub fn balanced_cardinalities(total: usize, classes: usize) -> Vec<usize> {
    if classes == 0 {
        return Vec::new();
    }
    let base = total / classes;
    let extra = total % classes;
    (0..classes).map(|i| base + usize::from(i < extra)).collect()
}

/// The partially labeled problem after the block reduction.
///
/// Class labels are 1-based throughout. Row `i` of `x_l` belongs to
/// `labeled[i]`, row `i` of every unlabeled block to `unlabeled[i]`.
#[derive(Debug, Clone)]
pub struct SemiSupInstance<T: Scalar> {
    /// Laplacian in the caller's vertex order.
    pub laplacian: CsrMatrix<T>,
    pub labeled: Vec<usize>,
    pub labeled_classes: Vec<usize>,
    pub unlabeled: Vec<usize>,
    /// New position → original vertex: `labeled` followed by `unlabeled`.
    pub permutation: Vec<usize>,
    pub l_ll: SparseBlock<T>,
    pub l_lu: SparseBlock<T>,
    pub l_ul: SparseBlock<T>,
    pub l_uu: SparseSymOperator<T>,
    /// One-hot `m×r`.
    pub x_l: DMatrix<T>,
    pub cardinality: Vec<usize>,
    pub c_u: Vec<usize>,
    /// `n⁻¹ 𝟙 c_uᵀ`.
    pub z0: DMatrix<T>,
    /// `P L_uu P` as `L_uu` plus a rank-two correction.
    pub a: SparseSymOperator<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
    pub reduction: RankReduction<T>,
}

/// Builds the reduced instance from the full Laplacian, the labeled vertices
/// `(vertex, class)` and the class sizes `c`.
pub fn assemble<T: Scalar>(l: &SparseSymOperator<T>, labeled: &[(usize, usize)], c: &[usize]) -> Result<SemiSupInstance<T>> {
    if !l.corrections().is_empty() {
        return Err(Error::Invalid("the Laplacian must be purely sparse".into()));
    }
    let total = l.dim();
    let r = c.len();
    if r == 0 {
        return Err(Error::Cardinality("no classes".into()));
    }
    let mut lab: Vec<(usize, usize)> = labeled.to_vec();
    lab.sort_unstable();
    for w in lab.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::Invalid(format!("vertex {} is labeled twice", w[0].0)));
        }
    }
    if let Some(&(v, k)) = lab.iter().find(|&&(v, k)| v >= total || k == 0 || k > r) {
        return Err(Error::Invalid(format!("label ({v}, {k}) outside {total} vertices and classes 1..={r}")));
    }
    let m = lab.len();
    let n = total - m;
    if n < r {
        return Err(Error::Cardinality(format!("{n} unlabeled vertices for {r} classes")));
    }
    if c.iter().sum::<usize>() != total {
        return Err(Error::Cardinality(format!(
            "class sizes sum to {}, graph has {total} vertices",
            c.iter().sum::<usize>()
        )));
    }
    let mut counts = vec![0usize; r];
    for &(_, k) in &lab {
        counts[k - 1] += 1;
    }
    let c_u: Vec<usize> = c
        .iter()
        .zip(&counts)
        .enumerate()
        .map(|(k, (&ci, &li))| {
            ci.checked_sub(li)
                .ok_or_else(|| Error::Cardinality(format!("class {} has {li} labels but size {ci}", k + 1)))
        })
        .collect::<Result<_>>()?;

    let labeled_v: Vec<usize> = lab.iter().map(|p| p.0).collect();
    let mut is_labeled = vec![false; total];
    for &v in &labeled_v {
        is_labeled[v] = true;
    }
    let unlabeled: Vec<usize> = (0..total).filter(|&v| !is_labeled[v]).collect();
    let permutation: Vec<usize> = labeled_v.iter().chain(&unlabeled).copied().collect();

    let sp = l.sparse_part();
    let l_ll = sp.submatrix(&labeled_v, &labeled_v);
    let l_lu = sp.submatrix(&labeled_v, &unlabeled);
    let l_ul = sp.submatrix(&unlabeled, &labeled_v);
    let uu = sp.submatrix(&unlabeled, &unlabeled);
    let l_uu = SparseSymOperator::from_triplets(n, uu.entries)?;

    let x_l = DMatrix::from_fn(m, r, |i, j| if lab[i].1 == j + 1 { T::one() } else { T::zero() });
    let nf = T::from_count(n);
    let cu_t = DVector::from_fn(r, |j, _| T::from_count(c_u[j]));
    let z0 = DMatrix::from_fn(n, r, |_, j| cu_t[j] / nf);

    let e = DMatrix::from_element(n, 1, T::one() / nf.sqrt());
    let g = l_uu.apply(&e);
    let etg = (e.transpose() * &g)[(0, 0)];
    let mut basis = DMatrix::zeros(n, 2);
    basis.set_column(0, &e.column(0));
    basis.set_column(1, &g.column(0));
    let core = DMatrix::from_row_slice(2, 2, &[etg, -T::one(), -T::one(), T::zero()]);
    let a = l_uu.with_correction(LowRankTerm::new(basis, core)?)?;

    let mut b = l_uu.apply(&z0) + l_ul.mul_block(&x_l);
    let mean = e.transpose() * &b;
    b -= &e * mean;

    let mut cm = DMatrix::from_fn(r, r, |i, j| {
        let d = if i == j { T::from_count(c[i] - counts[i]) } else { T::zero() };
        d - cu_t[i] * cu_t[j] / nf
    });
    cm = crate::linalg::sym(&cm);
    let reduction = rank_reduce(&cm).map_err(|e| match e {
        Error::Degenerate(_) => Error::Cardinality("the unlabeled class sizes leave nothing to solve (rank C = 0)".into()),
        other => other,
    })?;

    Ok(SemiSupInstance {
        laplacian: sp.clone(),
        labeled: labeled_v,
        labeled_classes: lab.iter().map(|p| p.1).collect(),
        unlabeled,
        permutation,
        l_ll,
        l_lu,
        l_ul,
        l_uu,
        x_l,
        cardinality: c.to_vec(),
        c_u,
        z0,
        a,
        b,
        c: cm,
        reduction,
    })
}

impl<T: Scalar> SemiSupInstance<T> {
    pub fn n_unlabeled(&self) -> usize {
        self.unlabeled.len()
    }

    pub fn classes(&self) -> usize {
        self.cardinality.len()
    }

    /// `𝟙/√n` as an `n×1` block: the constraint direction of the reduced problem.
    pub fn constraint_basis(&self) -> DMatrix<T> {
        let n = self.n_unlabeled();
        DMatrix::from_element(n, 1, T::one() / T::from_count(n).sqrt())
    }

    /// `min ½tr(Z̃ᵀAZ̃C̃) − tr(B_stdᵀZ̃)` on `St(n, r′) ∩ {𝟙ᵀZ̃ = 0}` with
    /// `B_std = −B Q̃ C̃^{1/2}`. Twice its objective plus
    /// [`energy_constant`](Self::energy_constant) is `⟨X, LX⟩`.
    pub fn standard_problem(&self) -> Result<QuadraticProblem<T>> {
        let red = rank_reduce(&self.c)?;
        let b_std = -(&self.b * &red.q * red.sqrt_c());
        QuadraticProblem::with_constraint(self.a.clone(), b_std, red.c_matrix(), self.constraint_basis())
    }

    /// `X_u = Z̃ C̃^{1/2} Q̃ᵀ + Z₀`.
    pub fn recover(&self, z_tilde: &DMatrix<T>) -> DMatrix<T> {
        let red = &self.reduction;
        z_tilde * red.sqrt_c() * red.q.transpose() + &self.z0
    }

    /// `⟨X, LX⟩` for `X = [X_l; X_u]`.
    pub fn laplacian_energy(&self, x_u: &DMatrix<T>) -> T {
        let ll = (self.x_l.transpose() * self.l_ll.mul_block(&self.x_l)).trace();
        let lu = (self.x_l.transpose() * self.l_lu.mul_block(x_u)).trace();
        let uu = (x_u.transpose() * self.l_uu.apply(x_u)).trace();
        ll + lu * T::lit(2.0) + uu
    }

    /// `⟨X, LX⟩` at `Z = 0`, i.e. the part independent of the unknowns.
    pub fn energy_constant(&self) -> T {
        self.laplacian_energy(&self.z0)
    }

    /// Labels of every vertex in the caller's order (1-based), taking the row
    /// argmax of `x_u` on the unlabeled vertices. Ties go to the lower class.
    pub fn labels_from(&self, x_u: &DMatrix<T>) -> Vec<usize> {
        let mut labels = vec![0usize; self.laplacian.dim()];
        for (&v, &k) in self.labeled.iter().zip(&self.labeled_classes) {
            labels[v] = k;
        }
        for (i, &v) in self.unlabeled.iter().enumerate() {
            let row = x_u.row(i);
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            labels[v] = best + 1;
        }
        labels
    }

    /// Unlabeled vertices whose connected component contains no label.
    pub fn unanchored(&self) -> Result<Vec<usize>> {
        let g = WeightedGraph::from_laplacian(&self.laplacian)?;
        let comp = g.components();
        let mut anchored = vec![false; comp.len()];
        for &v in &self.labeled {
            anchored[comp[v]] = true;
        }
        Ok(self.unlabeled.iter().copied().filter(|&v| !anchored[comp[v]]).collect())
    }
}

/// Outcome of [`classify`]; serializes to the JSON report.
#[derive(Debug, Clone, Serialize)]
pub struct ClassificationResult<T: Scalar> {
    /// 1-based class of every vertex, in the caller's order.
    pub labels: Vec<usize>,
    /// Vertices whose labels were predicted.
    pub unlabeled: Vec<usize>,
    /// Fraction of unlabeled vertices predicted correctly.
    pub accuracy: Option<f64>,
    /// Standard-form objective at the returned `Z̃`.
    pub objective: f64,
    /// `⟨X, LX⟩` of the relaxed labeling.
    pub laplacian_energy: f64,
    pub certificate: QualifiedCertificate,
    /// Conductance of each predicted class; `None` for an empty or full class.
    pub conductance: Vec<Option<f64>>,
    pub cardinality: Vec<usize>,
    pub rank: usize,
    pub solver: String,
    pub termination: Termination,
    pub outer_iterations: usize,
    pub wall_time_s: f64,
    /// Unlabeled vertices with no path to a labeled vertex.
    pub unanchored: Vec<usize>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub x_u: DMatrix<T>,
    #[serde(skip)]
    pub report: SolveReport<T>,
}

impl<T: Scalar> ClassificationResult<T> {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

/// Fraction of `vertices` where `predicted` and `truth` agree.
pub fn accuracy(predicted: &[usize], truth: &[usize], vertices: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} predicted labels, {} true labels",
            predicted.len(),
            truth.len()
        )));
    }
    if vertices.is_empty() {
        return Err(Error::Invalid("accuracy over an empty vertex set".into()));
    }
    let hits = vertices.iter().filter(|&&v| predicted[v] == truth[v]).count();
    Ok(hits as f64 / vertices.len() as f64)
}

/// Conductance of each class of a 1-based labeling.
pub fn class_conductances<T: Scalar>(g: &WeightedGraph<T>, labels: &[usize], classes: usize) -> Vec<Option<f64>> {
    (1..=classes)
        .map(|k| {
            let s: Vec<usize> = (0..labels.len()).filter(|&v| labels[v] == k).collect();
            conductance(g, &s).ok().map(|v| v.as_f64())
        })
        .collect()
}

/// Solves the reduced problem with `method` and recovers labels.
///
/// `truth`, when given, holds the 1-based class of every vertex and is used
/// for the accuracy on the unlabeled vertices.
pub fn classify<T: Scalar>(
    instance: &SemiSupInstance<T>,
    method: &Method,
    truth: Option<&[usize]>,
) -> Result<ClassificationResult<T>> {
    let start = Instant::now();
    let problem = instance.standard_problem()?;
    let report = method.solve(&problem)?;
    let x_u = instance.recover(&report.x);
    let labels = instance.labels_from(&x_u);
    let graph = WeightedGraph::from_laplacian(&instance.laplacian)?;
    let unanchored = instance.unanchored()?;
    let mut warnings = report.warnings.clone();
    if !unanchored.is_empty() {
        warnings.push(format!("{} unlabeled vertices are not connected to any label", unanchored.len()));
    }
    let accuracy = truth
        .map(|t| accuracy(&labels, t, &instance.unlabeled))
        .transpose()?;
    Ok(ClassificationResult {
        conductance: class_conductances(&graph, &labels, instance.classes()),
        labels,
        unlabeled: instance.unlabeled.clone(),
        accuracy,
        objective: report.objective(),
        laplacian_energy: instance.laplacian_energy(&x_u).as_f64(),
        certificate: report.certificate.clone(),
        cardinality: instance.cardinality.clone(),
        rank: instance.reduction.rank(),
        solver: report.solver.clone(),
        termination: report.termination,
        outer_iterations: report.outer_iterations(),
        wall_time_s: start.elapsed().as_secs_f64(),
        unanchored,
        warnings,
        x_u,
        report,
    })
}

/// Graph construction, assembly and classification in one call.
///
/// `cardinality` defaults to [`balanced_cardinalities`].
pub fn classify_points<T: Scalar>(
    points: &DMatrix<T>,
    k: usize,
    labeled: &[(usize, usize)],
    classes: usize,
    cardinality: Option<&[usize]>,
    method: &Method,
    truth: Option<&[usize]>,
) -> Result<ClassificationResult<T>> {
    let g = knn_gaussian_graph(points, k)?;
    let l = laplacian(&g);
    let c = match cardinality {
        Some(c) if c.len() != classes => {
            return Err(Error::Cardinality(format!("{} class sizes for {classes} classes", c.len())))
        }
        Some(c) => c.to_vec(),
        None => balanced_cardinalities(g.n(), classes),
    };
    let inst = assemble(&l, labeled, &c)?;
    classify(&inst, method, truth)
}
