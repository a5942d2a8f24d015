use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;

use super::*;
use crate::instances::{diagonal_example, e1, random_problem, random_problem_identity_c};
use crate::linalg::{dense_sym_eig, SparseSymOperator};
use crate::manifold::feasibility_error;
use crate::model::{lower_bound, surrogate};

fn diag3(rows: &[[f64; 2]; 3]) -> DMatrix<f64> {
    DMatrix::from_fn(3, 2, |i, j| rows[i][j])
}

#[test]
fn initialize_e1() {
    let p = e1::<f64>();
    let (x, lam) = initialize(&p);
    assert_abs_diff_eq!(x.matrix().clone(), DMatrix::identity(3, 2), epsilon = 1e-14);
    assert_abs_diff_eq!(lam, DMatrix::identity(2, 2) * 1.5, epsilon = 1e-14);
}

#[test]
fn initialize_zero_b_gives_ground_space() {
    let a = SparseSymOperator::diagonal_matrix(&[1.0, 2.0, 4.0]).unwrap();
    let p = QuadraticProblem::new(a, DMatrix::zeros(3, 2), DMatrix::identity(2, 2)).unwrap();
    let (x, lam) = initialize(&p);
    assert_abs_diff_eq!(x.matrix().clone(), p.ground().vg.clone(), epsilon = 1e-14);
    assert_abs_diff_eq!(lam, DMatrix::identity(2, 2) * 2.0, epsilon = 1e-14);
}

#[test]
fn initialize_rank_deficient_completes_smallest_index() {
    // V_gᵀB = [[1, 0], [0, 0]]: the second column is completed from e₂.
    let a = SparseSymOperator::diagonal_matrix(&[1.0, 2.0, 4.0]).unwrap();
    let b = diag3(&[[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]]);
    let p = QuadraticProblem::new(a, b, DMatrix::identity(2, 2)).unwrap();
    let (x, _) = initialize(&p);
    assert!(feasibility_error(x.matrix()) < 1e-14);
    assert_abs_diff_eq!(x.matrix()[(0, 0)], 1.0, epsilon = 1e-14);
    assert_abs_diff_eq!(x.matrix()[(1, 1)].abs(), 1.0, epsilon = 1e-14);
}

#[test]
fn initialize_multiplier_below_ground_level() {
    for seed in 0..20 {
        let p = random_problem::<f64>(12, 3, 1.0, seed).unwrap();
        let (x, lam) = initialize(&p);
        assert!(x.feasibility_error() < 1e-12);
        let gmax = p.c_factors().whitened_eig(&lam).values[2];
        assert!(gmax <= p.ground().dr() + 1e-10, "seed {seed}: {gmax}");
    }
}

#[test]
fn sqp_direction_vanishes_at_surrogate_critical_point() {
    let p = e1::<f64>();
    let x = DMatrix::identity(3, 2);
    let sur = surrogate(&p, &x);
    let lam = sur.multiplier(&x);
    let d = sqp_direction(&p, &sur, &x, &lam, 1e-12, 50).unwrap();
    assert_eq!(d.z.norm(), 0.0);
}

#[test]
fn sqp_direction_e1_residual_and_orthogonality() {
    let p = e1::<f64>();
    let x = diag3(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
    let sur = surrogate(&p, &x);
    let sigma = sigma_nondegeneracy(p.ground(), &sur.b_k, p.c_factors());
    let (lam, _) = safeguard_or_floor(&sur.multiplier(&x), p.c_factors(), p.ground().dr(), sigma);
    let d = sqp_direction(&p, &sur, &x, &lam, 1e-12, 100).unwrap();
    let vg = &p.ground().vg;
    assert!((vg.transpose() * &d.z).norm() <= 1e-10);
    let proj = |m: &DMatrix<f64>| m - vg * (vg.transpose() * m);
    let e = -sur.euclidean_grad(&x) + &x * &lam;
    let lhs = proj(&(p.lifted().to_dense() * &d.z * p.c() - &d.z * &lam));
    assert!((lhs - proj(&e)).norm() <= 1e-8);
}

#[test]
fn sqp_direction_degenerate_instance_has_no_negative_curvature() {
    // V_gᵀB = 0, so σ = 0 and the floor is used.
    let a = SparseSymOperator::diagonal_matrix(&[1.0, 2.0, 4.0, 5.0]).unwrap();
    let b = DMatrix::from_fn(4, 2, |i, j| if i == j + 2 { 0.3 } else { 0.0 });
    let p = QuadraticProblem::new(a, b, DMatrix::identity(2, 2)).unwrap();
    let x = DMatrix::from_fn(4, 2, |i, j| if i == j + 1 { 1.0 } else { 0.0 });
    let sur = surrogate(&p, &x);
    let sigma = sigma_nondegeneracy(p.ground(), &sur.b_k, p.c_factors());
    let (lam, floored) = safeguard_or_floor(&sur.multiplier(&x), p.c_factors(), p.ground().dr(), sigma);
    assert!(floored || sigma > 0.0);
    assert!(sqp_direction(&p, &sur, &x, &lam, 1e-12, 100).is_ok());
}

#[test]
fn build_subspace_prunes_dependent_columns() {
    let p = e1::<f64>();
    let x = DMatrix::identity(3, 2);
    let grad = p.lifted().to_dense() * &x - p.b();
    let v = build_subspace(&p.ground().vg, &x, &grad, Some(&DMatrix::zeros(3, 2)), None);
    assert_eq!(v.ncols(), 2);
}

#[test]
fn build_subspace_is_orthonormal_and_capped() {
    let p = e1::<f64>();
    let x = diag3(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
    let grad = p.a().to_dense() * &x * p.c() - p.b();
    let v = build_subspace(&p.ground().vg, &x, &grad, None, None);
    assert!(v.ncols() <= 8);
    assert!((v.transpose() * &v - DMatrix::identity(v.ncols(), v.ncols())).norm() <= 1e-12);
}

#[test]
fn build_subspace_fills_small_space() {
    let p = random_problem::<f64>(8, 2, 1.0, 3).unwrap();
    let x = crate::manifold::random_point::<f64>(8, 2, 9).unwrap().into_matrix();
    let grad = p.a().to_dense() * &x * p.c() - p.b();
    let z = crate::manifold::random_point::<f64>(8, 2, 10).unwrap().into_matrix();
    let v = build_subspace(&p.ground().vg, &x, &grad, Some(&z), None);
    assert_eq!(v.ncols(), 8);
    // V_g and X lie in the span.
    assert!((&v * (v.transpose() * &x) - &x).norm() < 1e-12);
}

#[test]
fn reduce_identity_and_ground_eigen() {
    let p = e1::<f64>();
    let x = diag3(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
    let sur = surrogate(&p, &x);
    let (ak, bk) = reduce(&sur, &DMatrix::identity(3, 3));
    assert_abs_diff_eq!(ak, p.lifted().to_dense(), epsilon = 1e-15);
    assert_abs_diff_eq!(bk, sur.b_k.clone(), epsilon = 1e-15);

    let grad = p.a().to_dense() * &x - p.b();
    let v = build_subspace(&p.ground().vg, &x, &grad, None, None);
    let (ak, _) = reduce(&sur, &v);
    let vgt = v.transpose() * &p.ground().vg;
    assert!((&ak * &vgt - &vgt * p.ground().dr()).norm() <= 1e-10);
}

#[test]
fn reduce_is_symmetric_on_random_instances() {
    for seed in 0..5 {
        let p = random_problem::<f64>(20, 3, 1.0, seed).unwrap();
        let (x, _) = initialize(&p);
        let sur = surrogate(&p, x.matrix());
        let grad = p.a().to_dense() * x.matrix() * p.c() - p.b();
        let v = build_subspace(&p.ground().vg, x.matrix(), &grad, None, None);
        let (ak, _) = reduce(&sur, &v);
        assert!((&ak - ak.transpose()).norm() <= 1e-12);
    }
}

#[test]
fn full_space_subproblem_recovers_e1_minimizer() {
    let p = e1::<f64>();
    let x = diag3(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
    let sur = surrogate(&p, &x);
    let (ak, bk) = reduce(&sur, &DMatrix::identity(3, 3));
    let red = ReducedProblem {
        a: &ak,
        b: &bk,
        c: p.c_factors(),
        vg: &p.ground().vg,
        dr: p.ground().dr(),
    };
    let lam = sur.multiplier(&x);
    let res = subproblem_solve(&red, &x, &lam, &SsmOptions::default());
    let x_new = res.y;
    assert!((p.objective(&StiefelPoint::new(x_new.clone()).unwrap()) - 0.5).abs() < 1e-10);
    assert!((x_new - DMatrix::identity(3, 2)).norm() < 1e-6);
}

#[test]
fn e1_converges_to_global_minimizer() {
    let p = e1::<f64>();
    let rep = ssm_solve(&p, &SsmOptions::default()).unwrap();
    assert_eq!(rep.termination, Termination::Converged);
    assert!((rep.objective() - 0.5).abs() <= 1e-8);
    assert!(rep.residual() <= 1e-8);
    assert!(rep.certificate.qualified);
    assert_abs_diff_eq!(
        rep.certificate.lambda_matrix(),
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 1.5])),
        epsilon = 1e-8
    );
    assert!(rep.outer_iterations() <= 5, "{} outer iterations", rep.outer_iterations());
}

#[test]
fn aligned_identity_c_instance_hits_lower_bound() {
    // B's left singular vectors lie in span(V_g) = span(e₁, e₂).
    let a = SparseSymOperator::diagonal_matrix(&[1.5, 1.5, 3.0, 4.0]).unwrap();
    let b = DMatrix::from_row_slice(4, 2, &[0.8, 0.3, -0.2, 0.6, 0.0, 0.0, 0.0, 0.0]);
    let p = QuadraticProblem::new(a, b.clone(), DMatrix::identity(2, 2)).unwrap();
    let rep = ssm_solve(&p, &SsmOptions::default()).unwrap();
    let polar = polar_project(&b).unwrap().into_matrix();
    assert!((&rep.x - &polar).norm() < 1e-8);
    let lifted = p.to_lifted().unwrap();
    assert!((lifted.objective(&StiefelPoint::new(rep.x.clone()).unwrap()) - lower_bound::<f64>(&p)).abs() < 1e-10);
}

#[test]
fn random_runs_are_monotone_feasible_and_qualified() {
    for seed in 0..10 {
        let p = random_problem::<f64>(30, 3, 1.0, seed).unwrap();
        let rep = ssm_solve(&p, &SsmOptions::default()).unwrap();
        assert_eq!(rep.termination, Termination::Converged, "seed {seed}: {:?}", rep.warnings);
        assert!(feasibility_error(&rep.x) < 1e-10);
        for w in rep.iterations.windows(2) {
            assert!(w[1].f <= w[0].f + 1e-12 * w[0].f.abs().max(1.0));
        }
        for s in &rep.sandwich {
            assert!(s.violation() <= 1e-12, "seed {seed}: {s:?}");
        }
        let cert = &rep.certificate;
        assert!(cert.qualified, "seed {seed}: gamma {:?} dr {}", cert.gamma, cert.dr);
        assert!(cert.gamma_max() <= cert.dr + 1e-8);
    }
}

#[test]
fn multiplier_drift_shrinks() {
    let p = random_problem_identity_c::<f64>(40, 2, 1.0, 7).unwrap();
    let rep = ssm_solve(&p, &SsmOptions::default()).unwrap();
    let s = &rep.sandwich;
    assert!(!s.is_empty());
    let last = s.last().unwrap();
    assert!(last.multiplier_drift <= 1e-6 || last.step_norm > 1e-3, "{last:?}");
}

#[test]
fn subspace_step_escapes_non_qualified_stationary_point() {
    let a = SparseSymOperator::diagonal_matrix(&[1.0, 2.0, 4.0, 6.0]).unwrap();
    let b = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 0.0, 0.5, 0.3, 0.0, 0.0, 0.0]);
    let p = QuadraticProblem::new(a, b, DMatrix::identity(2, 2)).unwrap();
    let xbar = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    let cert = p.qualified_certificate(&StiefelPoint::new(xbar.clone()).unwrap(), 1e-12);
    assert!(cert.residual < 1e-14 && cert.gamma_max() > cert.dr);

    let sur = surrogate(&p, &xbar);
    let lam = sur.multiplier(&xbar);
    let sigma = sigma_nondegeneracy(p.ground(), &sur.b_k, p.c_factors());
    let (lam_safe, _) = safeguard_or_floor(&lam, p.c_factors(), p.ground().dr(), sigma);
    let z = sqp_direction(&p, &sur, &xbar, &lam_safe, 1e-12, 100).ok().map(|d| d.z);
    let grad = p.a().to_dense() * &xbar - p.b();
    let v = build_subspace(&p.ground().vg, &xbar, &grad, z.as_ref(), None);
    let (ak, bk) = reduce(&sur, &v);
    let vgt = v.transpose() * &p.ground().vg;
    let red = ReducedProblem {
        a: &ak,
        b: &bk,
        c: p.c_factors(),
        vg: &vgt,
        dr: p.ground().dr(),
    };
    let res = subproblem_solve(&red, &(v.transpose() * &xbar), &lam_safe, &SsmOptions::default());
    let x_next = &v * &res.y;
    assert!(sur.objective(&x_next) < sur.objective(&xbar) - 1e-10);
}

#[test]
fn single_column_matches_dense_trust_region() {
    // r = 1, C = 1: minimize ½xᵀAx − bᵀx on the sphere. The global minimizer
    // has (A − λI)x = b with λ ≤ d₁; check via the secular equation by bisection.
    for seed in 0..10 {
        let p = random_problem_identity_c::<f64>(25, 1, 1.0, 100 + seed).unwrap();
        let rep = ssm_solve(&p, &SsmOptions::default()).unwrap();
        let a = p.a().to_dense();
        let eig = dense_sym_eig(&a).unwrap();
        let bt = eig.vectors.transpose() * p.b();
        let norm_at = |lam: f64| (0..25).map(|i| (bt[i] / (eig.values[i] - lam)).powi(2)).sum::<f64>().sqrt();
        let (mut lo, mut hi) = (eig.values[0] - p.b().norm() - 1.0, eig.values[0] - 1e-15);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if norm_at(mid) > 1.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let lam = 0.5 * (lo + hi);
        let x = DMatrix::from_fn(25, 1, |i, _| bt[i] / (eig.values[i] - lam));
        let x = &eig.vectors * x;
        let f_oracle = 0.5 * (x.transpose() * &a * &x)[(0, 0)] - x.dot(p.b());
        assert!((rep.objective() - f_oracle).abs() <= 1e-8, "seed {seed}");
    }
}

#[test]
fn degenerate_diagonal_instance_still_terminates() {
    // V_gᵀB = 0: σ = 0, the floor drives the safeguard.
    let p = diagonal_example::<f64>(&[1.0, 2.0, 4.0], &[0.0, 0.0]).unwrap();
    let rep = ssm_solve(&p, &SsmOptions::default()).unwrap();
    assert!(rep.certificate.qualified);
    assert!((rep.objective() - 1.5).abs() < 1e-10);
}

#[test]
fn single_precision_runs() {
    let p = e1::<f32>();
    let opts = SsmOptions {
        tol_grad: 1e-4,
        cg_tol: 1e-5,
        newton_tol: 1e-5,
        cert_tol: 1e-3,
        ..SsmOptions::default()
    };
    let rep = ssm_solve(&p, &opts).unwrap();
    assert!((rep.objective() - 0.5).abs() < 1e-4);
}

#[test]
fn report_serializes() {
    let rep = ssm_solve(&e1::<f64>(), &SsmOptions::default()).unwrap();
    let v: serde_json::Value = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
    assert!(v["final"]["qualified"].as_bool().unwrap());
    assert!(v["iterations"][0]["subspace_rank"].is_number());
    assert_eq!(v["termination"], "converged");
}

#[test]
fn invalid_options_rejected() {
    let opts = SsmOptions {
        tol_grad: 0.0,
        ..SsmOptions::default()
    };
    assert!(ssm_solve(&e1::<f64>(), &opts).is_err());
}

