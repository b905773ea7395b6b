mod common;

use nalgebra::{DMatrix, DVector};
use nsnewton::alm::{cnal_solve_lasso, kkt_residual_lasso, CnalParams};
use nsnewton::bench::{fista_lasso, load_problem, run_single, ProblemKind, ProblemSpec, SolverKind};
use nsnewton::data::{build_lasso, build_svm_dual, gen_random_slbqp_with};
use nsnewton::fbe::{cnfb_default_params, cnfb_solve};
use nsnewton::matrix::DataMatrix;

#[test]
fn cnfb_matches_exhaustive_active_set_search() {
    for seed in 0..12u64 {
        let n = 8;
        let rank = if seed % 2 == 0 { n } else { 3 };
        let mut r = common::rng(seed + 40);
        let set = common::random_geometry(n, &mut r);
        let inst = gen_random_slbqp_with(n, rank, seed, set).unwrap();
        let q = inst.q.to_dense();
        let reference = common::brute_force_slbqp(&q, &inst.c_lin, &inst.constraint);
        let prob = inst.to_problem().unwrap();
        let out = cnfb_solve(&prob, &DVector::zeros(n), &cnfb_default_params()).unwrap();
        assert!(out.report.converged(), "seed {seed}: {:?}", out.report.status);
        let (f_ref, f) = (inst.objective(&reference), inst.objective(&out.primal));
        assert!((f - f_ref).abs() <= 1e-9 * (1.0 + f_ref.abs()), "seed {seed}: {f} vs {f_ref}");
        if rank == n {
            assert!((&out.primal - &reference).amax() <= 1e-7, "seed {seed}");
        }
    }
}

#[test]
fn four_point_svm_dual_has_the_known_solution() {
    let points = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 3.0, 1.0, -1.0, 0.0, -2.0, -3.0]);
    let labels = DVector::from_column_slice(&[1.0, 1.0, -1.0, -1.0]);
    let inst = build_svm_dual(&DataMatrix::Dense(points.clone()), &labels, 10.0).unwrap();
    let prob = inst.to_problem().unwrap();
    let out = cnfb_solve(&prob, &DVector::zeros(4), &cnfb_default_params()).unwrap();
    assert!(out.report.converged());
    let lambda = &out.primal;
    let expected = DVector::from_column_slice(&[0.5, 0.0, 0.5, 0.0]);
    assert!((lambda - &expected).amax() <= 1e-8, "{lambda}");
    let w = points.transpose() * lambda.component_mul(&labels);
    assert!((w - DVector::from_column_slice(&[1.0, 0.0])).amax() <= 1e-8);
}

#[test]
fn two_point_svm_dual_splits_the_weight() {
    let points = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
    let labels = DVector::from_column_slice(&[1.0, -1.0]);
    let inst = build_svm_dual(&DataMatrix::Dense(points.clone()), &labels, 1.0).unwrap();
    let out = cnfb_solve(&inst.to_problem().unwrap(), &DVector::zeros(2), &cnfb_default_params()).unwrap();
    assert!((&out.primal - DVector::from_column_slice(&[0.5, 0.5])).amax() <= 1e-9);
    let w = points.transpose() * out.primal.component_mul(&labels);
    assert!((w - DVector::from_column_slice(&[1.0, 0.0])).amax() <= 1e-9);
}

/// Orthogonal design: the Lasso solution is the soft-thresholded `A^T b`.
#[test]
fn orthogonal_lasso_is_soft_thresholding() {
    let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.5]);
    let b = DVector::from_column_slice(&[3.0, -0.2, 4.0]);
    let inst = build_lasso(DataMatrix::Dense(a.clone()), b.clone(), 0.25).unwrap();
    let atb = a.transpose() * &b;
    let exact = DVector::from_fn(3, |i, _| {
        let d = a[(i, i)] * a[(i, i)];
        atb[i].signum() * (atb[i].abs() - inst.lambda).max(0.0) / d
    });
    let rep = cnal_solve_lasso(&inst, &CnalParams { tol: 1e-10, ..CnalParams::default() }).unwrap();
    assert!((rep.x() - &exact).amax() <= 1e-8, "{} vs {exact}", rep.x());
    let fista = fista_lasso(&inst, &DVector::zeros(3), 1e-12, 100_000);
    assert!(fista.converged);
    assert!((&fista.x - &exact).amax() <= 1e-8);
    assert!(kkt_residual_lasso(&inst.a, &inst.b, inst.lambda, &exact) <= 1e-15);
}

#[test]
fn cnal_and_fista_reach_the_same_objective() {
    let spec = ProblemSpec {
        kind: ProblemKind::Lasso,
        n: Some(300),
        m: Some(60),
        rank_frac: None,
        seed: Some(21),
        file: None,
        lambda_c: Some(0.05),
        c_reg: None,
    };
    let problem = load_problem(&spec).unwrap();
    let cnal = run_single("lasso", &problem, SolverKind::Cnal, 1e-9, 200).unwrap();
    let fista = run_single("lasso", &problem, SolverKind::Fista, 1e-9, 200_000).unwrap();
    assert!(cnal.row.converged() && fista.row.converged());
    let gap = (cnal.row.objective - fista.row.objective).abs();
    assert!(gap <= 1e-8 * (1.0 + cnal.row.objective.abs()), "gap {gap}");
}

#[test]
fn benchmark_runs_are_deterministic() {
    let spec = ProblemSpec {
        kind: ProblemKind::Slbqp,
        n: Some(80),
        m: None,
        rank_frac: Some(0.5),
        seed: Some(3),
        file: None,
        lambda_c: None,
        c_reg: None,
    };
    let problem = load_problem(&spec).unwrap();
    for solver in [SolverKind::Cnfb, SolverKind::Fista, SolverKind::Grnmw, SolverKind::Grnmwm] {
        let a = run_single(&spec.id(), &problem, solver, 1e-6, 500).unwrap();
        let b = run_single(&spec.id(), &problem, solver, 1e-6, 500).unwrap();
        assert_eq!(a.x, b.x, "{}", solver.name());
        assert_eq!(a.row.iters, b.row.iters);
        assert_eq!(a.row.residual, b.row.residual);
        assert_eq!(a.row.status, b.row.status);
    }
}
