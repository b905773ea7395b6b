mod common;

use nalgebra::{DMatrix, DVector};
use nsnewton::checks::active_set_stable;
use nsnewton::data::{gen_random_slbqp, gen_random_slbqp_with, SlbqpInstance};
use nsnewton::fbe::{
    cnfb_default_params, cnfb_direction, cnfb_solve, fbe_eval, slbqp_newton_system, BlockSolveOptions,
    QuadraticComposite, QuadraticOperator,
};
use nsnewton::linalg::fd_gradient_check;
use nsnewton::matrix::DataMatrix;
use nsnewton::newton::{classify_convergence_rate, GrnmParams, RateClass, RegMatrix};
use nsnewton::prox::{project_box_hyperplane, L1Norm};
use proptest::prelude::*;

fn instance(seed: u64, n: usize, rank: usize) -> SlbqpInstance {
    let mut r = common::rng(seed ^ 0x5eed);
    let set = common::random_geometry(n, &mut r);
    gen_random_slbqp_with(n, rank.clamp(1, n), seed, set).unwrap()
}

fn lambda_min(q: &QuadraticOperator) -> f64 {
    q.to_dense().symmetric_eigen().eigenvalues.min().max(0.0)
}

fn l1_problem(seed: u64, n: usize, lambda: f64) -> QuadraticComposite<L1Norm> {
    let mut r = common::rng(seed);
    let c = DMatrix::from_fn(n, n, |_, _| common::gauss(1, &mut r)[0]);
    let b = common::gauss(n, &mut r);
    QuadraticComposite::new(QuadraticOperator::gram(DataMatrix::Dense(c)), b, L1Norm { lambda }, None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn envelope_minorizes_objective_on_feasible_points(seed in any::<u64>(), n in 2usize..12, rank in 1usize..12) {
        let inst = instance(seed, n, rank);
        let prob = inst.to_problem().unwrap();
        let mut r = common::rng(seed.wrapping_add(1));
        let (x, _) = project_box_hyperplane(&inst.constraint, &(common::gauss(n, &mut r) * 2.0), 1e-12).unwrap();
        let phi = prob.objective(&x);
        let env = fbe_eval(&prob, &x).unwrap().fbe_value;
        prop_assert!(env <= phi + 1e-10 * (1.0 + phi.abs()), "fbe {env} above objective {phi}");
    }

    #[test]
    fn envelope_minorizes_l1_composite(seed in any::<u64>(), n in 1usize..10, lambda in 0.01..2.0f64) {
        let prob = l1_problem(seed, n, lambda);
        let x = common::gauss(n, &mut common::rng(seed.wrapping_add(7)));
        let phi = prob.objective(&x);
        prop_assert!(fbe_eval(&prob, &x).unwrap().fbe_value <= phi + 1e-10 * (1.0 + phi.abs()));
    }

    /// `gamma^-1 lambda_min(R) ||x - v|| <= ||grad|| <= gamma^-1 ||x - v||`, so the
    /// gradient vanishes exactly at fixed points of the forward-backward map.
    #[test]
    fn gradient_vanishes_exactly_at_fixed_points(seed in any::<u64>(), n in 2usize..12, rank in 1usize..12) {
        let inst = instance(seed, n, rank);
        let prob = inst.to_problem().unwrap();
        let gamma = prob.gamma();
        let r_min = 1.0 - gamma * prob.lambda_max();
        prop_assert!(r_min > 0.0);
        let x = common::gauss(n, &mut common::rng(seed.wrapping_add(2))) * 1.5;
        let p = fbe_eval(&prob, &x).unwrap();
        let res = (&p.x - &p.v).norm();
        let g = p.fbe_grad.norm();
        prop_assert!(g <= res / gamma * (1.0 + 1e-10) + 1e-14);
        prop_assert!(g >= r_min * res / gamma * (1.0 - 1e-8) - 1e-14);
    }

    #[test]
    fn gradient_is_lipschitz(seed in any::<u64>(), n in 2usize..12, rank in 1usize..12, spread in 0.01..3.0f64) {
        let inst = instance(seed, n, rank);
        let prob = inst.to_problem().unwrap();
        let gamma = prob.gamma();
        let lip = 2.0 * (1.0 - gamma * lambda_min(&inst.q)) / gamma;
        let mut r = common::rng(seed.wrapping_add(3));
        let x = common::gauss(n, &mut r);
        let y = &x + common::gauss(n, &mut r) * spread;
        let gx = fbe_eval(&prob, &x).unwrap().fbe_grad;
        let gy = fbe_eval(&prob, &y).unwrap().fbe_grad;
        prop_assert!((gx - gy).norm() <= lip * (&x - &y).norm() * (1.0 + 1e-9));
    }

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>(), n in 2usize..7, rank in 1usize..7) {
        let inst = instance(seed, n, rank);
        let prob = inst.to_problem().unwrap();
        let x = common::gauss(n, &mut common::rng(seed.wrapping_add(4))) * 0.5;
        let p = fbe_eval(&prob, &x).unwrap();
        prop_assume!(active_set_stable(&inst.constraint, &p.u, 1e-4));
        let err = fd_gradient_check(
            |y| fbe_eval(&prob, y).unwrap().fbe_value,
            |y| fbe_eval(&prob, y).unwrap().fbe_grad,
            &x,
            1e-6,
        );
        prop_assert!(err <= 1e-6, "relative error {err}");
    }

    #[test]
    fn blocked_and_dense_newton_systems_agree(seed in any::<u64>(), n in 2usize..15, rank in 1usize..15, mu in 1e-6..1.0f64) {
        let inst = instance(seed, n, rank);
        let prob = inst.to_problem().unwrap();
        let x = common::gauss(n, &mut common::rng(seed.wrapping_add(5)));
        let p = fbe_eval(&prob, &x).unwrap();
        let dense = cnfb_direction(&prob, &p, mu, RegMatrix::Native).unwrap().d;
        let blocked = slbqp_newton_system(&prob, &p, mu, &BlockSolveOptions::default()).unwrap();
        prop_assert!((&blocked - &dense).norm() <= 1e-9 * (1.0 + dense.norm()));
    }
}

#[test]
fn solutions_are_fixed_points_of_the_forward_backward_map() {
    for seed in 0..10 {
        let inst = gen_random_slbqp(40, 10 + seed as usize, seed).unwrap();
        let prob = inst.to_problem().unwrap();
        let out = cnfb_solve(&prob, &DVector::zeros(40), &cnfb_default_params()).unwrap();
        assert!(out.report.converged(), "seed {seed}: {:?}", out.report.status);
        let p = fbe_eval(&prob, &out.report.final_x).unwrap();
        assert!((&p.x - &p.v).norm() <= prob.gamma() * 1e-11 / (1.0 - prob.gamma() * prob.lambda_max()) * 10.0);
        assert!(inst.constraint.contains(&out.primal, 1e-9));
    }
}

/// Weak tail form on full-rank instances: the last gradient ratio is small
/// and the final steps are unit steps.
#[test]
fn late_iterations_contract_with_unit_steps() {
    for seed in 200..210 {
        let n = 30 + 10 * (seed as usize % 5);
        let inst = gen_random_slbqp(n, n, seed).unwrap();
        let prob = inst.to_problem().unwrap();
        let params = GrnmParams { grad_tol: 1e-10, ..cnfb_default_params() };
        let rep = cnfb_solve(&prob, &DVector::zeros(n), &params).unwrap().report;
        assert!(rep.converged(), "seed {seed}");
        let trace = rep.grad_norm_trace();
        let k = trace.len();
        assert!(k >= 3);
        let last_ratio = trace[k - 1] / trace[k - 2];
        assert!(last_ratio < 0.1, "seed {seed}: final ratio {last_ratio}");
        let taus: Vec<f64> = rep.iterates.iter().filter_map(|r| r.tau).collect();
        assert!(taus.iter().rev().take(2).all(|&t| t == 1.0), "seed {seed}: taus {taus:?}");
        let class = classify_convergence_rate(&trace).unwrap();
        assert_ne!(class, RateClass::Sublinear, "seed {seed}");
    }
}
