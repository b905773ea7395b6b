mod common;

use nalgebra::{DMatrix, DVector};
use nsnewton::data::{builtin_c11_suite, StrongQuadratic};
use nsnewton::linesearch::{check_wolfe, wolfe_search, Acceptance, RaySlice, WolfeParams};
use nsnewton::newton::{grnm_w_solve, grnm_wm_solve, GrnmParams, SolveReport, WmParams};
use proptest::prelude::*;

/// `phi(t) = a t^4 + b t^2 + s t` with `s < 0`; bounded below since `a > 0`.
fn quartic(a: f64, b: f64, s: f64) -> impl FnMut(f64) -> (f64, f64) {
    move |t| (a * t.powi(4) + b * t * t + s * t, 4.0 * a * t.powi(3) + 2.0 * b * t + s)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn returned_steps_satisfy_what_they_claim(a in 0.001..3.0f64, b in -3.0..5.0f64, s in -5.0..-0.01f64, offset in -10.0..10.0f64) {
        let params = WolfeParams::default();
        let mut eval = quartic(a, b, s);
        let phi0 = offset;
        let mut slice = RaySlice::new(phi0, s, |t| {
            let (f, g) = eval(t);
            (f + offset, g)
        });
        let step = wolfe_search(&mut slice, &params).unwrap();
        prop_assert!(step.tau > 0.0 && step.tau <= params.tau_max);
        let (f, g) = quartic(a, b, s)(step.tau);
        prop_assert_eq!(step.phi_tau, f + offset);
        prop_assert_eq!(step.slope_tau, g);
        let check = check_wolfe(phi0, s, step.tau, step.phi_tau, step.slope_tau, &params);
        match step.acceptance {
            Acceptance::Wolfe => prop_assert!(check.both()),
            Acceptance::SufficientDecreaseOnly => prop_assert!(check.sufficient_decrease),
            Acceptance::ApproximateWolfe => {
                let noise = params.value_noise * (1.0 + phi0.abs());
                prop_assert!((step.phi_tau - phi0).abs() <= noise);
            }
        }
    }

    #[test]
    fn unit_step_is_returned_when_acceptable(a in 0.0..0.05f64, t_star in 0.6..1.8f64, s in -5.0..-0.01f64) {
        let params = WolfeParams::default();
        let b = -s / (2.0 * t_star);
        let (f1, g1) = quartic(a, b, s)(1.0);
        prop_assume!(check_wolfe(0.0, s, 1.0, f1, g1, &params).both());
        let mut slice = RaySlice::new(0.0, s, quartic(a, b, s));
        let step = wolfe_search(&mut slice, &params).unwrap();
        prop_assert_eq!(step.tau, 1.0);
        prop_assert_eq!(step.n_evals, 1);
    }
}

fn spd(n: usize, seed: u64) -> StrongQuadratic {
    let mut r = common::rng(seed);
    let c = DMatrix::from_fn(n, n, |_, _| common::gauss(1, &mut r)[0]);
    StrongQuadratic { a: c.transpose() * c + DMatrix::identity(n, n) * 0.1, b: common::gauss(n, &mut r) }
}

fn accepted_pairs(rep: &SolveReport) -> impl Iterator<Item = (&nsnewton::newton::IterateRecord, f64)> + '_ {
    rep.iterates.windows(2).filter(|w| w[0].tau.is_some()).map(|w| (&w[0], w[1].value))
}

#[test]
fn convex_runs_descend_and_satisfy_the_direction_inequality() {
    for f in builtin_c11_suite().into_iter().filter(|f| f.convex) {
        let n = f.oracle.dim();
        for seed in 0..10 {
            let x0 = common::gauss(n, &mut common::rng(seed)) * 2.0;
            let rep = grnm_w_solve(f.oracle.as_ref(), &x0, &GrnmParams::default()).unwrap();
            assert!(rep.converged(), "{} seed {seed}: {:?}", f.name, rep.status);
            for (rec, next) in accepted_pairs(&rep) {
                let noise = 1e-13 * (1.0 + rec.value.abs());
                assert!(next <= rec.value + noise, "{}: value rose {} -> {next}", f.name, rec.value);
                let resolvable = 1e-4 * rec.descent.unwrap() * rec.tau.unwrap() > 1e-15 * (1.0 + rec.value.abs());
                if resolvable && rec.acceptance != Some(Acceptance::ApproximateWolfe) {
                    assert!(next < rec.value, "{}: no strict decrease at k={}", f.name, rec.k);
                }
                let (descent, reg) = (rec.descent.unwrap(), rec.reg_term.unwrap());
                assert!(reg > 0.0);
                assert!(descent >= reg * (1.0 - 1e-9), "{}: <-g,d> {descent} < mu||d||^2 {reg}", f.name);
            }
            if let Some(min) = f.min_value {
                assert!(rep.final_value - min <= 1e-8 * (1.0 + min.abs()), "{}: {}", f.name, rep.final_value);
            }
        }
    }
}

#[test]
fn modified_method_steps_meet_both_direction_conditions() {
    let params = WmParams::default();
    for f in builtin_c11_suite() {
        let n = f.oracle.dim();
        for seed in 0..10 {
            let x0 = common::gauss(n, &mut common::rng(100 + seed)) * 2.0;
            let rep = grnm_wm_solve(f.oracle.as_ref(), &x0, &params).unwrap();
            assert!(rep.converged(), "{} seed {seed}: {:?}", f.name, rep.status);
            for (rec, next) in accepted_pairs(&rep) {
                assert!(next <= rec.value + 1e-13 * (1.0 + rec.value.abs()));
                let d = rec.d_norm.unwrap();
                assert!(rec.descent.unwrap() >= params.m * d * d * (1.0 - 1e-12), "{}", f.name);
                assert!(rec.grad_norm <= params.big_m * d, "{}", f.name);
                assert!(rec.escalation.unwrap() <= params.max_escalation);
            }
        }
    }
}

#[test]
fn strongly_convex_quadratics_take_unit_steps() {
    for seed in 0..20 {
        let n = 2 + seed as usize % 12;
        let q = spd(n, seed);
        let x0 = common::gauss(n, &mut common::rng(seed + 1000)) * 5.0;
        let rep = grnm_w_solve(&q, &x0, &GrnmParams::default()).unwrap();
        assert!(rep.converged());
        let taus: Vec<f64> = rep.iterates.iter().filter_map(|r| r.tau).collect();
        assert!(taus.iter().all(|&t| t == 1.0), "seed {seed}: {taus:?}");
        let exact = q.a.clone().lu().solve(&q.b).unwrap();
        assert!((&rep.final_x - exact).norm() <= 1e-8 * (1.0 + x0.norm()));
    }
}

#[test]
fn iteration_counts_respect_the_budget() {
    let q = spd(8, 3);
    let x0 = DVector::from_element(8, 10.0);
    let params = GrnmParams { max_iter: 2, grad_tol: 1e-300, ..GrnmParams::default() };
    let rep = grnm_w_solve(&q, &x0, &params).unwrap();
    assert!(rep.iterations() <= 2);
    assert_eq!(rep.iterates.len(), rep.iterations() + 1);
}
