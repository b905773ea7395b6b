//! Randomized invariant suites behind the `check` command.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::alm::{lasso_problem, psi_eval};
use crate::data::{builtin_c11_suite, gen_random_lasso, gen_random_slbqp};
use crate::fbe::{cnfb_direction, fbe_eval, slbqp_newton_system, BlockSolveOptions};
use crate::linalg::fd_gradient_check;
use crate::linesearch::{check_wolfe, wolfe_search, RaySlice, WolfeParams};
use crate::newton::RegMatrix;
use crate::prox::{
    coderivative_membership_check, default_active_tol, project_box_hyperplane, projection_selection,
    prox_conjugate, soft_threshold_coderivative_contains, soft_threshold_selection, BoxHyperplane, L1Norm,
    LInfBallIndicator, Proxable,
};

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub samples: usize,
    /// Largest observed violation measure.
    pub worst: f64,
}

struct Tally {
    name: &'static str,
    samples: usize,
    worst: f64,
    failures: usize,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self { name, samples: 0, worst: 0.0, failures: 0 }
    }

    fn record(&mut self, violation: f64, ok: bool) {
        self.samples += 1;
        self.worst = self.worst.max(violation);
        if !ok {
            self.failures += 1;
        }
    }

    fn finish(self) -> CheckOutcome {
        CheckOutcome { name: self.name.into(), passed: self.failures == 0 && self.samples > 0, samples: self.samples, worst: self.worst }
    }
}

fn gauss(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Random box-hyperplane geometry with mixed signs in `a` and finite bounds.
pub fn random_geometry(n: usize, rng: &mut ChaCha8Rng) -> BoxHyperplane {
    let a = DVector::from_fn(n, |_, _| {
        let s: f64 = rng.random_range(0.5..2.0);
        if rng.random_bool(0.3) { -s } else { s }
    });
    let lower = DVector::from_fn(n, |_, _| -rng.random_range(0.2..1.5));
    let upper = DVector::from_fn(n, |_, _| rng.random_range(0.2..1.5));
    let (lo, hi) = (a.zip_zip_map(&lower, &upper, |ai, l, u| (ai * l).min(ai * u)).sum(),
                    a.zip_zip_map(&lower, &upper, |ai, l, u| (ai * l).max(ai * u)).sum());
    let b = lo + (hi - lo) * rng.random_range(0.2..0.8);
    BoxHyperplane::new(a, b, lower, upper).expect("feasible by construction")
}

/// Conjugate side of the Moreau decomposition for the l1 norm against the
/// box projection.
pub fn check_moreau_decomposition(samples: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::new("moreau-decomposition");
    for _ in 0..samples {
        let n = rng.random_range(1..8);
        let lambda = rng.random_range(0.1..3.0);
        let sigma = rng.random_range(0.1..5.0);
        let u = gauss(n, &mut rng) * 3.0;
        let z = prox_conjugate(&L1Norm { lambda }, sigma, &u).expect("valid sigma");
        let z_ref = LInfBallIndicator { radius: lambda }.prox(1.0, &u).expect("valid radius");
        let err = (&z - z_ref).amax();
        t.record(err, err <= 1e-12 * (1.0 + u.amax()));
    }
    t.finish()
}

pub fn check_projection(samples: usize, seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut firm = Tally::new("projection-firm-nonexpansive");
    let mut opt = Tally::new("projection-optimality");
    let mut alg = Tally::new("selection-projector-algebra");
    for _ in 0..samples {
        let n = rng.random_range(2..10);
        let set = random_geometry(n, &mut rng);
        let u = gauss(n, &mut rng) * 2.0;
        let w = gauss(n, &mut rng) * 2.0;
        let (pu, _) = project_box_hyperplane(&set, &u, 1e-12).expect("feasible");
        let (pw, _) = project_box_hyperplane(&set, &w, 1e-12).expect("feasible");
        let diff = &pu - &pw;
        let gap = diff.norm_squared() - diff.dot(&(&u - &w));
        firm.record(gap.max(0.0), gap <= 1e-10);

        let (y, _) = project_box_hyperplane(&set, &gauss(n, &mut rng), 1e-12).expect("feasible");
        let ip = (&u - &pu).dot(&(&y - &pu));
        opt.record(ip.max(0.0), ip <= 1e-9 * (1.0 + u.norm()));

        let p = projection_selection(&set, &pu, default_active_tol(&u)).to_dense();
        let defect = (&p - p.transpose()).amax().max((&p * &p - &p).amax());
        alg.record(defect, defect <= 1e-12);
    }
    vec![firm.finish(), opt.finish(), alg.finish()]
}

pub fn check_coderivative_selections(samples: usize, seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut proj = Tally::new("projection-selection-membership");
    let mut soft = Tally::new("soft-threshold-selection-membership");
    for _ in 0..samples {
        let n = rng.random_range(2..9);
        let set = random_geometry(n, &mut rng);
        let u = gauss(n, &mut rng) * 2.0;
        let d = gauss(n, &mut rng);
        let (x, _) = project_box_hyperplane(&set, &u, 1e-12).expect("feasible");
        let w = -projection_selection(&set, &x, default_active_tol(&u)).apply(&d);
        let ok = coderivative_membership_check(&set, &u, &d, &w, 1e-9).unwrap_or(false);
        proj.record(if ok { 0.0 } else { 1.0 }, ok);

        let kappa = rng.random_range(0.1..2.0);
        let mut u = gauss(n, &mut rng) * 2.0;
        // Land some coordinates exactly on the kinks.
        for i in 0..n {
            if rng.random_bool(0.25) {
                u[i] = if rng.random_bool(0.5) { kappa } else { -kappa };
            }
        }
        let pd = soft_threshold_selection(&u, kappa, 0.0).apply(&d);
        let ok = soft_threshold_coderivative_contains(&u, &d, &pd, kappa, 1e-14);
        soft.record(if ok { 0.0 } else { 1.0 }, ok);
    }
    vec![proj.finish(), soft.finish()]
}

/// Gradient checks at points whose active pattern is stable under `h`.
pub fn check_fbe(samples: usize, seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fd = Tally::new("fbe-gradient-fd");
    let mut minor = Tally::new("fbe-minorization");
    let mut newton = Tally::new("newton-system-equivalence");
    let mut taken = 0;
    while taken < samples {
        let n = rng.random_range(3..12);
        let r = rng.random_range(1..=n);
        let inst = gen_random_slbqp(n, r, rng.random()).expect("valid sizes");
        let prob = inst.to_problem().expect("valid instance");
        let x = gauss(n, &mut rng) * 0.7;
        let Ok(point) = fbe_eval(&prob, &x) else { continue };
        if !active_set_stable(&inst.constraint, &point.u, 1e-4) {
            continue;
        }
        taken += 1;
        let err = fd_gradient_check(
            |y| fbe_eval(&prob, y).map_or(f64::NAN, |p| p.fbe_value),
            |y| fbe_eval(&prob, y).map_or_else(|_| DVector::from_element(n, f64::NAN), |p| p.fbe_grad),
            &x,
            1e-6,
        );
        fd.record(err, err <= 1e-5);

        let (feas, _) = project_box_hyperplane(&inst.constraint, &x, 1e-12).expect("feasible");
        let fp = fbe_eval(&prob, &feas).expect("valid point");
        let phi = prob.objective(&feas);
        let gap = fp.fbe_value - phi;
        minor.record(gap.max(0.0), gap <= 1e-10 * (1.0 + phi.abs()));

        let mu = rng.random_range(1e-6..1e-1);
        let dense = cnfb_direction(&prob, &point, mu, RegMatrix::Native).expect("spd system").d;
        let blocked = slbqp_newton_system(&prob, &point, mu, &BlockSolveOptions::default()).expect("spd system");
        let rel = (&blocked - &dense).norm() / (1.0 + dense.norm());
        newton.record(rel, rel <= 1e-9);
    }
    vec![fd.finish(), minor.finish(), newton.finish()]
}

/// True when `Proj(u)` keeps every coordinate at least `margin` away from a
/// change of activity.
pub fn active_set_stable(set: &BoxHyperplane, u: &DVector<f64>, margin: f64) -> bool {
    let Ok((_, t)) = project_box_hyperplane(set, u, 1e-13) else { return false };
    (0..set.dim()).all(|i| {
        let s = u[i] - t * set.a[i];
        (s - set.lower[i]).abs() > margin && (s - set.upper[i]).abs() > margin
    })
}

pub fn check_psi(samples: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::new("psi-gradient-fd");
    let mut taken = 0;
    while taken < samples {
        let (m, n) = (rng.random_range(2..8), rng.random_range(3..15));
        let inst = gen_random_lasso(m, n, rng.random_range(0.05..0.5), rng.random()).expect("valid sizes");
        let prob = lasso_problem(&inst).expect("valid instance");
        let x = gauss(n, &mut rng);
        let sigma = rng.random_range(0.1..5.0);
        let y = gauss(m, &mut rng);
        let point = psi_eval(&prob, &x, sigma, &y).expect("valid point");
        let kappa = sigma * inst.lambda;
        if point.u.iter().any(|ui| (ui.abs() - kappa).abs() < 1e-4) {
            continue;
        }
        taken += 1;
        let err = fd_gradient_check(
            |w| psi_eval(&prob, &x, sigma, w).map_or(f64::NAN, |p| p.value),
            |w| psi_eval(&prob, &x, sigma, w).map_or_else(|_| DVector::from_element(m, f64::NAN), |p| p.grad),
            &y,
            1e-6,
        );
        t.record(err, err <= 1e-5);
    }
    t.finish()
}

/// Linesearch soundness along random descent rays of the built-in suite.
pub fn check_wolfe_suite(samples: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::new("wolfe-soundness");
    let suite = builtin_c11_suite();
    let params = WolfeParams::default();
    for k in 0..samples {
        let f = &suite[k % suite.len()];
        let o = &f.oracle;
        let n = o.dim();
        let x = gauss(n, &mut rng) * rng.random_range(0.1..4.0);
        let (phi0, g) = o.value_gradient(&x);
        let d = if rng.random_bool(0.5) { -&g } else { -&g * rng.random_range(0.01..10.0) + gauss(n, &mut rng) * 0.1 };
        let slope0 = g.dot(&d);
        if !(slope0 < 0.0) {
            t.samples += 1;
            continue;
        }
        let mut slice = RaySlice::new(phi0, slope0, |tau: f64| {
            let (v, gt) = o.value_gradient(&(&x + &d * tau));
            (v, gt.dot(&d))
        });
        match wolfe_search(&mut slice, &params) {
            Ok(step) => {
                let c = check_wolfe(phi0, slope0, step.tau, step.phi_tau, step.slope_tau, &params);
                let ok = c.sufficient_decrease && (c.curvature || !f.convex);
                t.record(if ok { 0.0 } else { 1.0 }, ok);
            }
            Err(_) => t.record(1.0, !f.convex),
        }
    }
    t.finish()
}

/// Runs every suite with `samples` draws each.
pub fn run_all(samples: usize, seed: u64) -> Vec<CheckOutcome> {
    let mut out = vec![check_moreau_decomposition(samples, seed)];
    out.extend(check_projection(samples, seed.wrapping_add(1)));
    out.extend(check_coderivative_selections(samples, seed.wrapping_add(2)));
    out.extend(check_fbe(samples, seed.wrapping_add(3)));
    out.push(check_psi(samples, seed.wrapping_add(4)));
    out.push(check_wolfe_suite(samples, seed.wrapping_add(5)));
    out
}
