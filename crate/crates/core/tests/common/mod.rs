#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use nsnewton::prox::BoxHyperplane;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(n: usize, r: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| r.sample(StandardNormal))
}

/// Exhaustive active-set solve of `min 0.5 x^T Q x + c^T x` over the
/// box-hyperplane set. Every coordinate is assigned to its lower bound, its
/// upper bound or the free set; each equality-constrained subproblem is
/// solved through its KKT system and the best feasible candidate is kept.
pub fn brute_force_slbqp(q: &DMatrix<f64>, c: &DVector<f64>, set: &BoxHyperplane) -> DVector<f64> {
    let n = c.len();
    assert!(n <= 10, "enumeration is exponential in n");
    let total = 3usize.pow(n as u32);
    let mut best: Option<(f64, DVector<f64>)> = None;
    let objective = |x: &DVector<f64>| 0.5 * x.dot(&(q * x)) + c.dot(x);
    for code in 0..total {
        let mut x = DVector::zeros(n);
        let mut free = Vec::new();
        let mut rest = code;
        for i in 0..n {
            match rest % 3 {
                0 => x[i] = set.lower[i],
                1 => x[i] = set.upper[i],
                _ => free.push(i),
            }
            rest /= 3;
        }
        let residual_b = set.b - set.a.dot(&x);
        if free.is_empty() {
            if residual_b.abs() > 1e-10 {
                continue;
            }
        } else {
            let k = free.len();
            let mut kkt = DMatrix::zeros(k + 1, k + 1);
            let mut rhs = DVector::zeros(k + 1);
            let qx = q * &x;
            for (p, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    kkt[(p, s)] = q[(i, j)];
                }
                kkt[(p, k)] = set.a[i];
                kkt[(k, p)] = set.a[i];
                rhs[p] = -c[i] - qx[i];
            }
            rhs[k] = residual_b;
            let Some(sol) = kkt.lu().solve(&rhs) else { continue };
            for (p, &i) in free.iter().enumerate() {
                x[i] = sol[p];
            }
        }
        if !set.contains(&x, 1e-10) {
            continue;
        }
        let f = objective(&x);
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, x));
        }
    }
    best.expect("feasible set is nonempty").1
}

/// Box-hyperplane set with mixed-sign normal and finite bounds; `b` lies
/// strictly inside the attainable range.
pub fn random_geometry(n: usize, r: &mut ChaCha8Rng) -> BoxHyperplane {
    nsnewton::checks::random_geometry(n, r)
}
