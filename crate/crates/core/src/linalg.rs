//! Dense and matrix-free linear algebra kernels shared by every solver.
//!
//! Everything here is deterministic: identical inputs (and seeds, where a
//! random start vector is involved) produce bitwise-identical outputs.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive-definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("conjugate gradient breakdown at iteration {iteration}")]
    Stagnation { iteration: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A linear map on `R^n` given only through its action.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;
    /// Contract flag: callers may rely on `<Lu, v> = <u, Lv>` when set.
    fn is_symmetric(&self) -> bool {
        true
    }
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.ncols()
    }
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self * x
    }
    fn is_symmetric(&self) -> bool {
        self.is_square() && symmetry_defect(self) <= 1e-12 * (1.0 + self.amax())
    }
}

/// Closure-backed operator.
pub struct FnOperator<F> {
    dim: usize,
    symmetric: bool,
    f: F,
}

impl<F: Fn(&DVector<f64>) -> DVector<f64>> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self {
            dim,
            symmetric: true,
            f,
        }
    }

    pub fn nonsymmetric(dim: usize, f: F) -> Self {
        Self {
            dim,
            symmetric: false,
            f,
        }
    }
}

impl<F: Fn(&DVector<f64>) -> DVector<f64>> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.f)(x)
    }
    fn is_symmetric(&self) -> bool {
        self.symmetric
    }
}

/// Diagonal operator `diag(d)`.
#[derive(Debug, Clone)]
pub struct Diagonal(pub DVector<f64>);

impl LinearOperator for Diagonal {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.0.component_mul(x)
    }
}

/// Largest entry of `|M - M^T|`.
pub fn symmetry_defect(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows().min(m.ncols());
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Cholesky factor `L` of a symmetric matrix, failing on any pivot below
/// `1e-14 * (trace / n)`.
pub fn cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            got: m.ncols(),
        });
    }
    let scale = (0..n).map(|i| m[(i, i)].abs()).sum::<f64>() / (n.max(1) as f64);
    let floor = 1e-14 * scale.max(f64::MIN_POSITIVE);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut diag = m[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > floor) {
            return Err(LinalgError::NotPositiveDefinite {
                index: j,
                pivot: diag,
            });
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        // Column-oriented update keeps the inner loop contiguous in memory.
        for i in (j + 1)..n {
            l[(i, j)] = m[(i, j)];
        }
        for k in 0..j {
            let ljk = l[(j, k)];
            if ljk == 0.0 {
                continue;
            }
            for i in (j + 1)..n {
                l[(i, j)] -= l[(i, k)] * ljk;
            }
        }
        for i in (j + 1)..n {
            l[(i, j)] /= ljj;
        }
    }
    Ok(l)
}

/// Solves `L L^T x = rhs` given the Cholesky factor.
pub fn cholesky_solve(l: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut y = rhs.clone();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Solves `M x = rhs` for symmetric positive-definite `M`.
///
/// One step of iterative refinement is applied after the factor solve.
pub fn spd_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
    if rhs.len() != m.nrows() {
        return Err(LinalgError::DimensionMismatch {
            expected: m.nrows(),
            got: rhs.len(),
        });
    }
    let l = cholesky(m)?;
    let mut x = cholesky_solve(&l, rhs);
    let r = rhs - m * &x;
    x += cholesky_solve(&l, &r);
    Ok(x)
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
}

/// Unpreconditioned conjugate gradient for an SPD operator, started at zero.
///
/// Stops when `||L x - rhs|| <= rel_tol * ||rhs||` or after `max_iter`
/// iterations; the outcome reports which.
pub fn cg_solve<L: LinearOperator + ?Sized>(
    op: &L,
    rhs: &DVector<f64>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<CgOutcome, LinalgError> {
    let n = op.dim();
    if rhs.len() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            got: rhs.len(),
        });
    }
    let mut x = DVector::zeros(n);
    let rhs_norm = rhs.norm();
    let target = rel_tol * rhs_norm;
    if rhs_norm == 0.0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            residual_norm: 0.0,
            converged: true,
        });
    }
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    for it in 0..max_iter {
        let ap = op.apply(&p);
        let pap = p.dot(&ap);
        if !(pap > 0.0) || !pap.is_finite() {
            return Err(LinalgError::Stagnation { iteration: it });
        }
        let alpha = rr / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rr_new = r.dot(&r);
        if rr_new.sqrt() <= target {
            return Ok(CgOutcome {
                x,
                iterations: it + 1,
                residual_norm: rr_new.sqrt(),
                converged: true,
            });
        }
        let beta = rr_new / rr;
        rr = rr_new;
        p *= beta;
        p += &r;
    }
    Ok(CgOutcome {
        x,
        iterations: max_iter,
        residual_norm: rr.sqrt(),
        converged: false,
    })
}

/// Power-iteration estimate of the largest eigenvalue of a symmetric PSD
/// operator. Runs at most `iters` steps and stops early once the Rayleigh
/// quotient changes by less than `1e-10` relatively.
pub fn power_lambda_max<L: LinearOperator + ?Sized>(op: &L, iters: usize, seed: u64) -> f64 {
    let n = op.dim();
    if n == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    let nv = v.norm();
    v /= nv;
    let mut lambda = 0.0;
    for _ in 0..iters.max(1) {
        let w = op.apply(&v);
        let next = v.dot(&w);
        let wn = w.norm();
        if wn == 0.0 {
            return 0.0;
        }
        v = w / wn;
        let done = (next - lambda).abs() <= 1e-10 * next.abs();
        lambda = next;
        if done {
            break;
        }
    }
    lambda.max(0.0)
}

/// Central-difference gradient check; returns
/// `max_i |fd_i - grad_i| / (1 + |grad_i|)`.
pub fn fd_gradient_check<V, G>(value_fn: V, grad_fn: G, x: &DVector<f64>, h: f64) -> f64
where
    V: Fn(&DVector<f64>) -> f64,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    let g = grad_fn(x);
    let mut probe = x.clone();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let xi = x[i];
        probe[i] = xi + h;
        let fp = value_fn(&probe);
        probe[i] = xi - h;
        let fm = value_fn(&probe);
        probe[i] = xi;
        let fd = (fp - fm) / (2.0 * h);
        worst = worst.max((fd - g[i]).abs() / (1.0 + g[i].abs()));
    }
    worst
}
