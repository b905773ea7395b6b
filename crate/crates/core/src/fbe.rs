//! Forward-backward envelope of `0.5 x^T A x + b^T x + g(x)` and the
//! coderivative-based Newton method (CNFB) that minimizes it.

use std::cell::RefCell;
use std::rc::Rc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{cg_solve, cholesky, cholesky_solve, power_lambda_max, LinalgError, LinearOperator};
use crate::matrix::DataMatrix;
use crate::newton::{
    grnm_w_solve, Direction, GrnmParams, NewtonError, RegMatrix, SecondOrderOracle, SolveReport,
};
use crate::prox::{default_active_tol, ProxError, Proxable, SelectionOperator};

/// Free blocks up to this size are factorized densely; larger ones use CG.
pub const DENSE_BLOCK_LIMIT: usize = 2000;

const POWER_ITERATIONS: usize = 50;
const POWER_SEED: u64 = 0x5eed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FbeError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("gamma = {gamma} violates 0 < gamma < 1/lambda_max = {limit}")]
    InvalidGamma { gamma: f64, limit: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("Newton system is singular: {0}")]
    SingularSystem(LinalgError),
    #[error(transparent)]
    Prox(#[from] ProxError),
    #[error(transparent)]
    Newton(#[from] NewtonError),
}

/// A symmetric positive-semidefinite matrix, dense or as `C^T C`.
#[derive(Debug, Clone)]
pub enum QuadraticOperator {
    Dense(DMatrix<f64>),
    /// `C^T C`; `dense` caches the product for small dimensions.
    Gram { c: DataMatrix, dense: Option<DMatrix<f64>> },
}

impl QuadraticOperator {
    pub fn gram(c: DataMatrix) -> Self {
        let dense = if c.ncols() <= DENSE_BLOCK_LIMIT {
            let cd = c.to_dense();
            Some(cd.tr_mul(&cd))
        } else {
            None
        };
        QuadraticOperator::Gram { c, dense }
    }

    pub fn dim(&self) -> usize {
        match self {
            QuadraticOperator::Dense(m) => m.nrows(),
            QuadraticOperator::Gram { c, .. } => c.ncols(),
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            QuadraticOperator::Dense(m) => m * x,
            QuadraticOperator::Gram { dense: Some(m), .. } => m * x,
            QuadraticOperator::Gram { c, dense: None } => c.tr_mul_vec(&c.mul_vec(x)),
        }
    }

    /// Principal submatrix on `idx`.
    pub fn submatrix(&self, idx: &[usize]) -> DMatrix<f64> {
        match self {
            QuadraticOperator::Dense(m) | QuadraticOperator::Gram { dense: Some(m), .. } => {
                DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
            }
            QuadraticOperator::Gram { c, dense: None } => {
                let cf = c.select_columns(idx);
                cf.tr_mul(&cf)
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            QuadraticOperator::Dense(m) | QuadraticOperator::Gram { dense: Some(m), .. } => m.clone(),
            QuadraticOperator::Gram { c, dense: None } => {
                let cd = c.to_dense();
                cd.tr_mul(&cd)
            }
        }
    }
}

impl LinearOperator for QuadraticOperator {
    fn dim(&self) -> usize {
        QuadraticOperator::dim(self)
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        QuadraticOperator::apply(self, x)
    }
}

/// `gamma = safety / lambda_max(A)`, or `cap` when `A` is numerically zero.
pub fn choose_gamma<L: LinearOperator + ?Sized>(a: &L, safety: f64, cap: f64) -> f64 {
    let lmax = power_lambda_max(a, POWER_ITERATIONS, POWER_SEED);
    if lmax <= f64::EPSILON {
        cap
    } else {
        safety / lmax
    }
}

/// `phi(x) = 0.5 x^T A x + b^T x + g(x)` together with the FBE parameter.
#[derive(Debug, Clone)]
pub struct QuadraticComposite<G> {
    a: QuadraticOperator,
    b: DVector<f64>,
    g: G,
    gamma: f64,
    lambda_max: f64,
}

impl<G: Proxable> QuadraticComposite<G> {
    /// Builds the problem; `gamma = None` picks `0.95 / lambda_max(A)`.
    pub fn new(a: QuadraticOperator, b: DVector<f64>, g: G, gamma: Option<f64>) -> Result<Self, FbeError> {
        let n = a.dim();
        if b.len() != n {
            return Err(FbeError::DimensionMismatch { expected: n, got: b.len() });
        }
        if let QuadraticOperator::Dense(m) = &a {
            if m.ncols() != n {
                return Err(FbeError::DimensionMismatch { expected: n, got: m.ncols() });
            }
        }
        let lambda_max = power_lambda_max(&a, POWER_ITERATIONS, POWER_SEED);
        let gamma = match gamma {
            None if lambda_max <= f64::EPSILON => 1.0,
            None => 0.95 / lambda_max,
            Some(gm) => {
                if !(gm > 0.0) || gm * lambda_max >= 1.0 {
                    return Err(FbeError::InvalidGamma { gamma: gm, limit: 1.0 / lambda_max });
                }
                gm
            }
        };
        Ok(Self { a, b, g, gamma, lambda_max })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &QuadraticOperator {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn g(&self) -> &G {
        &self.g
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn smooth_value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&self.a.apply(x)) + self.b.dot(x)
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        self.smooth_value(x) + self.g.value(x)
    }

    /// `R w = w - gamma A w`.
    pub fn apply_r(&self, w: &DVector<f64>) -> DVector<f64> {
        w - self.a.apply(w) * self.gamma
    }

    pub fn r_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::identity(n, n) - self.a.to_dense() * self.gamma
    }
}

/// FBE data at one point.
#[derive(Debug, Clone)]
pub struct FbePoint {
    pub x: DVector<f64>,
    /// `u = x - gamma (A x + b)`.
    pub u: DVector<f64>,
    /// `v = Prox_{gamma g}(u)`.
    pub v: DVector<f64>,
    pub fbe_value: f64,
    pub fbe_grad: DVector<f64>,
    /// Coderivative selection of the prox at `u`.
    pub selection: SelectionOperator,
}

pub fn fbe_eval<G: Proxable>(problem: &QuadraticComposite<G>, x: &DVector<f64>) -> Result<FbePoint, FbeError> {
    let n = problem.dim();
    if x.len() != n {
        return Err(FbeError::DimensionMismatch { expected: n, got: x.len() });
    }
    let gamma = problem.gamma;
    let ax = problem.a.apply(x);
    let grad_f = &ax + &problem.b;
    let u = x - &grad_f * gamma;
    let (v, selection) = problem.g.prox_with_selection(gamma, &u, default_active_tol(&u))?;
    let e = &v - x;
    let ae = problem.a.apply(&e);
    // phi(v) + (v - x)^T R (v - x) / (2 gamma), exact for quadratic f.
    let av = &ax + &ae;
    let f_v = 0.5 * v.dot(&av) + problem.b.dot(&v);
    let quad = e.norm_squared() - gamma * e.dot(&ae);
    let fbe_value = f_v + problem.g.value_at_prox(&v) + quad / (2.0 * gamma);
    let fbe_grad = -(&e / gamma) + ae;
    Ok(FbePoint { x: x.clone(), u, v, fbe_value, fbe_grad, selection })
}

/// Dense selected Hessian `gamma^-1 (R - R P R)`.
pub fn fbe_hessian_dense<G: Proxable>(problem: &QuadraticComposite<G>, point: &FbePoint) -> DMatrix<f64> {
    let r = problem.r_dense();
    let p = point.selection.to_dense();
    let rpr = &r * &p * &r;
    let mut h = (r - rpr) / problem.gamma;
    h = (&h + h.transpose()) * 0.5;
    h
}

/// Solves `(H + mu B) d = -grad` by dense assembly, where `Native` means
/// `B = gamma^-1 R`.
pub fn cnfb_direction<G: Proxable>(
    problem: &QuadraticComposite<G>,
    point: &FbePoint,
    mu: f64,
    reg: RegMatrix<'_>,
) -> Result<Direction, FbeError> {
    let n = problem.dim();
    let h = fbe_hessian_dense(problem, point);
    let b = match reg {
        RegMatrix::Identity => DMatrix::identity(n, n),
        RegMatrix::Native => problem.r_dense() / problem.gamma,
        RegMatrix::Dense(b) => b.clone(),
    };
    let m = h + &b * mu;
    let d = crate::linalg::spd_solve(&m, &(-&point.fbe_grad)).map_err(FbeError::SingularSystem)?;
    let b_norm_sq = d.dot(&(&b * &d));
    Ok(Direction { d, b_norm_sq })
}

/// How the reduced free-block system is solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockSolveOptions {
    pub dense_limit: usize,
    /// Exponent in the CG tolerance `1e-2 min(||rhs||, ||rhs||^{1+rho})`.
    pub cg_rho: f64,
    pub cg_max_iter: usize,
}

impl Default for BlockSolveOptions {
    fn default() -> Self {
        Self { dense_limit: DENSE_BLOCK_LIMIT, cg_rho: 0.5, cg_max_iter: 1000 }
    }
}

/// Solves `((1 + mu) I - P R) d = v - x` blockwise for a selection
/// `P = Sigma - s s^T`.
///
/// Coordinates outside the mask give `d_i = (v - x)_i / (1 + mu)`; the free
/// block splits into its `s` component and an SPD system in `range(P)`.
pub fn slbqp_newton_system<G: Proxable>(
    problem: &QuadraticComposite<G>,
    point: &FbePoint,
    mu: f64,
    opts: &BlockSolveOptions,
) -> Result<DVector<f64>, FbeError> {
    if !(mu > 0.0) {
        return Err(FbeError::InvalidParams(format!("mu must be > 0, got {mu}")));
    }
    let n = problem.dim();
    let gamma = problem.gamma;
    let rhs = &point.v - &point.x;
    let sel = &point.selection;
    let free = sel.free_indices();
    let shift = 1.0 + mu;

    let mut d = DVector::zeros(n);
    for i in 0..n {
        if !sel.mask[i] {
            d[i] = rhs[i] / shift;
        }
    }
    if free.is_empty() {
        return Ok(d);
    }
    let nf = free.len();
    let gather = |w: &DVector<f64>| DVector::from_fn(nf, |k, _| w[free[k]]);
    let scatter = |wf: &DVector<f64>| {
        let mut w = DVector::zeros(n);
        for (k, &i) in free.iter().enumerate() {
            w[i] = wf[k];
        }
        w
    };
    let s = sel.rank_one.as_ref().map(gather);
    let proj = |w: &DVector<f64>| -> DVector<f64> {
        match &s {
            Some(s) => w - s * s.dot(w),
            None => w.clone(),
        }
    };

    // R_{f,delta} d_delta = -gamma (A d_delta)_f.
    let ad = problem.a.apply(&d);
    let mut r_f = gather(&rhs) - proj(&(gather(&ad) * gamma));

    let mut beta = 0.0;
    if let Some(s) = &s {
        beta = s.dot(&r_f) / shift;
        let se = scatter(s);
        let rs = gather(&problem.apply_r(&se));
        r_f += rs * beta;
    }
    let t_rhs = proj(&r_f);

    let y = if nf <= opts.dense_limit {
        let aff = problem.a.submatrix(&free);
        let mut rff = DMatrix::identity(nf, nf) - aff * gamma;
        if let Some(s) = &s {
            let rs = &rff * s;
            let srs = s.dot(&rs);
            rff -= s * rs.transpose() + &rs * s.transpose();
            rff += s * s.transpose() * srs;
        }
        let t = DMatrix::identity(nf, nf) * shift - rff;
        let t = (&t + t.transpose()) * 0.5;
        let l = cholesky(&t).map_err(FbeError::SingularSystem)?;
        cholesky_solve(&l, &t_rhs)
    } else {
        let op = crate::linalg::FnOperator::new(nf, |w: &DVector<f64>| {
            let pw = proj(w);
            let rpw = gather(&problem.apply_r(&scatter(&pw)));
            w * shift - proj(&rpw)
        });
        let rn = t_rhs.norm();
        let abs_tol = 1e-2 * rn.min(rn.powf(1.0 + opts.cg_rho));
        let rel = if rn > 0.0 { abs_tol / rn } else { 1.0 };
        cg_solve(&op, &t_rhs, rel.max(1e-14), opts.cg_max_iter)
            .map_err(FbeError::SingularSystem)?
            .x
    };
    let mut y = proj(&y);
    if let Some(s) = &s {
        y += s * beta;
    }
    for (k, &i) in free.iter().enumerate() {
        d[i] = y[k];
    }
    Ok(d)
}

/// [`SecondOrderOracle`] view of the FBE, caching the last evaluated point.
pub struct FbeOracle<'a, G> {
    problem: &'a QuadraticComposite<G>,
    opts: BlockSolveOptions,
    cache: RefCell<Option<Rc<FbePoint>>>,
}

impl<'a, G: Proxable> FbeOracle<'a, G> {
    pub fn new(problem: &'a QuadraticComposite<G>, opts: BlockSolveOptions) -> Self {
        Self { problem, opts, cache: RefCell::new(None) }
    }

    pub fn point(&self, x: &DVector<f64>) -> Result<Rc<FbePoint>, FbeError> {
        if let Some(p) = self.cache.borrow().as_ref() {
            if p.x == *x {
                return Ok(Rc::clone(p));
            }
        }
        let p = Rc::new(fbe_eval(self.problem, x)?);
        *self.cache.borrow_mut() = Some(Rc::clone(&p));
        Ok(p)
    }

    fn point_or_nan(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        match self.point(x) {
            Ok(p) => (p.fbe_value, p.fbe_grad.clone()),
            Err(_) => (f64::NAN, DVector::from_element(x.len(), f64::NAN)),
        }
    }
}

impl<G: Proxable> SecondOrderOracle for FbeOracle<'_, G> {
    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.point_or_nan(x).0
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.point_or_nan(x).1
    }

    fn value_gradient(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        self.point_or_nan(x)
    }

    fn hessian_selection(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match self.point(x) {
            Ok(p) => fbe_hessian_dense(self.problem, &p),
            Err(_) => DMatrix::from_element(x.len(), x.len(), f64::NAN),
        }
    }

    fn hessian_apply(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        match self.point(x) {
            Ok(p) => {
                let rw = self.problem.apply_r(w);
                let rprw = self.problem.apply_r(&p.selection.apply(&rw));
                (rw - rprw) / self.problem.gamma
            }
            Err(_) => DVector::from_element(x.len(), f64::NAN),
        }
    }

    fn solve_regularized(
        &self,
        x: &DVector<f64>,
        _g: &DVector<f64>,
        mu: f64,
        reg: RegMatrix<'_>,
    ) -> Result<Direction, LinalgError> {
        let p = self.point(x).map_err(|_| LinalgError::NotPositiveDefinite { index: 0, pivot: f64::NAN })?;
        let unwrap = |e: FbeError| match e {
            FbeError::SingularSystem(le) => le,
            _ => LinalgError::NotPositiveDefinite { index: 0, pivot: f64::NAN },
        };
        match reg {
            RegMatrix::Native => {
                let d = slbqp_newton_system(self.problem, &p, mu, &self.opts).map_err(unwrap)?;
                let gamma = self.problem.gamma;
                let b_norm_sq = (d.norm_squared() - gamma * d.dot(&self.problem.a.apply(&d))) / gamma;
                Ok(Direction { d, b_norm_sq })
            }
            other => cnfb_direction(self.problem, &p, mu, other).map_err(unwrap),
        }
    }
}

/// Outcome of [`cnfb_solve`].
#[derive(Debug, Clone)]
pub struct CnfbReport {
    pub report: SolveReport,
    /// `Prox_{gamma g}(u)` at the final iterate, feasible for the composite problem.
    pub primal: DVector<f64>,
    /// `gamma^-1 ||R (x - v)||` at the final iterate.
    pub stationarity: f64,
}

/// Defaults tuned for the FBE: `mu_k = 1e-4 ||grad||^0.5`, tight gradient tolerance.
pub fn cnfb_default_params() -> GrnmParams {
    GrnmParams { c: 1e-4, rho: 0.5, grad_tol: 1e-11, max_iter: 200, ..GrnmParams::default() }
}

/// Runs GRNM-W on the FBE with the blockwise Newton solve.
pub fn cnfb_solve<G: Proxable>(
    problem: &QuadraticComposite<G>,
    x0: &DVector<f64>,
    params: &GrnmParams,
) -> Result<CnfbReport, FbeError> {
    let opts = BlockSolveOptions { cg_rho: params.rho, ..BlockSolveOptions::default() };
    let oracle = FbeOracle::new(problem, opts);
    let report = grnm_w_solve(&oracle, x0, params)?;
    let point = fbe_eval(problem, &report.final_x)?;
    let stationarity = point.fbe_grad.norm();
    Ok(CnfbReport { report, primal: point.v, stationarity })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::{BoxHyperplane, BoxHyperplaneIndicator, L1Norm, Zero};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn simplex_problem() -> QuadraticComposite<BoxHyperplaneIndicator> {
        let set = BoxHyperplane::new(v(&[1.0, 1.0]), 1.0, v(&[0.0, 0.0]), v(&[1.0, 1.0])).unwrap();
        QuadraticComposite::new(
            QuadraticOperator::Dense(DMatrix::identity(2, 2)),
            DVector::zeros(2),
            BoxHyperplaneIndicator::new(set),
            None,
        )
        .unwrap()
    }

    #[test]
    fn gamma_examples() {
        let a = DMatrix::from_diagonal(&v(&[2.0, 1.0]));
        assert!((choose_gamma(&a, 0.95, 1.0) - 0.475).abs() < 1e-9);
        assert!((choose_gamma(&DMatrix::<f64>::identity(3, 3), 0.95, 1.0) - 0.95).abs() < 1e-12);
        assert_eq!(choose_gamma(&DMatrix::<f64>::zeros(2, 2), 0.95, 1.0), 1.0);
    }

    #[test]
    fn invalid_gamma_rejected() {
        let r = QuadraticComposite::new(
            QuadraticOperator::Dense(DMatrix::from_diagonal(&v(&[2.0, 1.0]))),
            DVector::zeros(2),
            Zero,
            Some(0.6),
        );
        assert!(matches!(r, Err(FbeError::InvalidGamma { .. })));
    }

    #[test]
    fn stationary_at_symmetric_solution() {
        let p = simplex_problem();
        let pt = fbe_eval(&p, &v(&[0.5, 0.5])).unwrap();
        assert!(pt.fbe_grad.amax() < 1e-15);
        assert!((pt.v.clone() - v(&[0.5, 0.5])).amax() < 1e-15);
    }

    #[test]
    fn smooth_case_matches_hand_expansion() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let b = v(&[1.0, -1.0]);
        let p = QuadraticComposite::new(QuadraticOperator::Dense(a.clone()), b.clone(), Zero, Some(0.3)).unwrap();
        let x = v(&[0.7, -0.2]);
        let pt = fbe_eval(&p, &x).unwrap();
        let grad_f = &a * &x + &b;
        let f = 0.5 * x.dot(&(&a * &x)) + b.dot(&x);
        assert!((pt.fbe_value - (f - 0.5 * 0.3 * grad_f.norm_squared())).abs() < 1e-14);
        let r = DMatrix::identity(2, 2) - &a * 0.3;
        assert!((pt.fbe_grad.clone() - &r * &grad_f).amax() < 1e-14);
    }

    #[test]
    fn generic_direction_smooth_case_against_dense_assembly() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let b = v(&[1.0, -1.0]);
        let p = QuadraticComposite::new(QuadraticOperator::Dense(a.clone()), b.clone(), Zero, Some(0.3)).unwrap();
        let pt = fbe_eval(&p, &v(&[0.7, -0.2])).unwrap();
        let mu = 0.2;
        let dir = cnfb_direction(&p, &pt, mu, RegMatrix::Identity).unwrap();
        let r = DMatrix::identity(2, 2) - &a * 0.3;
        let m = &r * (DMatrix::identity(2, 2) - &r) / 0.3 + DMatrix::identity(2, 2) * mu;
        let rhs = &r * (&pt.v - &pt.x) / 0.3;
        let expected = m.lu().solve(&rhs).unwrap();
        assert!((dir.d - expected).amax() < 1e-12);
    }

    #[test]
    fn all_active_block_is_scaled_residual() {
        let set = BoxHyperplane::new(v(&[1.0, 1.0]), 0.0, v(&[-1.0, -1.0]), v(&[1.0, 1.0])).unwrap();
        let p = QuadraticComposite::new(
            QuadraticOperator::Dense(DMatrix::identity(2, 2) * 0.5),
            v(&[-4.0, 4.0]),
            BoxHyperplaneIndicator::new(set),
            None,
        )
        .unwrap();
        let pt = fbe_eval(&p, &v(&[0.0, 0.0])).unwrap();
        assert!(pt.selection.free_indices().is_empty());
        let mu = 0.3;
        let d = slbqp_newton_system(&p, &pt, mu, &BlockSolveOptions::default()).unwrap();
        assert!((d - (&pt.v - &pt.x) / (1.0 + mu)).amax() < 1e-15);
    }

    #[test]
    fn solution_point_gives_zero_direction() {
        let p = simplex_problem();
        let pt = fbe_eval(&p, &v(&[0.5, 0.5])).unwrap();
        let d = slbqp_newton_system(&p, &pt, 0.1, &BlockSolveOptions::default()).unwrap();
        assert!(d.amax() < 1e-15);
    }

    #[test]
    fn blocked_matches_dense_and_cg() {
        let c = DMatrix::from_fn(3, 4, |i, j| ((i * 4 + j) as f64 * 0.37).sin());
        let set = BoxHyperplane::new(v(&[1.0, -1.0, 2.0, 0.5]), 0.2, -DVector::from_element(4, 1.0), DVector::from_element(4, 1.0)).unwrap();
        let p = QuadraticComposite::new(
            QuadraticOperator::gram(DataMatrix::Dense(c)),
            v(&[0.3, -0.8, 0.1, 0.4]),
            BoxHyperplaneIndicator::new(set),
            None,
        )
        .unwrap();
        let pt = fbe_eval(&p, &v(&[0.1, 0.9, -0.3, 0.2])).unwrap();
        let mu = 0.05;
        let dense = cnfb_direction(&p, &pt, mu, RegMatrix::Native).unwrap().d;
        let blocked = slbqp_newton_system(&p, &pt, mu, &BlockSolveOptions::default()).unwrap();
        assert!((&blocked - &dense).norm() <= 1e-10 * (1.0 + dense.norm()));
        let cg_opts = BlockSolveOptions { dense_limit: 0, cg_rho: 4.0, cg_max_iter: 200 };
        let cg = slbqp_newton_system(&p, &pt, mu, &cg_opts).unwrap();
        assert!((&cg - &dense).norm() <= 1e-6 * (1.0 + dense.norm()));
    }

    #[test]
    fn cnfb_solves_symmetric_simplex() {
        let p = simplex_problem();
        let out = cnfb_solve(&p, &v(&[2.0, -1.0]), &cnfb_default_params()).unwrap();
        assert!(out.report.converged(), "{:?}", out.report.status);
        assert!((out.primal - v(&[0.5, 0.5])).amax() < 1e-10);
    }

    #[test]
    fn cnfb_solves_small_lasso() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let target = v(&[2.0, -0.5]);
        // 0.5 ||x - t||^2 + ||x||_1 = 0.5 x^T x - t^T x + const
        let p = QuadraticComposite::new(QuadraticOperator::Dense(a), -target, L1Norm { lambda: 1.0 }, None).unwrap();
        let out = cnfb_solve(&p, &DVector::zeros(2), &cnfb_default_params()).unwrap();
        assert!(out.report.converged());
        assert!((out.primal - v(&[1.0, 0.0])).amax() < 1e-10);
    }
}
