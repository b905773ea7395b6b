//! Augmented Lagrangian method with coderivative-based Newton inner solves
//! (CNAL) for `min_x h(A x) - <c, x> + p(x)`, worked on the dual
//! `min_{y,z} h*(y) + p*(z)` subject to `A^T y + z = c`.

use std::cell::RefCell;
use std::rc::Rc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::LassoInstance;
use crate::linalg::{cholesky, cholesky_solve, LinalgError};
use crate::matrix::DataMatrix;
use crate::newton::{
    grnm_w_solve, Direction, GrnmParams, NewtonError, RegMatrix, SecondOrderOracle, SolveStatus,
};
use crate::prox::{default_active_tol, soft_threshold, L1Norm, ProxError, Proxable, SelectionOperator};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlmError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Prox(#[from] ProxError),
    #[error(transparent)]
    Newton(#[from] NewtonError),
}

/// Primal `h(A x) - <c, x> + p(x)` with `h*(y) = 0.5 y^T D y`, `D` diagonal
/// positive.
#[derive(Debug, Clone)]
pub struct LinearConvexComposite<P> {
    amap: DataMatrix,
    c: DVector<f64>,
    h_diag: DVector<f64>,
    p: P,
    /// Constant added to the primal objective (for Lasso `0.5 ||b||^2`).
    pub constant: f64,
}

impl<P: Proxable> LinearConvexComposite<P> {
    pub fn new(amap: DataMatrix, c: DVector<f64>, h_diag: DVector<f64>, p: P) -> Result<Self, AlmError> {
        if c.len() != amap.ncols() {
            return Err(AlmError::DimensionMismatch { expected: amap.ncols(), got: c.len() });
        }
        if h_diag.len() != amap.nrows() {
            return Err(AlmError::DimensionMismatch { expected: amap.nrows(), got: h_diag.len() });
        }
        if h_diag.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(AlmError::InvalidParams("h* must be strongly convex (positive diagonal)".into()));
        }
        Ok(Self { amap, c, h_diag, p, constant: 0.0 })
    }

    /// Dual dimension `m`.
    pub fn m(&self) -> usize {
        self.amap.nrows()
    }

    /// Primal dimension `n`.
    pub fn n(&self) -> usize {
        self.amap.ncols()
    }

    pub fn amap(&self) -> &DataMatrix {
        &self.amap
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn p(&self) -> &P {
        &self.p
    }

    /// Strong convexity modulus of `h*`.
    pub fn alpha(&self) -> f64 {
        self.h_diag.min()
    }

    pub fn h_conj_value(&self, y: &DVector<f64>) -> f64 {
        0.5 * y.iter().zip(self.h_diag.iter()).map(|(yi, di)| di * yi * yi).sum::<f64>()
    }

    pub fn h_conj_grad(&self, y: &DVector<f64>) -> DVector<f64> {
        y.component_mul(&self.h_diag)
    }

    /// `h(w) = 0.5 w^T D^-1 w`.
    pub fn h_value(&self, w: &DVector<f64>) -> f64 {
        0.5 * w.iter().zip(self.h_diag.iter()).map(|(wi, di)| wi * wi / di).sum::<f64>()
    }

    pub fn primal_objective(&self, x: &DVector<f64>) -> f64 {
        self.h_value(&self.amap.mul_vec(x)) - self.c.dot(x) + self.p.value(x) + self.constant
    }

    /// `-(h*(y) + p*(z))` plus the constant, when `p*` has a closed form.
    pub fn dual_objective(&self, y: &DVector<f64>, z: &DVector<f64>) -> Option<f64> {
        Some(-(self.h_conj_value(y) + self.p.conjugate_value(z)?) + self.constant)
    }
}

/// Builds `0.5 ||A x - b||^2 + lambda ||x||_1` with `h = 0.5 ||.||^2`,
/// `c = A^T b`.
pub fn lasso_problem(inst: &LassoInstance) -> Result<LinearConvexComposite<L1Norm>, AlmError> {
    let c = inst.a.tr_mul_vec(&inst.b);
    let mut prob = LinearConvexComposite::new(
        inst.a.clone(),
        c,
        DVector::from_element(inst.a.nrows(), 1.0),
        L1Norm { lambda: inst.lambda },
    )?;
    prob.constant = 0.5 * inst.b.norm_squared();
    Ok(prob)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlmState {
    pub y: DVector<f64>,
    pub z: DVector<f64>,
    /// Multiplier, converging to a primal solution.
    pub x: DVector<f64>,
    pub sigma: f64,
    pub k: usize,
    pub eps_k: f64,
}

impl AlmState {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self { y: DVector::zeros(m), z: DVector::zeros(n), x: DVector::zeros(n), sigma: 1.0, k: 0, eps_k: 0.1 }
    }
}

/// Values shared by `psi`, its gradient and Hessian at one `y`.
#[derive(Debug, Clone)]
pub struct PsiPoint {
    pub y: DVector<f64>,
    /// `u = x - sigma (A^T y - c)`.
    pub u: DVector<f64>,
    /// `Prox_{sigma p}(u)`.
    pub v: DVector<f64>,
    /// `Prox_{p*/sigma}(u / sigma)`.
    pub z: DVector<f64>,
    pub value: f64,
    pub grad: DVector<f64>,
    pub selection: SelectionOperator,
}

pub fn psi_eval<P: Proxable>(
    problem: &LinearConvexComposite<P>,
    x: &DVector<f64>,
    sigma: f64,
    y: &DVector<f64>,
) -> Result<PsiPoint, AlmError> {
    if y.len() != problem.m() {
        return Err(AlmError::DimensionMismatch { expected: problem.m(), got: y.len() });
    }
    if !(sigma > 0.0) {
        return Err(AlmError::InvalidParams(format!("sigma must be > 0, got {sigma}")));
    }
    let aty = problem.amap.tr_mul_vec(y);
    let u = x - (aty - &problem.c) * sigma;
    let (v, selection) = problem.p.prox_with_selection(sigma, &u, default_active_tol(&u))?;
    let z = (&u - &v) / sigma;
    // p*(z) = <z, v> - p(v) since z is a subgradient of p at v.
    let p_conj = z.dot(&v) - problem.p.value(&v);
    let value = problem.h_conj_value(y) + p_conj + v.norm_squared() / (2.0 * sigma)
        - x.norm_squared() / (2.0 * sigma);
    let grad = problem.h_conj_grad(y) - problem.amap.mul_vec(&v);
    Ok(PsiPoint { y: y.clone(), u, v, z, value, grad, selection })
}

/// `H w = D w + sigma A P A^T w`.
pub fn psi_hessian_apply<P: Proxable>(
    problem: &LinearConvexComposite<P>,
    sigma: f64,
    point: &PsiPoint,
    w: &DVector<f64>,
) -> DVector<f64> {
    let atw = problem.amap.tr_mul_vec(w);
    let patw = point.selection.apply(&atw);
    w.component_mul(&problem.h_diag) + problem.amap.mul_vec(&patw) * sigma
}

/// Solves `(D + mu I + sigma A P A^T) d = rhs`.
fn psi_newton_solve<P: Proxable>(
    problem: &LinearConvexComposite<P>,
    sigma: f64,
    point: &PsiPoint,
    mu: f64,
    rhs: &DVector<f64>,
) -> Result<DVector<f64>, LinalgError> {
    let m = problem.m();
    let dd = problem.h_diag.map(|d| d + mu);
    let sel = &point.selection;
    if sel.rank_one.is_some() {
        let mut h = DMatrix::zeros(m, m);
        for j in 0..m {
            let mut e = DVector::zeros(m);
            e[j] = 1.0;
            let atw = problem.amap.tr_mul_vec(&e);
            let col = problem.amap.mul_vec(&sel.apply(&atw)) * sigma;
            h.set_column(j, &col);
        }
        for j in 0..m {
            h[(j, j)] += dd[j];
        }
        let h = (&h + h.transpose()) * 0.5;
        return crate::linalg::spd_solve(&h, rhs);
    }
    let free = sel.free_indices();
    if free.is_empty() {
        return Ok(rhs.component_div(&dd));
    }
    let aj = problem.amap.select_columns(&free);
    if free.len() <= m {
        // Woodbury: (D' + sigma A_J A_J^T)^-1 = D'^-1 - D'^-1 A_J S^-1 A_J^T D'^-1,
        // S = I / sigma + A_J^T D'^-1 A_J.
        let dinv_rhs = rhs.component_div(&dd);
        let mut scaled = aj.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row /= dd[i];
        }
        let mut s = aj.tr_mul(&scaled);
        for k in 0..free.len() {
            s[(k, k)] += 1.0 / sigma;
        }
        let s = (&s + s.transpose()) * 0.5;
        let l = cholesky(&s)?;
        let t = cholesky_solve(&l, &aj.tr_mul(&dinv_rhs));
        Ok(dinv_rhs - scaled * t)
    } else {
        let mut h = &aj * aj.transpose() * sigma;
        for i in 0..m {
            h[(i, i)] += dd[i];
        }
        let l = cholesky(&h)?;
        Ok(cholesky_solve(&l, rhs))
    }
}

/// [`SecondOrderOracle`] for `psi` at a fixed multiplier and penalty.
pub struct PsiOracle<'a, P> {
    problem: &'a LinearConvexComposite<P>,
    x: &'a DVector<f64>,
    sigma: f64,
    cache: RefCell<Option<Rc<PsiPoint>>>,
}

impl<'a, P: Proxable> PsiOracle<'a, P> {
    pub fn new(problem: &'a LinearConvexComposite<P>, x: &'a DVector<f64>, sigma: f64) -> Self {
        Self { problem, x, sigma, cache: RefCell::new(None) }
    }

    pub fn point(&self, y: &DVector<f64>) -> Result<Rc<PsiPoint>, AlmError> {
        if let Some(p) = self.cache.borrow().as_ref() {
            if p.y == *y {
                return Ok(Rc::clone(p));
            }
        }
        let p = Rc::new(psi_eval(self.problem, self.x, self.sigma, y)?);
        *self.cache.borrow_mut() = Some(Rc::clone(&p));
        Ok(p)
    }

    fn value_grad(&self, y: &DVector<f64>) -> (f64, DVector<f64>) {
        match self.point(y) {
            Ok(p) => (p.value, p.grad.clone()),
            Err(_) => (f64::NAN, DVector::from_element(y.len(), f64::NAN)),
        }
    }
}

impl<P: Proxable> SecondOrderOracle for PsiOracle<'_, P> {
    fn dim(&self) -> usize {
        self.problem.m()
    }

    fn value(&self, y: &DVector<f64>) -> f64 {
        self.value_grad(y).0
    }

    fn gradient(&self, y: &DVector<f64>) -> DVector<f64> {
        self.value_grad(y).1
    }

    fn value_gradient(&self, y: &DVector<f64>) -> (f64, DVector<f64>) {
        self.value_grad(y)
    }

    fn hessian_selection(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let m = self.problem.m();
        let Ok(p) = self.point(y) else {
            return DMatrix::from_element(m, m, f64::NAN);
        };
        let mut h = DMatrix::zeros(m, m);
        for j in 0..m {
            let mut e = DVector::zeros(m);
            e[j] = 1.0;
            h.set_column(j, &psi_hessian_apply(self.problem, self.sigma, &p, &e));
        }
        (&h + h.transpose()) * 0.5
    }

    fn hessian_apply(&self, y: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        match self.point(y) {
            Ok(p) => psi_hessian_apply(self.problem, self.sigma, &p, w),
            Err(_) => DVector::from_element(w.len(), f64::NAN),
        }
    }

    fn solve_regularized(
        &self,
        y: &DVector<f64>,
        g: &DVector<f64>,
        mu: f64,
        reg: RegMatrix<'_>,
    ) -> Result<Direction, LinalgError> {
        match reg {
            RegMatrix::Identity | RegMatrix::Native => {
                let p = self
                    .point(y)
                    .map_err(|_| LinalgError::NotPositiveDefinite { index: 0, pivot: f64::NAN })?;
                let d = psi_newton_solve(self.problem, self.sigma, &p, mu, &(-g))?;
                let b_norm_sq = d.norm_squared();
                Ok(Direction { d, b_norm_sq })
            }
            RegMatrix::Dense(b) => {
                let h = self.hessian_selection(y) + b * mu;
                let d = crate::linalg::spd_solve(&h, &(-g))?;
                let b_norm_sq = d.dot(&(b * &d));
                Ok(Direction { d, b_norm_sq })
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct CnalParams {
    pub sigma0: f64,
    pub sigma_growth: f64,
    pub sigma_max: f64,
    pub eps0: f64,
    pub eps_decay: f64,
    pub tol: f64,
    pub max_outer: usize,
    /// Inner GRNM-W settings; `grad_tol` is overwritten per outer step.
    pub inner: GrnmParams,
}

impl Default for CnalParams {
    fn default() -> Self {
        Self {
            sigma0: 1.0,
            sigma_growth: 3.0,
            sigma_max: 1e6,
            eps0: 0.1,
            eps_decay: 0.5,
            tol: 1e-6,
            max_outer: 100,
            inner: GrnmParams {
                c: 1e-4,
                rho: 0.5,
                max_iter: 200,
                keep_iterates: false,
                check_symmetry: false,
                ..GrnmParams::default()
            },
        }
    }
}

impl CnalParams {
    pub fn validate(&self) -> Result<(), AlmError> {
        let bad = |msg: &str| Err(AlmError::InvalidParams(msg.into()));
        if !(self.sigma0 > 0.0 && self.sigma_max >= self.sigma0) {
            return bad("need 0 < sigma0 <= sigma_max");
        }
        if !(self.sigma_growth >= 1.0) {
            return bad("sigma_growth must be >= 1");
        }
        if !(self.eps0 > 0.0 && self.eps_decay > 0.0 && self.eps_decay < 1.0) {
            return bad("need eps0 > 0 and eps_decay in (0, 1)");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CnalStatus {
    Converged,
    MaxOuterIterations,
    InnerSolveFailure,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OuterRecord {
    pub k: usize,
    pub sigma: f64,
    pub eps_k: f64,
    pub inner_tol: f64,
    pub inner_iterations: usize,
    pub inner_status: SolveStatus,
    pub inner_grad_norm: f64,
    pub dual_feasibility: f64,
    pub primal_objective: f64,
    pub kkt_residual: Option<f64>,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CnalReport {
    pub status: CnalStatus,
    pub outer: Vec<OuterRecord>,
    pub state: AlmState,
    pub total_inner_iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub message: Option<String>,
}

impl CnalReport {
    pub fn x(&self) -> &DVector<f64> {
        &self.state.x
    }

    pub fn outer_iterations(&self) -> usize {
        self.outer.len()
    }

    pub fn final_kkt(&self) -> Option<f64> {
        self.outer.last().and_then(|r| r.kkt_residual)
    }
}

/// Result of one inner minimization of `psi`.
#[derive(Debug, Clone)]
pub struct InnerOutcome {
    pub y: DVector<f64>,
    pub z: DVector<f64>,
    /// `Prox_{sigma p}(u)` at the returned `y`, equal to the next multiplier.
    pub v: DVector<f64>,
    pub report: crate::newton::SolveReport,
    pub tol: f64,
}

pub fn cnal_inner_solve<P: Proxable>(
    problem: &LinearConvexComposite<P>,
    state: &AlmState,
    inner: &GrnmParams,
) -> Result<InnerOutcome, AlmError> {
    let tol = state.eps_k * (problem.alpha() / state.sigma).sqrt();
    let params = GrnmParams { grad_tol: tol, ..inner.clone() };
    let oracle = PsiOracle::new(problem, &state.x, state.sigma);
    let report = grnm_w_solve(&oracle, &state.y, &params)?;
    let pt = oracle.point(&report.final_x)?;
    Ok(InnerOutcome { y: report.final_x.clone(), z: pt.z.clone(), v: pt.v.clone(), report, tol })
}

/// Runs CNAL from `init`; `kkt` (if given) supplies the stopping residual.
pub fn cnal_solve<P: Proxable>(
    problem: &LinearConvexComposite<P>,
    init: AlmState,
    params: &CnalParams,
    kkt: Option<&dyn Fn(&DVector<f64>) -> f64>,
) -> Result<CnalReport, AlmError> {
    params.validate()?;
    if init.y.len() != problem.m() {
        return Err(AlmError::DimensionMismatch { expected: problem.m(), got: init.y.len() });
    }
    for len in [init.x.len(), init.z.len()] {
        if len != problem.n() {
            return Err(AlmError::DimensionMismatch { expected: problem.n(), got: len });
        }
    }
    let start = Instant::now();
    let mut state = AlmState { sigma: params.sigma0, k: 0, eps_k: params.eps0, ..init };
    let mut outer: Vec<OuterRecord> = Vec::new();
    let mut total_inner = 0;
    let mut prev_obj: Option<f64> = None;

    for k in 0..params.max_outer {
        state.k = k;
        state.eps_k = params.eps0 * params.eps_decay.powi(k as i32);
        let inner = cnal_inner_solve(problem, &state, &params.inner)?;
        total_inner += inner.report.iterations();
        let aty = problem.amap.tr_mul_vec(&inner.y);
        let infeas = &aty + &inner.z - &problem.c;
        state.x -= &infeas * state.sigma;
        state.y = inner.y;
        state.z = inner.z;
        let dual_feasibility = infeas.norm();
        let obj = problem.primal_objective(&state.x);
        let eta = kkt.map(|f| f(&state.x));
        outer.push(OuterRecord {
            k,
            sigma: state.sigma,
            eps_k: state.eps_k,
            inner_tol: inner.tol,
            inner_iterations: inner.report.iterations(),
            inner_status: inner.report.status,
            inner_grad_norm: inner.report.final_grad_norm,
            dual_feasibility,
            primal_objective: obj,
            kkt_residual: eta,
            wall_time: start.elapsed().as_secs_f64(),
        });
        if inner.report.status == SolveStatus::DirectionFailure {
            return Ok(CnalReport {
                status: CnalStatus::InnerSolveFailure,
                outer,
                state,
                total_inner_iterations: total_inner,
                message: inner.report.message,
            });
        }
        let done = match eta {
            Some(eta) => eta <= params.tol,
            None => {
                let rel = prev_obj.map_or(f64::INFINITY, |p| (obj - p).abs() / (1.0 + obj.abs()));
                dual_feasibility <= params.tol && rel <= params.tol
            }
        };
        if done {
            return Ok(CnalReport {
                status: CnalStatus::Converged,
                outer,
                state,
                total_inner_iterations: total_inner,
                message: None,
            });
        }
        prev_obj = Some(obj);
        state.sigma = (state.sigma * params.sigma_growth).min(params.sigma_max);
    }
    Ok(CnalReport {
        status: CnalStatus::MaxOuterIterations,
        outer,
        state,
        total_inner_iterations: total_inner,
        message: None,
    })
}

/// `||x - soft(x - A^T(Ax - b), lambda)|| / (1 + ||x|| + ||A^T(Ax - b)||)`.
pub fn kkt_residual_lasso(a: &DataMatrix, b: &DVector<f64>, lambda: f64, x: &DVector<f64>) -> f64 {
    let g = a.tr_mul_vec(&(a.mul_vec(x) - b));
    let step = soft_threshold(&(x - &g), lambda);
    (x - step).norm() / (1.0 + x.norm() + g.norm())
}

/// CNAL on a Lasso instance with the relative KKT residual as stopping test.
pub fn cnal_solve_lasso(inst: &LassoInstance, params: &CnalParams) -> Result<CnalReport, AlmError> {
    let problem = lasso_problem(inst)?;
    let kkt = |x: &DVector<f64>| kkt_residual_lasso(&inst.a, &inst.b, inst.lambda, x);
    cnal_solve(&problem, AlmState::zeros(problem.m(), problem.n()), params, Some(&kkt))
}
