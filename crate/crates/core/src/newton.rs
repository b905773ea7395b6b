//! Generalized regularized Newton drivers over a second-order oracle.
//!
//! [`grnm_w_solve`] regularizes the selected generalized Hessian with
//! `mu_k = c ||grad||^rho` and assumes it is positive-semidefinite.
//! [`grnm_wm_solve`] drops that assumption and escalates `mu_k` along
//! `m + mu_seed * r^j` until the regularized system is positive-definite and
//! the direction satisfies the two descent bounds.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{spd_solve, LinalgError};
use crate::linesearch::{wolfe_search, Acceptance, LinesearchError, RaySlice, WolfeParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NewtonError {
    #[error("starting point has dimension {got}, oracle expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Linesearch(#[from] LinesearchError),
}

/// Which regularization matrix `B_k` an oracle should use for one solve.
#[derive(Debug, Clone, Copy)]
pub enum RegMatrix<'a> {
    Identity,
    /// The oracle's preferred matrix (identity unless it says otherwise).
    Native,
    Dense(&'a DMatrix<f64>),
}

/// Solution of `(H + mu B) d = -g` together with `d^T B d`.
#[derive(Debug, Clone)]
pub struct Direction {
    pub d: DVector<f64>,
    pub b_norm_sq: f64,
}

/// Value, gradient and one selected generalized-Hessian element of a
/// `C^{1,1}` function.
///
/// The selection returned by [`hessian_selection`](Self::hessian_selection)
/// must be symmetric and belong to the B-subdifferential of the gradient.
pub trait SecondOrderOracle {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;

    fn value_gradient(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        (self.value(x), self.gradient(x))
    }

    fn hessian_selection(&self, x: &DVector<f64>) -> DMatrix<f64>;

    fn hessian_apply(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        self.hessian_selection(x) * w
    }

    /// Solves `(H(x) + mu B) d = -g`; the default assembles the dense system.
    fn solve_regularized(
        &self,
        x: &DVector<f64>,
        g: &DVector<f64>,
        mu: f64,
        reg: RegMatrix<'_>,
    ) -> Result<Direction, LinalgError> {
        let h = self.hessian_selection(x);
        match reg {
            RegMatrix::Identity | RegMatrix::Native => {
                let n = h.nrows();
                let d = newton_direction_regularized(&h, g, mu, &DMatrix::identity(n, n))?;
                let b_norm_sq = d.norm_squared();
                Ok(Direction { d, b_norm_sq })
            }
            RegMatrix::Dense(b) => {
                let d = newton_direction_regularized(&h, g, mu, b)?;
                let b_norm_sq = d.dot(&(b * &d));
                Ok(Direction { d, b_norm_sq })
            }
        }
    }
}

impl<T: SecondOrderOracle + ?Sized> SecondOrderOracle for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (**self).gradient(x)
    }
    fn value_gradient(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        (**self).value_gradient(x)
    }
    fn hessian_selection(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (**self).hessian_selection(x)
    }
    fn hessian_apply(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        (**self).hessian_apply(x, w)
    }
    fn solve_regularized(
        &self,
        x: &DVector<f64>,
        g: &DVector<f64>,
        mu: f64,
        reg: RegMatrix<'_>,
    ) -> Result<Direction, LinalgError> {
        (**self).solve_regularized(x, g, mu, reg)
    }
}

/// Solves `(H + mu B) d = -g` by Cholesky factorization.
pub fn newton_direction_regularized(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    mu: f64,
    b: &DMatrix<f64>,
) -> Result<DVector<f64>, LinalgError> {
    let m = h + b * mu;
    spd_solve(&m, &(-g))
}

/// Source of the regularization matrices `B_k`.
#[derive(Clone, Default)]
pub enum Regularization {
    #[default]
    Native,
    Identity,
    Fixed(DMatrix<f64>),
    Schedule(Arc<dyn Fn(usize) -> DMatrix<f64> + Send + Sync>),
}

impl fmt::Debug for Regularization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regularization::Native => f.write_str("Native"),
            Regularization::Identity => f.write_str("Identity"),
            Regularization::Fixed(m) => write!(f, "Fixed({}x{})", m.nrows(), m.ncols()),
            Regularization::Schedule(_) => f.write_str("Schedule(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GrnmParams {
    /// Regularization scale `c` in `mu_k = c ||grad||^rho`.
    pub c: f64,
    pub rho: f64,
    pub wolfe: WolfeParams,
    pub grad_tol: f64,
    pub max_iter: usize,
    pub regularization: Regularization,
    /// Spot-check `<Hu, v> = <u, Hv>` at the starting point.
    pub check_symmetry: bool,
    /// Store every iterate in the report.
    pub keep_iterates: bool,
}

impl Default for GrnmParams {
    fn default() -> Self {
        Self {
            c: 1e-4,
            rho: 0.5,
            wolfe: WolfeParams::default(),
            grad_tol: 1e-10,
            max_iter: 500,
            regularization: Regularization::Native,
            check_symmetry: true,
            keep_iterates: true,
        }
    }
}

impl GrnmParams {
    pub fn validate(&self) -> Result<(), NewtonError> {
        if !(self.c > 0.0) {
            return Err(NewtonError::InvalidParams(format!("c must be > 0, got {}", self.c)));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(NewtonError::InvalidParams(format!(
                "rho must lie in (0, 1], got {}",
                self.rho
            )));
        }
        if !(self.grad_tol > 0.0) {
            return Err(NewtonError::InvalidParams("grad_tol must be > 0".into()));
        }
        self.wolfe.validate()?;
        Ok(())
    }
}

/// Extra inputs of the modified method.
#[derive(Debug, Clone)]
pub struct WmParams {
    pub base: GrnmParams,
    /// Lower descent constant `m` in `m ||d||^2 <= <-grad, d>`.
    pub m: f64,
    /// Upper constant `M` in `||grad|| <= M ||d||`.
    pub big_m: f64,
    pub mu_seed: f64,
    /// Escalation ratio `r > 1`.
    pub r: f64,
    pub max_escalation: usize,
}

impl Default for WmParams {
    fn default() -> Self {
        Self {
            base: GrnmParams::default(),
            m: 1e-8,
            big_m: 1e8,
            mu_seed: 1e-4,
            r: 2.0,
            max_escalation: 60,
        }
    }
}

impl WmParams {
    pub fn validate(&self) -> Result<(), NewtonError> {
        self.base.wolfe.validate()?;
        if !(self.base.grad_tol > 0.0) {
            return Err(NewtonError::InvalidParams("grad_tol must be > 0".into()));
        }
        if !(self.m > 0.0 && self.big_m > self.m) {
            return Err(NewtonError::InvalidParams(format!(
                "need M > m > 0, got m={}, M={}",
                self.m, self.big_m
            )));
        }
        if !(self.mu_seed > 0.0 && self.r > 1.0) {
            return Err(NewtonError::InvalidParams("need mu_seed > 0 and r > 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    LinesearchFailure,
    DirectionFailure,
    MuEscalationExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateClass {
    Superlinear,
    QLinear,
    Sublinear,
    Undetermined,
}

/// One iterate `x^k` and, unless it is the last, the step taken from it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterateRecord {
    pub k: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub x: Option<Vec<f64>>,
    pub value: f64,
    pub grad_norm: f64,
    pub mu: Option<f64>,
    pub tau: Option<f64>,
    pub d_norm: Option<f64>,
    /// `<-grad, d>`.
    pub descent: Option<f64>,
    /// `mu ||d||_B^2`.
    pub reg_term: Option<f64>,
    pub acceptance: Option<Acceptance>,
    /// Escalation index `j` accepted by the modified method.
    pub escalation: Option<usize>,
    /// `(phi(x^k) - phi(x^{k+1})) / ||x^{k+1} - x^k||^2`.
    pub h1: Option<f64>,
    /// `||grad phi(x^{k+1})|| / ||x^{k+1} - x^k||`.
    pub h2: Option<f64>,
    pub n_func_evals: usize,
    pub n_grad_evals: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub iterates: Vec<IterateRecord>,
    pub final_x: DVector<f64>,
    pub final_value: f64,
    pub final_grad_norm: f64,
    pub rate_estimate: RateClass,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub message: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub symmetry_defect: Option<f64>,
}

impl SolveReport {
    /// Number of accepted steps.
    pub fn iterations(&self) -> usize {
        self.iterates.iter().filter(|r| r.tau.is_some()).count()
    }

    pub fn grad_norm_trace(&self) -> Vec<f64> {
        self.iterates.iter().map(|r| r.grad_norm).collect()
    }

    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn total_func_evals(&self) -> usize {
        self.iterates.last().map_or(0, |r| r.n_func_evals)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("trace has {0} entries, need at least 5")]
    TraceTooShort(usize),
    #[error("trace entry {0} is not strictly positive")]
    NonPositive(usize),
}

/// Heuristic rate classification from the last successive ratios
/// `r_k = t_{k+1} / t_k` of a positive error trace.
///
/// Superlinear: the last three ratios strictly decrease and the last is
/// below 0.1. Sublinear: they strictly increase towards one (last above
/// 0.5). Q-linear: they lie within 0.1 of their mean, which is below one.
pub fn classify_convergence_rate(trace: &[f64]) -> Result<RateClass, RateError> {
    if trace.len() < 5 {
        return Err(RateError::TraceTooShort(trace.len()));
    }
    if let Some(i) = trace.iter().position(|t| !(*t > 0.0)) {
        return Err(RateError::NonPositive(i));
    }
    let ratios: Vec<f64> = trace.windows(2).map(|w| w[1] / w[0]).collect();
    let tail = &ratios[ratios.len() - 3..];
    let last = tail[2];
    if tail[0] > tail[1] && tail[1] > last && last < 0.1 {
        return Ok(RateClass::Superlinear);
    }
    if tail[0] < tail[1] && tail[1] < last && last > 0.5 && last < 1.0 {
        return Ok(RateClass::Sublinear);
    }
    let mean = tail.iter().sum::<f64>() / 3.0;
    if mean < 1.0 && tail.iter().all(|r| (r - mean).abs() <= 0.1) {
        return Ok(RateClass::QLinear);
    }
    Ok(RateClass::Undetermined)
}

fn rate_of(records: &[IterateRecord]) -> RateClass {
    let trace: Vec<f64> = records.iter().map(|r| r.grad_norm).collect();
    classify_convergence_rate(&trace).unwrap_or(RateClass::Undetermined)
}

fn symmetry_spot_check<O: SecondOrderOracle + ?Sized>(oracle: &O, x: &DVector<f64>) -> f64 {
    let n = oracle.dim();
    // Fixed, deterministic probe vectors.
    let u = DVector::from_fn(n, |i, _| ((i as f64 + 1.0) * 0.734).sin());
    let v = DVector::from_fn(n, |i, _| ((i as f64 + 2.0) * 1.371).cos());
    let hu = oracle.hessian_apply(x, &u);
    let hv = oracle.hessian_apply(x, &v);
    let lhs = hu.dot(&v);
    let rhs = u.dot(&hv);
    (lhs - rhs).abs() / (1.0 + lhs.abs().max(rhs.abs()))
}

struct StepOutcome {
    x: DVector<f64>,
    value: f64,
    grad: DVector<f64>,
    tau: f64,
    acceptance: Acceptance,
    n_evals: usize,
}

/// Wolfe search along `d`, returning the accepted point with its gradient.
fn line_step<O: SecondOrderOracle + ?Sized>(
    oracle: &O,
    x: &DVector<f64>,
    fx: f64,
    g: &DVector<f64>,
    d: &DVector<f64>,
    wolfe: &WolfeParams,
) -> Result<StepOutcome, LinesearchError> {
    let slope0 = g.dot(d);
    let mut cache: Option<(f64, f64, DVector<f64>)> = None;
    let step = {
        let mut slice = RaySlice::new(fx, slope0, |tau: f64| {
            let trial = x + d * tau;
            let (v, gt) = oracle.value_gradient(&trial);
            let s = gt.dot(d);
            cache = Some((tau, v, gt));
            (v, s)
        });
        wolfe_search(&mut slice, wolfe)?
    };
    let x_new = x + d * step.tau;
    let (value, grad, extra) = match cache {
        Some((t, v, gt)) if t == step.tau => (v, gt, 0),
        _ => {
            let (v, gt) = oracle.value_gradient(&x_new);
            (v, gt, 1)
        }
    };
    Ok(StepOutcome {
        x: x_new,
        value,
        grad,
        tau: step.tau,
        acceptance: step.acceptance,
        n_evals: step.n_evals + extra,
    })
}

struct Driver {
    start: Instant,
    keep_iterates: bool,
    records: Vec<IterateRecord>,
    nf: usize,
    ng: usize,
}

impl Driver {
    fn new(keep_iterates: bool) -> Self {
        Self {
            start: Instant::now(),
            keep_iterates,
            records: Vec::new(),
            nf: 0,
            ng: 0,
        }
    }

    fn base_record(&self, k: usize, x: &DVector<f64>, value: f64, grad_norm: f64) -> IterateRecord {
        IterateRecord {
            k,
            x: self.keep_iterates.then(|| x.iter().copied().collect()),
            value,
            grad_norm,
            mu: None,
            tau: None,
            d_norm: None,
            descent: None,
            reg_term: None,
            acceptance: None,
            escalation: None,
            h1: None,
            h2: None,
            n_func_evals: self.nf,
            n_grad_evals: self.ng,
            wall_time: self.start.elapsed().as_secs_f64(),
        }
    }

    fn finish(
        self,
        status: SolveStatus,
        x: DVector<f64>,
        value: f64,
        grad_norm: f64,
        message: Option<String>,
        symmetry_defect: Option<f64>,
    ) -> SolveReport {
        let k = self.records.len();
        let last = self.base_record(k, &x, value, grad_norm);
        let mut records = self.records;
        records.push(last);
        let rate_estimate = rate_of(&records);
        SolveReport {
            status,
            iterates: records,
            final_x: x,
            final_value: value,
            final_grad_norm: grad_norm,
            rate_estimate,
            message,
            symmetry_defect,
        }
    }
}

fn check_dim<O: SecondOrderOracle + ?Sized>(oracle: &O, x0: &DVector<f64>) -> Result<(), NewtonError> {
    if x0.len() != oracle.dim() {
        return Err(NewtonError::DimensionMismatch {
            expected: oracle.dim(),
            got: x0.len(),
        });
    }
    Ok(())
}

/// Generalized regularized Newton method with Wolfe linesearch.
///
/// Runtime breakdowns (failed factorization, exhausted linesearch) end the
/// run with the matching [`SolveStatus`]; only invalid inputs are errors.
pub fn grnm_w_solve<O: SecondOrderOracle + ?Sized>(
    oracle: &O,
    x0: &DVector<f64>,
    params: &GrnmParams,
) -> Result<SolveReport, NewtonError> {
    params.validate()?;
    check_dim(oracle, x0)?;
    let mut drv = Driver::new(params.keep_iterates);
    let mut x = x0.clone();
    let (mut fx, mut g) = oracle.value_gradient(&x);
    drv.nf += 1;
    drv.ng += 1;
    let symmetry_defect = params.check_symmetry.then(|| symmetry_spot_check(oracle, &x));

    for k in 0.. {
        let gn = g.norm();
        if gn <= params.grad_tol {
            return Ok(drv.finish(SolveStatus::Converged, x, fx, gn, None, symmetry_defect));
        }
        if k >= params.max_iter {
            return Ok(drv.finish(SolveStatus::MaxIter, x, fx, gn, None, symmetry_defect));
        }
        let mu = params.c * gn.powf(params.rho);
        let scheduled;
        let reg = match &params.regularization {
            Regularization::Native => RegMatrix::Native,
            Regularization::Identity => RegMatrix::Identity,
            Regularization::Fixed(b) => RegMatrix::Dense(b),
            Regularization::Schedule(f) => {
                scheduled = f(k);
                RegMatrix::Dense(&scheduled)
            }
        };
        let dir = match oracle.solve_regularized(&x, &g, mu, reg) {
            Ok(dir) => dir,
            Err(e) => {
                let msg = format!("regularized Newton system failed at iteration {k}: {e}");
                return Ok(drv.finish(SolveStatus::DirectionFailure, x, fx, gn, Some(msg), symmetry_defect));
            }
        };
        let slope = g.dot(&dir.d);
        if !(slope < 0.0) {
            let msg = format!("direction at iteration {k} is not a descent direction (slope {slope})");
            return Ok(drv.finish(SolveStatus::DirectionFailure, x, fx, gn, Some(msg), symmetry_defect));
        }
        let step = match line_step(oracle, &x, fx, &g, &dir.d, &params.wolfe) {
            Ok(s) => s,
            Err(e) => {
                let msg = format!("linesearch failed at iteration {k}: {e}");
                return Ok(drv.finish(SolveStatus::LinesearchFailure, x, fx, gn, Some(msg), symmetry_defect));
            }
        };
        let mut rec = drv.base_record(k, &x, fx, gn);
        let dn = dir.d.norm();
        let dx = step.tau * dn;
        rec.mu = Some(mu);
        rec.tau = Some(step.tau);
        rec.d_norm = Some(dn);
        rec.descent = Some(-slope);
        rec.reg_term = Some(mu * dir.b_norm_sq);
        rec.acceptance = Some(step.acceptance);
        rec.h1 = Some((fx - step.value) / (dx * dx));
        rec.h2 = Some(step.grad.norm() / dx);
        drv.nf += step.n_evals;
        drv.ng += step.n_evals;
        rec.n_func_evals = drv.nf;
        rec.n_grad_evals = drv.ng;
        rec.wall_time = drv.start.elapsed().as_secs_f64();
        drv.records.push(rec);
        x = step.x;
        fx = step.value;
        g = step.grad;
    }
    unreachable!()
}

/// Modified regularized Newton method with Wolfe linesearch, well-posed for
/// nonconvex `C^{1,1}` functions with bounded sublevel sets.
pub fn grnm_wm_solve<O: SecondOrderOracle + ?Sized>(
    oracle: &O,
    x0: &DVector<f64>,
    params: &WmParams,
) -> Result<SolveReport, NewtonError> {
    params.validate()?;
    check_dim(oracle, x0)?;
    let base = &params.base;
    let mut drv = Driver::new(base.keep_iterates);
    let mut x = x0.clone();
    let (mut fx, mut g) = oracle.value_gradient(&x);
    drv.nf += 1;
    drv.ng += 1;
    let symmetry_defect = base.check_symmetry.then(|| symmetry_spot_check(oracle, &x));

    for k in 0.. {
        let gn = g.norm();
        if gn <= base.grad_tol {
            return Ok(drv.finish(SolveStatus::Converged, x, fx, gn, None, symmetry_defect));
        }
        if k >= base.max_iter {
            return Ok(drv.finish(SolveStatus::MaxIter, x, fx, gn, None, symmetry_defect));
        }

        let mut accepted = None;
        for j in 0..=params.max_escalation {
            let mu = params.m + params.mu_seed * params.r.powi(j as i32);
            let dir = match oracle.solve_regularized(&x, &g, mu, RegMatrix::Identity) {
                Ok(dir) => dir,
                Err(LinalgError::NotPositiveDefinite { .. }) => continue,
                Err(e) => {
                    let msg = format!("regularized Newton system failed at iteration {k}: {e}");
                    return Ok(drv.finish(SolveStatus::DirectionFailure, x, fx, gn, Some(msg), symmetry_defect));
                }
            };
            let dn = dir.d.norm();
            let descent = -g.dot(&dir.d);
            if params.m * dn * dn > descent {
                continue;
            }
            if gn > params.big_m * dn {
                // Larger mu only shrinks d further.
                let msg = format!(
                    "||grad|| <= M ||d|| fails at iteration {k} (ratio {:.3e} > M = {:.3e})",
                    gn / dn,
                    params.big_m
                );
                return Ok(drv.finish(SolveStatus::DirectionFailure, x, fx, gn, Some(msg), symmetry_defect));
            }
            accepted = Some((j, mu, dir, descent));
            break;
        }
        let Some((j, mu, dir, descent)) = accepted else {
            let msg = format!(
                "no admissible mu within {} escalations at iteration {k}",
                params.max_escalation
            );
            return Ok(drv.finish(SolveStatus::MuEscalationExhausted, x, fx, gn, Some(msg), symmetry_defect));
        };

        let step = match line_step(oracle, &x, fx, &g, &dir.d, &base.wolfe) {
            Ok(s) => s,
            Err(e) => {
                let msg = format!("linesearch failed at iteration {k}: {e}");
                return Ok(drv.finish(SolveStatus::LinesearchFailure, x, fx, gn, Some(msg), symmetry_defect));
            }
        };
        let mut rec = drv.base_record(k, &x, fx, gn);
        let dn = dir.d.norm();
        let dx = step.tau * dn;
        rec.mu = Some(mu);
        rec.tau = Some(step.tau);
        rec.d_norm = Some(dn);
        rec.descent = Some(descent);
        rec.reg_term = Some(mu * dir.b_norm_sq);
        rec.acceptance = Some(step.acceptance);
        rec.escalation = Some(j);
        rec.h1 = Some((fx - step.value) / (dx * dx));
        rec.h2 = Some(step.grad.norm() / dx);
        drv.nf += step.n_evals;
        drv.ng += step.n_evals;
        rec.n_func_evals = drv.nf;
        rec.n_grad_evals = drv.ng;
        rec.wall_time = drv.start.elapsed().as_secs_f64();
        drv.records.push(rec);
        x = step.x;
        fx = step.value;
        g = step.grad;
    }
    unreachable!()
}
