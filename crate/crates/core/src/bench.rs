//! FISTA reference solver, accuracy metrics and the benchmark harness.

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alm::{cnal_solve_lasso, kkt_residual_lasso, CnalParams, CnalStatus};
use crate::data::{
    build_lasso, build_svm_dual, gen_random_lasso, gen_random_slbqp, parse_libsvm, DataError, DataMatrix,
    LassoInstance, SlbqpInstance,
};
use crate::fbe::{cnfb_default_params, cnfb_solve, fbe_eval, FbeError, FbeOracle, QuadraticComposite, QuadraticOperator};
use crate::linalg::power_lambda_max;
use crate::newton::{grnm_wm_solve, GrnmParams, Regularization, SolveReport, SolveStatus, WmParams};
use crate::prox::{project_box_hyperplane, L1Norm, Proxable};

pub const SLBQP_RESIDUAL_DEFINITION: &str =
    "slbqp: ||x - Proj(x - (Qx + c))|| / (1 + ||x|| + ||Qx + c||)";
pub const LASSO_RESIDUAL_DEFINITION: &str =
    "lasso: ||x - soft(x - A^T(Ax - b), lambda)|| / (1 + ||x|| + ||A^T(Ax - b)||)";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Fbe(#[from] FbeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Stationarity residual of a point for the SLBQP.
pub fn slbqp_residual(inst: &SlbqpInstance, x: &DVector<f64>) -> f64 {
    let grad = inst.q.apply(x) + &inst.c_lin;
    let Ok((p, _)) = project_box_hyperplane(&inst.constraint, &(x - &grad), 1e-10) else {
        return f64::INFINITY;
    };
    (x - p).norm() / (1.0 + x.norm() + grad.norm())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FistaOutcome {
    pub x: DVector<f64>,
    /// Residual after every iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Accelerated proximal gradient with step `1/L` and gradient-based adaptive
/// restart, on `0.5 x^T A x + b^T x + g(x)`.
pub fn fista_baseline<G, F>(
    problem: &QuadraticComposite<G>,
    x0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
    residual: F,
) -> FistaOutcome
where
    G: Proxable,
    F: Fn(&DVector<f64>, &DVector<f64>) -> f64,
{
    let lip = problem.lambda_max() * 1.02;
    let step = if lip > 0.0 { 1.0 / lip } else { 1.0 };
    let a = problem.a();
    let b = problem.b();
    fista_core(x0, tol, max_iter, step, |x| a.apply(x) + b, |u| problem.g().prox(step, u).unwrap_or_else(|_| u.clone()), residual)
}

/// FISTA for Lasso working directly with `A`, stopping on the KKT residual.
pub fn fista_lasso(inst: &LassoInstance, x0: &DVector<f64>, tol: f64, max_iter: usize) -> FistaOutcome {
    let gram = crate::linalg::FnOperator::new(inst.a.ncols(), |x: &DVector<f64>| inst.a.tr_mul_vec(&inst.a.mul_vec(x)));
    let lip = power_lambda_max(&gram, 100, 7) * 1.02;
    let step = if lip > 0.0 { 1.0 / lip } else { 1.0 };
    let atb = inst.a.tr_mul_vec(&inst.b);
    let l1 = L1Norm { lambda: inst.lambda };
    fista_core(
        x0,
        tol,
        max_iter,
        step,
        |x| inst.a.tr_mul_vec(&inst.a.mul_vec(x)) - &atb,
        |u| l1.prox(step, u).expect("positive step"),
        |x, g| {
            let s = crate::prox::soft_threshold(&(x - g), inst.lambda);
            (x - s).norm() / (1.0 + x.norm() + g.norm())
        },
    )
}

/// `grad` is affine, so the gradient at the extrapolated point is the same
/// combination of gradients at iterates: one evaluation per iteration.
fn fista_core<Gr, Pr, Re>(
    x0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
    step: f64,
    grad: Gr,
    prox: Pr,
    residual: Re,
) -> FistaOutcome
where
    Gr: Fn(&DVector<f64>) -> DVector<f64>,
    Pr: Fn(&DVector<f64>) -> DVector<f64>,
    Re: Fn(&DVector<f64>, &DVector<f64>) -> f64,
{
    let mut x = x0.clone();
    let mut gx = grad(&x);
    let mut y = x.clone();
    let mut gy = gx.clone();
    let mut t = 1.0f64;
    let mut trace = Vec::new();
    let r0 = residual(&x, &gx);
    if r0 <= tol {
        return FistaOutcome { x, trace: vec![r0], iterations: 0, converged: true };
    }
    let mut best = (r0, x.clone());
    for k in 1..=max_iter {
        let x_new = prox(&(&y - &gy * step));
        let g_new = grad(&x_new);
        let r = residual(&x_new, &g_new);
        trace.push(r);
        if r < best.0 {
            best = (r, x_new.clone());
        }
        if r <= tol {
            return FistaOutcome { x: x_new, trace, iterations: k, converged: true };
        }
        let restart = (&y - &x_new).dot(&(&x_new - &x)) > 0.0;
        if restart {
            t = 1.0;
            y = x_new.clone();
            gy = g_new.clone();
        } else {
            let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_new;
            y = &x_new * (1.0 + beta) - &x * beta;
            gy = &g_new * (1.0 + beta) - &gx * beta;
            t = t_new;
        }
        x = x_new;
        gx = g_new;
    }
    FistaOutcome { x: best.1, trace, iterations: max_iter, converged: false }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Slbqp,
    Lasso,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Cnfb,
    Cnal,
    Fista,
    Grnmw,
    Grnmwm,
}

impl SolverKind {
    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::Cnfb => "cnfb",
            SolverKind::Cnal => "cnal",
            SolverKind::Fista => "fista",
            SolverKind::Grnmw => "grnmw",
            SolverKind::Grnmwm => "grnmwm",
        }
    }
}

/// One problem: generated (`n` and `seed`) or read from a LIBSVM `file`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    #[serde(default)]
    pub n: Option<usize>,
    /// Rows of the Lasso design.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub rank_frac: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub lambda_c: Option<f64>,
    /// SVM box bound for LIBSVM-built SLBQPs.
    #[serde(default)]
    pub c_reg: Option<f64>,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        let generated = self.n.is_some();
        let from_file = self.file.is_some();
        if generated == from_file {
            return Err(BenchError::Config("exactly one of n (generated) and file must be set".into()));
        }
        if let Some(rf) = self.rank_frac {
            if !(rf > 0.0 && rf <= 1.0) {
                return Err(BenchError::Config(format!("rank_frac must lie in (0, 1], got {rf}")));
            }
        }
        if self.lambda_c.is_some_and(|l| !(l > 0.0)) || self.c_reg.is_some_and(|c| !(c > 0.0)) {
            return Err(BenchError::Config("lambda_c and c_reg must be positive".into()));
        }
        Ok(())
    }

    pub fn id(&self) -> String {
        match (&self.file, self.kind) {
            (Some(p), _) => p.file_name().map_or_else(|| p.display().to_string(), |f| f.to_string_lossy().into_owned()),
            (None, ProblemKind::Slbqp) => format!("slbqp-seed{}", self.seed.unwrap_or(0)),
            (None, ProblemKind::Lasso) => format!("lasso-seed{}", self.seed.unwrap_or(0)),
        }
    }
}

/// A loaded problem ready for solving.
#[derive(Debug, Clone)]
pub enum LoadedProblem {
    Slbqp(SlbqpInstance),
    Lasso(LassoInstance),
}

impl LoadedProblem {
    pub fn size(&self) -> String {
        match self {
            LoadedProblem::Slbqp(inst) => match &inst.q {
                QuadraticOperator::Gram { c, .. } => format!("{}({})", inst.dim(), c.nrows()),
                QuadraticOperator::Dense(_) => format!("{}", inst.dim()),
            },
            LoadedProblem::Lasso(inst) => format!("{};{}", inst.a.nrows(), inst.a.ncols()),
        }
    }

    pub fn residual(&self, x: &DVector<f64>) -> f64 {
        match self {
            LoadedProblem::Slbqp(inst) => slbqp_residual(inst, x),
            LoadedProblem::Lasso(inst) => kkt_residual_lasso(&inst.a, &inst.b, inst.lambda, x),
        }
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        match self {
            LoadedProblem::Slbqp(inst) => inst.objective(x),
            LoadedProblem::Lasso(inst) => inst.objective(x),
        }
    }
}

pub fn load_problem(spec: &ProblemSpec) -> Result<LoadedProblem, BenchError> {
    spec.validate()?;
    if let Some(path) = &spec.file {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let (features, labels) = parse_libsvm(file)?;
        let features = DataMatrix::Sparse(features);
        return Ok(match spec.kind {
            ProblemKind::Slbqp => LoadedProblem::Slbqp(build_svm_dual(&features, &labels, spec.c_reg.unwrap_or(1.0))?),
            ProblemKind::Lasso => LoadedProblem::Lasso(build_lasso(features, labels, spec.lambda_c.unwrap_or(1e-3))?),
        });
    }
    let n = spec.n.expect("validated");
    let seed = spec.seed.unwrap_or(0);
    Ok(match spec.kind {
        ProblemKind::Slbqp => {
            let r = ((spec.rank_frac.unwrap_or(1.0) * n as f64).round() as usize).clamp(1, n);
            LoadedProblem::Slbqp(gen_random_slbqp(n, r, seed)?)
        }
        ProblemKind::Lasso => {
            let m = spec.m.unwrap_or((n / 5).max(1));
            LoadedProblem::Lasso(gen_random_lasso(m, n, spec.lambda_c.unwrap_or(1e-3), seed)?)
        }
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    pub problems: Vec<ProblemSpec>,
    pub solvers: Vec<SolverKind>,
    pub tol: f64,
    pub max_iter: usize,
    #[serde(default)]
    pub parallel: bool,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if !(self.tol > 0.0) {
            return Err(BenchError::Config(format!("tol must be > 0, got {}", self.tol)));
        }
        for p in &self.problems {
            p.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub problem: String,
    pub size: String,
    pub solver: String,
    pub time_s: f64,
    pub residual: f64,
    pub objective: f64,
    pub iters: usize,
    /// Total inner iterations for nested solvers.
    pub inner_iters: Option<usize>,
    pub status: String,
}

impl BenchRow {
    pub fn converged(&self) -> bool {
        self.status == "converged"
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub residual_definitions: Vec<String>,
    pub rows: Vec<BenchRow>,
    pub versions: serde_json::Value,
}

impl BenchReport {
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(BenchRow::converged)
    }

    pub fn write_json<W: std::io::Write>(&self, w: W) -> Result<(), BenchError> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), BenchError> {
        write_rows_csv(&self.rows, w)
    }
}

/// CSV with one header line and one record per row.
pub fn write_rows_csv<W: std::io::Write>(rows: &[BenchRow], w: W) -> Result<(), BenchError> {
    let mut wtr = csv::Writer::from_writer(w);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Outcome of one solver run, including the trace for `--trace`.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub row: BenchRow,
    pub x: DVector<f64>,
    pub trace: serde_json::Value,
}

fn status_name(s: SolveStatus) -> String {
    match s {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxIter => "max_iter",
        SolveStatus::LinesearchFailure => "linesearch_failure",
        SolveStatus::DirectionFailure => "direction_failure",
        SolveStatus::MuEscalationExhausted => "mu_escalation_exhausted",
    }
    .into()
}

fn fbe_params(tol: f64, max_iter: usize) -> GrnmParams {
    GrnmParams { grad_tol: (0.1 * tol).min(1e-11), max_iter, ..cnfb_default_params() }
}

fn run_fbe<G: Proxable>(
    problem: &QuadraticComposite<G>,
    solver: SolverKind,
    tol: f64,
    max_iter: usize,
) -> Result<(SolveReport, DVector<f64>), BenchError> {
    let x0 = DVector::zeros(problem.dim());
    let params = fbe_params(tol, max_iter);
    let report = match solver {
        SolverKind::Grnmw => {
            let p = GrnmParams { regularization: Regularization::Identity, ..params };
            crate::newton::grnm_w_solve(&FbeOracle::new(problem, Default::default()), &x0, &p)
                .map_err(FbeError::from)?
        }
        SolverKind::Grnmwm => {
            let p = WmParams { base: params, ..WmParams::default() };
            grnm_wm_solve(&FbeOracle::new(problem, Default::default()), &x0, &p).map_err(FbeError::from)?
        }
        _ => {
            let out = cnfb_solve(problem, &x0, &params)?;
            return Ok((out.report, out.primal));
        }
    };
    let primal = fbe_eval(problem, &report.final_x)?.v;
    Ok((report, primal))
}

/// Runs one solver on one loaded problem; timing excludes loading.
pub fn run_single(
    id: &str,
    problem: &LoadedProblem,
    solver: SolverKind,
    tol: f64,
    max_iter: usize,
) -> Result<RunOutcome, BenchError> {
    let size = problem.size();
    let start = Instant::now();
    let (x, iters, inner_iters, status, trace) = match (problem, solver) {
        (LoadedProblem::Slbqp(_), SolverKind::Cnal) => {
            return Err(BenchError::Config("cnal applies to lasso problems only".into()));
        }
        (LoadedProblem::Lasso(inst), SolverKind::Cnal) => {
            let params = CnalParams { tol, max_outer: max_iter, ..CnalParams::default() };
            let rep = cnal_solve_lasso(inst, &params).map_err(|e| BenchError::Config(e.to_string()))?;
            let status = match rep.status {
                CnalStatus::Converged => "converged",
                CnalStatus::MaxOuterIterations => "max_iter",
                CnalStatus::InnerSolveFailure => "inner_solve_failure",
            };
            let trace = serde_json::to_value(&rep.outer)?;
            (rep.x().clone(), rep.outer_iterations(), Some(rep.total_inner_iterations), status.to_string(), trace)
        }
        (LoadedProblem::Lasso(inst), SolverKind::Fista) => {
            let out = fista_lasso(inst, &DVector::zeros(inst.a.ncols()), tol, max_iter);
            let status = if out.converged { "converged" } else { "max_iter" };
            let trace = serde_json::to_value(&out.trace)?;
            (out.x, out.iterations, None, status.to_string(), trace)
        }
        (LoadedProblem::Slbqp(inst), SolverKind::Fista) => {
            let prob = inst.to_problem()?;
            let out = fista_baseline(&prob, &DVector::zeros(inst.dim()), tol, max_iter, |x, _| slbqp_residual(inst, x));
            let status = if out.converged { "converged" } else { "max_iter" };
            let trace = serde_json::to_value(&out.trace)?;
            (out.x, out.iterations, None, status.to_string(), trace)
        }
        (LoadedProblem::Slbqp(inst), _) => {
            let prob = inst.to_problem()?;
            let (rep, primal) = run_fbe(&prob, solver, tol, max_iter)?;
            let trace = serde_json::to_value(&rep.iterates)?;
            (primal, rep.iterations(), None, status_name(rep.status), trace)
        }
        (LoadedProblem::Lasso(inst), _) => {
            let atb = inst.a.tr_mul_vec(&inst.b);
            let prob = QuadraticComposite::new(
                QuadraticOperator::gram(inst.a.clone()),
                -atb,
                L1Norm { lambda: inst.lambda },
                None,
            )?;
            let (rep, primal) = run_fbe(&prob, solver, tol, max_iter)?;
            let trace = serde_json::to_value(&rep.iterates)?;
            (primal, rep.iterations(), None, status_name(rep.status), trace)
        }
    };
    let time_s = start.elapsed().as_secs_f64();
    let residual = problem.residual(&x);
    let mut status = status;
    // Solvers stop on their own criteria; the row reports the common residual.
    if status == "converged" && residual > tol {
        status = "residual_above_tol".into();
    }
    let row = BenchRow {
        problem: id.to_string(),
        size,
        solver: solver.name().into(),
        time_s,
        residual,
        objective: problem.objective(&x),
        iters,
        inner_iters,
        status,
    };
    Ok(RunOutcome { row, x, trace })
}

fn failed_row(id: &str, size: String, solver: SolverKind, err: &BenchError) -> BenchRow {
    BenchRow {
        problem: id.to_string(),
        size,
        solver: solver.name().into(),
        time_s: 0.0,
        residual: f64::NAN,
        objective: f64::NAN,
        iters: 0,
        inner_iters: None,
        status: format!("error: {err}"),
    }
}

/// Runs every (problem, solver) pair; individual failures become rows.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchReport, BenchError> {
    config.validate()?;
    let mut jobs = Vec::new();
    for spec in &config.problems {
        let problem = load_problem(spec)?;
        for &solver in &config.solvers {
            jobs.push((spec.id(), problem.clone(), solver));
        }
    }
    let run = |(id, problem, solver): &(String, LoadedProblem, SolverKind)| {
        match run_single(id, problem, *solver, config.tol, config.max_iter) {
            Ok(out) => out.row,
            Err(e) => failed_row(id, problem.size(), *solver, &e),
        }
    };
    let rows = if config.parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = jobs.iter().map(|job| s.spawn(move || run(job))).collect();
            handles.into_iter().map(|h| h.join().expect("benchmark thread panicked")).collect()
        })
    } else {
        jobs.iter().map(run).collect()
    };
    Ok(BenchReport {
        config: config.clone(),
        residual_definitions: vec![SLBQP_RESIDUAL_DEFINITION.into(), LASSO_RESIDUAL_DEFINITION.into()],
        rows,
        versions: serde_json::json!({ "nsnewton": env!("CARGO_PKG_VERSION") }),
    })
}
