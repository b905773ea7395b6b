//! LIBSVM input, seeded instance generators, problem builders and a small
//! suite of `C^{1,1}` test functions.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fbe::{FbeError, QuadraticComposite, QuadraticOperator};
use crate::newton::SecondOrderOracle;
use crate::prox::{BoxHyperplane, BoxHyperplaneIndicator, ProxError};

pub use crate::matrix::{DataMatrix, MatrixError, SparseMatrix};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {msg}")]
    MalformedLine { line: usize, msg: String },
    #[error("line {line}: feature indices must be strictly increasing")]
    NonMonotoneIndex { line: usize },
    #[error("label {label} at position {index} is not +1 or -1")]
    BadLabels { index: usize, label: f64 },
    #[error("A^T b vanishes, so lambda would be zero")]
    ZeroData,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unsupported envelope: {0}")]
    Envelope(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Prox(#[from] ProxError),
}

/// Reads `<label> <idx>:<val> ...` lines with 1-based, strictly increasing
/// indices. Tabs separate like spaces and `#` starts a comment.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<(SparseMatrix, DVector<f64>), DataError> {
    let mut labels = Vec::new();
    let mut row_ptr = vec![0];
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    let mut n_cols = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let content = line.split('#').next().unwrap_or("");
        let mut tokens = content.split_whitespace();
        let Some(label) = tokens.next() else { continue };
        let label: f64 = label.parse().map_err(|_| DataError::MalformedLine {
            line: lineno,
            msg: format!("bad label {label:?}"),
        })?;
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| DataError::MalformedLine {
                line: lineno,
                msg: format!("expected idx:val, got {tok:?}"),
            })?;
            let idx: usize = idx.parse().map_err(|_| DataError::MalformedLine {
                line: lineno,
                msg: format!("bad index {idx:?}"),
            })?;
            if idx == 0 {
                return Err(DataError::MalformedLine { line: lineno, msg: "indices are 1-based".into() });
            }
            let val: f64 = val.parse().map_err(|_| DataError::MalformedLine {
                line: lineno,
                msg: format!("bad value {val:?}"),
            })?;
            if idx <= last {
                return Err(DataError::NonMonotoneIndex { line: lineno });
            }
            last = idx;
            n_cols = n_cols.max(idx);
            col_idx.push(idx - 1);
            values.push(val);
        }
        labels.push(label);
        row_ptr.push(col_idx.len());
    }
    let m = SparseMatrix::new(labels.len(), n_cols, row_ptr, col_idx, values)?;
    Ok((m, DVector::from_vec(labels)))
}

pub fn parse_libsvm_str(s: &str) -> Result<(SparseMatrix, DVector<f64>), DataError> {
    parse_libsvm(s.as_bytes())
}

/// Writes features and labels at full round-trip precision.
pub fn write_libsvm<W: Write>(mut w: W, features: &SparseMatrix, labels: &DVector<f64>) -> Result<(), DataError> {
    if labels.len() != features.n_rows() {
        return Err(DataError::InvalidParams(format!(
            "{} labels for {} rows",
            labels.len(),
            features.n_rows()
        )));
    }
    for i in 0..features.n_rows() {
        write!(w, "{:?}", labels[i])?;
        for (j, v) in features.row(i) {
            write!(w, " {}:{:?}", j + 1, v)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn gaussian_matrix(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = r.sample(StandardNormal);
        }
    }
    m
}

fn gaussian_vector(len: usize, r: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_iterator(len, (0..len).map(|_| r.sample::<f64, _>(StandardNormal)))
}

/// `min 0.5 x^T Q x + c^T x` subject to `<a, x> = b`, `l <= x <= L`.
#[derive(Debug, Clone)]
pub struct SlbqpInstance {
    pub q: QuadraticOperator,
    pub c_lin: DVector<f64>,
    pub constraint: BoxHyperplane,
    pub seed: Option<u64>,
}

impl SlbqpInstance {
    pub fn dim(&self) -> usize {
        self.c_lin.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&self.q.apply(x)) + self.c_lin.dot(x)
    }

    pub fn to_problem(&self) -> Result<QuadraticComposite<BoxHyperplaneIndicator>, FbeError> {
        QuadraticComposite::new(
            self.q.clone(),
            self.c_lin.clone(),
            BoxHyperplaneIndicator::new(self.constraint.clone()),
            None,
        )
    }
}

/// The default constraint `e^T x = 0`, `-1 <= x <= 1`.
pub fn default_slbqp_constraint(n: usize) -> BoxHyperplane {
    BoxHyperplane::new(
        DVector::from_element(n, 1.0),
        0.0,
        DVector::from_element(n, -1.0),
        DVector::from_element(n, 1.0),
    )
    .expect("default constraint contains the origin")
}

/// `Q = C^T C` with standard normal `C` of size `r x n`, standard normal `c`.
pub fn gen_random_slbqp(n: usize, r: usize, seed: u64) -> Result<SlbqpInstance, DataError> {
    gen_random_slbqp_with(n, r, seed, default_slbqp_constraint(n))
}

pub fn gen_random_slbqp_with(
    n: usize,
    r: usize,
    seed: u64,
    constraint: BoxHyperplane,
) -> Result<SlbqpInstance, DataError> {
    if n == 0 || r == 0 || r > n {
        return Err(DataError::InvalidParams(format!("need 1 <= r <= n, got n={n}, r={r}")));
    }
    if constraint.dim() != n {
        return Err(DataError::InvalidParams("constraint dimension differs from n".into()));
    }
    let c = gaussian_matrix(r, n, &mut rng(seed, 0));
    let c_lin = gaussian_vector(n, &mut rng(seed, 1));
    Ok(SlbqpInstance { q: QuadraticOperator::gram(DataMatrix::Dense(c)), c_lin, constraint, seed: Some(seed) })
}

/// Dual of the linear-kernel soft-margin SVM: `Q_ij = y_i y_j x_i^T x_j`,
/// `c = -e`, `y^T lambda = 0`, `0 <= lambda <= C`.
pub fn build_svm_dual(features: &DataMatrix, labels: &DVector<f64>, c_reg: f64) -> Result<SlbqpInstance, DataError> {
    let n = features.nrows();
    if labels.len() != n {
        return Err(DataError::InvalidParams(format!("{} labels for {n} points", labels.len())));
    }
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l != 1.0 && l != -1.0) {
        return Err(DataError::BadLabels { index, label });
    }
    if !(c_reg > 0.0) {
        return Err(DataError::InvalidParams(format!("C must be > 0, got {c_reg}")));
    }
    // Q = Z Z^T with Z = diag(y) X, stored as C^T C for C = Z^T.
    let z = match features {
        DataMatrix::Dense(x) => {
            let mut z = x.clone();
            for (i, mut row) in z.row_iter_mut().enumerate() {
                row *= labels[i];
            }
            DataMatrix::Dense(z)
        }
        DataMatrix::Sparse(x) => {
            let mut z = x.clone();
            z.scale_rows(labels);
            DataMatrix::Sparse(z)
        }
    };
    let constraint = BoxHyperplane::new(
        labels.clone(),
        0.0,
        DVector::zeros(n),
        DVector::from_element(n, c_reg),
    )?;
    Ok(SlbqpInstance {
        q: QuadraticOperator::gram(z.transpose()),
        c_lin: DVector::from_element(n, -1.0),
        constraint,
        seed: None,
    })
}

/// `min 0.5 ||A x - b||^2 + lambda ||x||_1`.
#[derive(Debug, Clone)]
pub struct LassoInstance {
    pub a: DataMatrix,
    pub b: DVector<f64>,
    pub lambda: f64,
}

impl LassoInstance {
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * (self.a.mul_vec(x) - &self.b).norm_squared() + self.lambda * x.lp_norm(1)
    }
}

/// Sets `lambda = lambda_c ||A^T b||_inf`.
pub fn build_lasso(features: DataMatrix, targets: DVector<f64>, lambda_c: f64) -> Result<LassoInstance, DataError> {
    if !(lambda_c > 0.0) {
        return Err(DataError::InvalidParams(format!("lambda_c must be > 0, got {lambda_c}")));
    }
    if targets.len() != features.nrows() {
        return Err(DataError::InvalidParams(format!(
            "{} targets for {} rows",
            targets.len(),
            features.nrows()
        )));
    }
    let scale = features.tr_mul_vec(&targets).amax();
    if scale == 0.0 {
        return Err(DataError::ZeroData);
    }
    Ok(LassoInstance { a: features, b: targets, lambda: lambda_c * scale })
}

/// Gaussian `m x n` design, `b = A x0 + 0.01 noise` with 10% nonzeros in `x0`.
pub fn gen_random_lasso(m: usize, n: usize, lambda_c: f64, seed: u64) -> Result<LassoInstance, DataError> {
    if m == 0 || n == 0 {
        return Err(DataError::InvalidParams("m and n must be positive".into()));
    }
    let a = gaussian_matrix(m, n, &mut rng(seed, 2));
    let mut r = rng(seed, 3);
    let k = (n / 10).max(1);
    let mut x0 = DVector::zeros(n);
    for _ in 0..k {
        let i = r.random_range(0..n);
        x0[i] = r.sample::<f64, _>(StandardNormal);
    }
    let noise = gaussian_vector(m, &mut rng(seed, 4));
    let b = &a * x0 + noise * 0.01;
    build_lasso(DataMatrix::Dense(a), b, lambda_c)
}

/// Moreau envelope of `|.|` with parameter `gamma`.
pub fn huber(t: f64, gamma: f64) -> f64 {
    if t.abs() <= gamma {
        t * t / (2.0 * gamma)
    } else {
        t.abs() - gamma / 2.0
    }
}

fn huber_grad(t: f64, gamma: f64) -> f64 {
    (t / gamma).clamp(-1.0, 1.0)
}

fn huber_hess(t: f64, gamma: f64) -> f64 {
    if t.abs() <= gamma { 1.0 / gamma } else { 0.0 }
}

/// `sum_i e_gamma|.|(x_i)`.
#[derive(Debug, Clone)]
pub struct HuberSum {
    pub n: usize,
    pub gamma: f64,
}

impl SecondOrderOracle for HuberSum {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        x.iter().map(|&t| huber(t, self.gamma)).sum()
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(|t| huber_grad(t, self.gamma))
    }
    fn hessian_selection(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&x.map(|t| huber_hess(t, self.gamma)))
    }
}

/// `0.5 sum_i max(x_i, 0)^2`.
#[derive(Debug, Clone)]
pub struct HalfQuadratic {
    pub n: usize,
}

impl SecondOrderOracle for HalfQuadratic {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.iter().map(|&t| t.max(0.0).powi(2)).sum::<f64>()
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(|t| t.max(0.0))
    }
    fn hessian_selection(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&x.map(|t| if t > 0.0 { 1.0 } else { 0.0 }))
    }
}

/// `0.5 lambda ||x||^2 + 0.5 sum_i max(0, 1 - y_i <a_i, x>)^2`.
#[derive(Debug, Clone)]
pub struct SquaredHingeSvm {
    pub points: DMatrix<f64>,
    pub labels: DVector<f64>,
    pub lambda: f64,
}

impl SquaredHingeSvm {
    fn margins(&self, x: &DVector<f64>) -> DVector<f64> {
        let s = &self.points * x;
        DVector::from_fn(s.len(), |i, _| (1.0 - self.labels[i] * s[i]).max(0.0))
    }
}

impl SecondOrderOracle for SquaredHingeSvm {
    fn dim(&self) -> usize {
        self.points.ncols()
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * self.lambda * x.norm_squared() + 0.5 * self.margins(x).norm_squared()
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let r = self.margins(x).component_mul(&self.labels);
        x * self.lambda - self.points.tr_mul(&r)
    }
    fn hessian_selection(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let r = self.margins(x);
        let n = self.dim();
        let mut h = DMatrix::identity(n, n) * self.lambda;
        for i in 0..self.points.nrows() {
            if r[i] > 0.0 {
                let row = self.points.row(i);
                h += row.transpose() * row;
            }
        }
        h
    }
}

/// `0.5 x^T A x - b^T x` with `A` positive-definite.
#[derive(Debug, Clone)]
pub struct StrongQuadratic {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl SecondOrderOracle for StrongQuadratic {
    fn dim(&self) -> usize {
        self.b.len()
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.a * x)) - self.b.dot(x)
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x - &self.b
    }
    fn hessian_selection(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.a.clone()
    }
}

/// `w(t) = 0.5 t^2 - 2 e_1|.|(t)`: concave on `|t| < 1`, minima `w(+-2) = -1`.
fn well(t: f64) -> f64 {
    0.5 * t * t - 2.0 * huber(t, 1.0)
}

fn well_grad(t: f64) -> f64 {
    t - 2.0 * huber_grad(t, 1.0)
}

fn well_hess(t: f64) -> f64 {
    if t.abs() < 1.0 { -1.0 } else { 1.0 }
}

/// `0.5 x_1^2 + w(x_2)`: saddle at the origin, minima `(0, +-2)` with value -1.
#[derive(Debug, Clone, Default)]
pub struct DoubleWell;

impl SecondOrderOracle for DoubleWell {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x[0] * x[0] + well(x[1])
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_column_slice(&[x[0], well_grad(x[1])])
    }
    fn hessian_selection(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, well_hess(x[1])]))
    }
}

/// `sum_i w(x_i) + (beta/2) sum_i (x_i - x_{i+1})^2`, global minimum `-n`
/// at `x = +-2 e`.
#[derive(Debug, Clone)]
pub struct CoupledDoubleWell {
    pub n: usize,
    pub beta: f64,
}

impl SecondOrderOracle for CoupledDoubleWell {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        let wells: f64 = x.iter().map(|&t| well(t)).sum();
        let coupling: f64 = (0..self.n - 1).map(|i| (x[i] - x[i + 1]).powi(2)).sum();
        wells + 0.5 * self.beta * coupling
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = x.map(well_grad);
        for i in 0..self.n - 1 {
            let d = self.beta * (x[i] - x[i + 1]);
            g[i] += d;
            g[i + 1] -= d;
        }
        g
    }
    fn hessian_selection(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::from_diagonal(&x.map(well_hess));
        for i in 0..self.n - 1 {
            h[(i, i)] += self.beta;
            h[(i + 1, i + 1)] += self.beta;
            h[(i, i + 1)] -= self.beta;
            h[(i + 1, i)] -= self.beta;
        }
        h
    }
}

/// A suite member with its known facts.
pub struct C11Function {
    pub name: &'static str,
    pub oracle: Box<dyn SecondOrderOracle + Send + Sync>,
    pub convex: bool,
    /// Global minimum value when known in closed form.
    pub min_value: Option<f64>,
    /// Description of the stationary set.
    pub stationary: &'static str,
}

pub fn builtin_c11_suite() -> Vec<C11Function> {
    let svm_points = DMatrix::from_row_slice(6, 2, &[2.0, 1.0, 1.5, 2.0, 3.0, 0.5, -1.0, -1.5, -2.0, 0.0, 0.5, -2.5]);
    let svm_labels = DVector::from_column_slice(&[1.0, 1.0, 1.0, -1.0, -1.0, -1.0]);
    let qa = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, -0.5, 0.0, -0.5, 2.0]);
    let qb = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
    let q_min = -0.5 * qb.dot(&qa.clone().lu().solve(&qb).expect("positive-definite"));
    vec![
        C11Function {
            name: "huber",
            oracle: Box::new(HuberSum { n: 3, gamma: 1.0 }),
            convex: true,
            min_value: Some(0.0),
            stationary: "the origin",
        },
        C11Function {
            name: "half-quadratic",
            oracle: Box::new(HalfQuadratic { n: 3 }),
            convex: true,
            min_value: Some(0.0),
            stationary: "the nonpositive orthant",
        },
        C11Function {
            name: "squared-hinge-svm",
            oracle: Box::new(SquaredHingeSvm { points: svm_points, labels: svm_labels, lambda: 0.1 }),
            convex: true,
            min_value: None,
            stationary: "the unique minimizer",
        },
        C11Function {
            name: "strong-quadratic",
            oracle: Box::new(StrongQuadratic { a: qa, b: qb }),
            convex: true,
            min_value: Some(q_min),
            stationary: "A^-1 b",
        },
        C11Function {
            name: "double-well",
            oracle: Box::new(DoubleWell),
            convex: false,
            min_value: Some(-1.0),
            stationary: "saddle (0, 0) and minima (0, +-2)",
        },
        C11Function {
            name: "coupled-double-well",
            oracle: Box::new(CoupledDoubleWell { n: 4, beta: 0.25 }),
            convex: false,
            min_value: Some(-4.0),
            stationary: "global minima +-2e, plus saddles and mixed local minima",
        },
    ]
}

/// Self-describing JSON wrapper for generated or loaded instances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceEnvelope {
    #[serde(rename = "type")]
    pub kind: String,
    pub shape: Vec<usize>,
    pub data: serde_json::Value,
    pub seed: Option<u64>,
    pub params: serde_json::Value,
}

fn bound_to_json(v: &DVector<f64>) -> Vec<Option<f64>> {
    v.iter().map(|x| x.is_finite().then_some(*x)).collect()
}

fn bound_from_json(v: &[Option<f64>], missing: f64) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().map(|x| x.unwrap_or(missing)))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn rows_to_matrix(rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>, DataError> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(DataError::Envelope("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

#[derive(Serialize, Deserialize)]
struct SlbqpData {
    /// Either the factor `C` (with `Q = C^T C`) or `Q` itself.
    c_factor: Option<Vec<Vec<f64>>>,
    q: Option<Vec<Vec<f64>>>,
    c_lin: Vec<f64>,
    a: Vec<f64>,
    b: f64,
    lower: Vec<Option<f64>>,
    upper: Vec<Option<f64>>,
}

#[derive(Serialize, Deserialize)]
struct LassoData {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    lambda: f64,
}

impl SlbqpInstance {
    pub fn to_envelope(&self) -> InstanceEnvelope {
        let (c_factor, q) = match &self.q {
            QuadraticOperator::Gram { c, .. } => (Some(matrix_to_rows(&c.to_dense())), None),
            QuadraticOperator::Dense(m) => (None, Some(matrix_to_rows(m))),
        };
        let data = SlbqpData {
            c_factor,
            q,
            c_lin: self.c_lin.iter().copied().collect(),
            a: self.constraint.a.iter().copied().collect(),
            b: self.constraint.b,
            lower: bound_to_json(&self.constraint.lower),
            upper: bound_to_json(&self.constraint.upper),
        };
        InstanceEnvelope {
            kind: "slbqp".into(),
            shape: vec![self.dim()],
            data: serde_json::to_value(data).expect("plain data serializes"),
            seed: self.seed,
            params: serde_json::json!({}),
        }
    }

    pub fn from_envelope(env: &InstanceEnvelope) -> Result<Self, DataError> {
        if env.kind != "slbqp" {
            return Err(DataError::Envelope(format!("expected slbqp, got {}", env.kind)));
        }
        let d: SlbqpData = serde_json::from_value(env.data.clone())?;
        let n = d.c_lin.len();
        let q = match (d.c_factor, d.q) {
            (Some(c), None) => QuadraticOperator::gram(DataMatrix::Dense(rows_to_matrix(&c, n)?)),
            (None, Some(q)) => QuadraticOperator::Dense(rows_to_matrix(&q, n)?),
            _ => return Err(DataError::Envelope("exactly one of c_factor and q required".into())),
        };
        let constraint = BoxHyperplane::new(
            DVector::from_vec(d.a),
            d.b,
            bound_from_json(&d.lower, f64::NEG_INFINITY),
            bound_from_json(&d.upper, f64::INFINITY),
        )?;
        Ok(Self { q, c_lin: DVector::from_vec(d.c_lin), constraint, seed: env.seed })
    }
}

impl LassoInstance {
    pub fn to_envelope(&self, seed: Option<u64>) -> InstanceEnvelope {
        let data = LassoData {
            a: matrix_to_rows(&self.a.to_dense()),
            b: self.b.iter().copied().collect(),
            lambda: self.lambda,
        };
        InstanceEnvelope {
            kind: "lasso".into(),
            shape: vec![self.a.nrows(), self.a.ncols()],
            data: serde_json::to_value(data).expect("plain data serializes"),
            seed,
            params: serde_json::json!({}),
        }
    }

    pub fn from_envelope(env: &InstanceEnvelope) -> Result<Self, DataError> {
        if env.kind != "lasso" {
            return Err(DataError::Envelope(format!("expected lasso, got {}", env.kind)));
        }
        let d: LassoData = serde_json::from_value(env.data.clone())?;
        let ncols = env.shape.get(1).copied().unwrap_or(0);
        let a = rows_to_matrix(&d.a, ncols)?;
        if d.b.len() != a.nrows() {
            return Err(DataError::Envelope("b length differs from row count".into()));
        }
        Ok(Self { a: DataMatrix::Dense(a), b: DVector::from_vec(d.b), lambda: d.lambda })
    }
}
