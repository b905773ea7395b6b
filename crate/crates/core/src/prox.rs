//! Proximal mappings, Moreau envelopes and coderivative selections for the
//! `l1` norm and for indicators of the box-hyperplane polyhedron
//! `{x : <a, x> = b, l <= x <= L}`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProxError {
    #[error("polyhedron is empty or the multiplier equation has no root")]
    InfeasiblePolyhedron,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("active set of size {size} exceeds enumeration limit {limit}")]
    ActiveSetTooLarge { size: usize, limit: usize },
}

/// Largest active set enumerated by [`coderivative_membership_check`].
pub const MEMBERSHIP_ENUMERATION_LIMIT: usize = 20;

/// Scale-aware activity tolerance `1e-11 (1 + ||u||)`.
pub fn default_active_tol(u: &DVector<f64>) -> f64 {
    1e-11 * (1.0 + u.norm())
}

/// Symmetric selection `P = Sigma - s s^T` where `Sigma` is a diagonal 0/1
/// mask and `s` (if present) is a unit vector supported on the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOperator {
    pub mask: Vec<bool>,
    pub rank_one: Option<DVector<f64>>,
}

impl SelectionOperator {
    pub fn identity(n: usize) -> Self {
        Self { mask: vec![true; n], rank_one: None }
    }

    pub fn diagonal(mask: Vec<bool>) -> Self {
        Self { mask, rank_one: None }
    }

    pub fn dim(&self) -> usize {
        self.mask.len()
    }

    pub fn free_indices(&self) -> Vec<usize> {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::from_fn(v.len(), |i, _| if self.mask[i] { v[i] } else { 0.0 });
        if let Some(s) = &self.rank_one {
            let c = s.dot(v);
            out.axpy(-c, s, 1.0);
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut p = DMatrix::from_fn(n, n, |i, j| if i == j && self.mask[i] { 1.0 } else { 0.0 });
        if let Some(s) = &self.rank_one {
            p -= s * s.transpose();
        }
        p
    }
}

/// A proper lower-semicontinuous convex function with computable prox.
pub trait Proxable {
    /// Function value, `f64::INFINITY` outside the domain.
    fn value(&self, x: &DVector<f64>) -> f64;

    fn prox(&self, gamma: f64, u: &DVector<f64>) -> Result<DVector<f64>, ProxError>;

    /// A linear selection `P` with `P d` in the coderivative of the prox at `u`.
    fn coderivative_selection(
        &self,
        gamma: f64,
        u: &DVector<f64>,
        tol: f64,
    ) -> Result<SelectionOperator, ProxError>;

    /// Prox and selection together, sharing work where possible.
    fn prox_with_selection(
        &self,
        gamma: f64,
        u: &DVector<f64>,
        tol: f64,
    ) -> Result<(DVector<f64>, SelectionOperator), ProxError> {
        Ok((self.prox(gamma, u)?, self.coderivative_selection(gamma, u, tol)?))
    }

    /// `g` evaluated at `prox(gamma, u)`; indicators return 0.
    fn value_at_prox(&self, v: &DVector<f64>) -> f64 {
        self.value(v)
    }

    fn envelope(&self, gamma: f64, x: &DVector<f64>) -> Result<f64, ProxError> {
        moreau_envelope_value(self, gamma, x)
    }

    /// Fenchel conjugate value when available in closed form.
    fn conjugate_value(&self, _z: &DVector<f64>) -> Option<f64> {
        None
    }
}

pub fn soft_threshold(u: &DVector<f64>, kappa: f64) -> DVector<f64> {
    u.map(|ui| ui.signum() * (ui.abs() - kappa).max(0.0))
}

/// Diagonal selection with `P_ii = 1` iff `|u_i| > kappa + tol`.
pub fn soft_threshold_selection(u: &DVector<f64>, kappa: f64, tol: f64) -> SelectionOperator {
    SelectionOperator::diagonal(u.iter().map(|ui| ui.abs() > kappa + tol).collect())
}

/// Membership of `w` in the coderivative of soft-thresholding at `u` in
/// direction `d`, componentwise.
pub fn soft_threshold_coderivative_contains(
    u: &DVector<f64>,
    d: &DVector<f64>,
    w: &DVector<f64>,
    kappa: f64,
    tol: f64,
) -> bool {
    (0..u.len()).all(|i| {
        let (ui, di, wi) = (u[i], d[i], w[i]);
        let near = |a: f64, b: f64| (a - b).abs() <= tol;
        let in_seg = |lo: f64, hi: f64| wi >= lo.min(hi) - tol && wi <= lo.max(hi) + tol;
        if near(ui, kappa) {
            if di > 0.0 {
                near(wi, 0.0) || near(wi, di)
            } else {
                in_seg(0.0, di)
            }
        } else if near(ui, -kappa) {
            if di >= 0.0 {
                in_seg(0.0, di)
            } else {
                near(wi, 0.0) || near(wi, di)
            }
        } else if ui.abs() > kappa {
            near(wi, di)
        } else {
            near(wi, 0.0)
        }
    })
}

/// `lambda ||x||_1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Norm {
    pub lambda: f64,
}

impl Proxable for L1Norm {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.lambda * x.lp_norm(1)
    }

    fn prox(&self, gamma: f64, u: &DVector<f64>) -> Result<DVector<f64>, ProxError> {
        check_gamma(gamma)?;
        Ok(soft_threshold(u, gamma * self.lambda))
    }

    fn coderivative_selection(
        &self,
        gamma: f64,
        u: &DVector<f64>,
        tol: f64,
    ) -> Result<SelectionOperator, ProxError> {
        check_gamma(gamma)?;
        Ok(soft_threshold_selection(u, gamma * self.lambda, tol))
    }

    fn conjugate_value(&self, z: &DVector<f64>) -> Option<f64> {
        let slack = 1e-12 * (1.0 + self.lambda);
        Some(if z.amax() <= self.lambda + slack { 0.0 } else { f64::INFINITY })
    }
}

/// Indicator of `{||x||_inf <= radius}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LInfBallIndicator {
    pub radius: f64,
}

impl Proxable for LInfBallIndicator {
    fn value(&self, x: &DVector<f64>) -> f64 {
        if x.amax() <= self.radius * (1.0 + 1e-12) { 0.0 } else { f64::INFINITY }
    }

    fn prox(&self, _gamma: f64, u: &DVector<f64>) -> Result<DVector<f64>, ProxError> {
        Ok(u.map(|ui| ui.clamp(-self.radius, self.radius)))
    }

    fn coderivative_selection(
        &self,
        _gamma: f64,
        u: &DVector<f64>,
        tol: f64,
    ) -> Result<SelectionOperator, ProxError> {
        Ok(SelectionOperator::diagonal(u.iter().map(|ui| ui.abs() < self.radius - tol).collect()))
    }

    fn value_at_prox(&self, _v: &DVector<f64>) -> f64 {
        0.0
    }

    fn conjugate_value(&self, z: &DVector<f64>) -> Option<f64> {
        Some(self.radius * z.lp_norm(1))
    }
}

/// The zero function.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Zero;

impl Proxable for Zero {
    fn value(&self, _x: &DVector<f64>) -> f64 {
        0.0
    }

    fn prox(&self, _gamma: f64, u: &DVector<f64>) -> Result<DVector<f64>, ProxError> {
        Ok(u.clone())
    }

    fn coderivative_selection(
        &self,
        _gamma: f64,
        u: &DVector<f64>,
        _tol: f64,
    ) -> Result<SelectionOperator, ProxError> {
        Ok(SelectionOperator::identity(u.len()))
    }

    fn conjugate_value(&self, z: &DVector<f64>) -> Option<f64> {
        Some(if z.amax() == 0.0 { 0.0 } else { f64::INFINITY })
    }
}

/// The polyhedron `{x : <a, x> = b, l <= x <= L}` with `l_i < L_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxHyperplane {
    pub a: DVector<f64>,
    pub b: f64,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl BoxHyperplane {
    pub fn new(
        a: DVector<f64>,
        b: f64,
        lower: DVector<f64>,
        upper: DVector<f64>,
    ) -> Result<Self, ProxError> {
        let n = a.len();
        for len in [lower.len(), upper.len()] {
            if len != n {
                return Err(ProxError::DimensionMismatch { expected: n, got: len });
            }
        }
        if !b.is_finite() || a.iter().any(|v| !v.is_finite()) {
            return Err(ProxError::InvalidParams("a and b must be finite".into()));
        }
        if let Some(i) = (0..n).find(|&i| !(lower[i] < upper[i]) || lower[i].is_nan()) {
            return Err(ProxError::InvalidParams(format!(
                "need l_i < L_i, violated at index {i} ({} >= {})",
                lower[i], upper[i]
            )));
        }
        let set = Self { a, b, lower, upper };
        let (lo, hi) = set.attainable_range();
        let slack = 1e-12 * (1.0 + b.abs());
        if b < lo - slack || b > hi + slack {
            return Err(ProxError::InfeasiblePolyhedron);
        }
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// `[min, max]` of `<a, x>` over the box.
    pub fn attainable_range(&self) -> (f64, f64) {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for i in 0..self.dim() {
            let (m, mm) = term_range(self.a[i], self.lower[i], self.upper[i]);
            lo += m;
            hi += mm;
        }
        (lo, hi)
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.dim()
            && (self.a.dot(x) - self.b).abs() <= tol * (1.0 + self.b.abs())
            && (0..self.dim()).all(|i| x[i] >= self.lower[i] - tol && x[i] <= self.upper[i] + tol)
    }

    fn clamp_at(&self, u: &DVector<f64>, t: f64) -> DVector<f64> {
        DVector::from_fn(u.len(), |i, _| (u[i] - t * self.a[i]).clamp(self.lower[i], self.upper[i]))
    }

    /// Active bound of `x_i` within `tol`: `+1` upper, `-1` lower, `0` none.
    fn active_sign(&self, i: usize, xi: f64, tol: f64) -> i8 {
        if (xi - self.upper[i]).abs() <= tol {
            1
        } else if (xi - self.lower[i]).abs() <= tol {
            -1
        } else {
            0
        }
    }
}

/// `[min, max]` of `a x` for `x in [l, L]`, with `0 * inf = 0`.
fn term_range(a: f64, l: f64, u: f64) -> (f64, f64) {
    if a == 0.0 {
        (0.0, 0.0)
    } else if a > 0.0 {
        (a * l, a * u)
    } else {
        (a * u, a * l)
    }
}

fn check_gamma(gamma: f64) -> Result<(), ProxError> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(ProxError::InvalidParams(format!("gamma must be positive, got {gamma}")))
    }
}

/// Euclidean projection onto the polyhedron, returning `(x, t)` with
/// `x = clamp(u - t a, l, L)` and `<a, x> = b`.
pub fn project_box_hyperplane(
    set: &BoxHyperplane,
    u: &DVector<f64>,
    tol: f64,
) -> Result<(DVector<f64>, f64), ProxError> {
    let n = set.dim();
    if u.len() != n {
        return Err(ProxError::DimensionMismatch { expected: n, got: u.len() });
    }
    let a = &set.a;
    let residual = |t: f64| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            if a[i] != 0.0 {
                s += a[i] * (u[i] - t * a[i]).clamp(set.lower[i], set.upper[i]);
            }
        }
        s - set.b
    };
    // Squared norm of `a` over coordinates free at `t`.
    let free_slope = |t: f64| -> f64 {
        (0..n)
            .filter(|&i| {
                let y = u[i] - t * a[i];
                a[i] != 0.0 && y > set.lower[i] && y < set.upper[i]
            })
            .map(|i| a[i] * a[i])
            .sum()
    };
    let accept = tol * (1.0 + set.b.abs());

    let mut bps = Vec::with_capacity(2 * n);
    for i in 0..n {
        if a[i] != 0.0 {
            if set.lower[i].is_finite() {
                bps.push((u[i] - set.lower[i]) / a[i]);
            }
            if set.upper[i].is_finite() {
                bps.push((u[i] - set.upper[i]) / a[i]);
            }
        }
    }
    bps.sort_by(f64::total_cmp);
    bps.dedup();

    let t = if bps.is_empty() {
        let s = free_slope(0.0);
        let f0 = residual(0.0);
        if s == 0.0 {
            if f0.abs() > accept {
                return Err(ProxError::InfeasiblePolyhedron);
            }
            0.0
        } else {
            f0 / s
        }
    } else {
        let first = bps[0];
        let last = *bps.last().unwrap();
        let f_first = residual(first);
        let f_last = residual(last);
        if f_first < 0.0 {
            let s = free_slope(first - 1.0 - first.abs());
            if s == 0.0 {
                if f_first.abs() > accept {
                    return Err(ProxError::InfeasiblePolyhedron);
                }
                first
            } else {
                first + f_first / s
            }
        } else if f_last > 0.0 {
            let s = free_slope(last + 1.0 + last.abs());
            if s == 0.0 {
                if f_last.abs() > accept {
                    return Err(ProxError::InfeasiblePolyhedron);
                }
                last
            } else {
                last + f_last / s
            }
        } else {
            let (mut lo, mut hi) = (0usize, bps.len() - 1);
            let (mut f_lo, mut f_hi) = (f_first, f_last);
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                let fm = residual(bps[mid]);
                if fm >= 0.0 {
                    lo = mid;
                    f_lo = fm;
                } else {
                    hi = mid;
                    f_hi = fm;
                }
            }
            if f_lo == 0.0 {
                bps[lo]
            } else if f_hi == 0.0 || f_lo == f_hi {
                bps[hi]
            } else {
                bps[lo] + f_lo * (bps[hi] - bps[lo]) / (f_lo - f_hi)
            }
        }
    };
    let x = set.clamp_at(u, t);
    if (a.dot(&x) - set.b).abs() > accept.max(1e-9 * (1.0 + set.b.abs())) {
        return Err(ProxError::InfeasiblePolyhedron);
    }
    Ok((x, t))
}

/// Selection `P = Sigma - Sigma a a^T Sigma / ||Sigma a||^2` at a computed
/// projection `x = Proj(u)`, where `Sigma` masks out coordinates within
/// `tol_active` of a bound.
pub fn projection_selection(set: &BoxHyperplane, x: &DVector<f64>, tol_active: f64) -> SelectionOperator {
    let mask: Vec<bool> = (0..set.dim()).map(|i| set.active_sign(i, x[i], tol_active) == 0).collect();
    let sa = DVector::from_fn(set.dim(), |i, _| if mask[i] { set.a[i] } else { 0.0 });
    let nrm = sa.norm();
    let rank_one = (nrm > 0.0).then(|| sa / nrm);
    SelectionOperator { mask, rank_one }
}

/// Indicator of a [`BoxHyperplane`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoxHyperplaneIndicator {
    pub set: BoxHyperplane,
    pub projection_tol: f64,
}

impl BoxHyperplaneIndicator {
    pub fn new(set: BoxHyperplane) -> Self {
        Self { set, projection_tol: 1e-10 }
    }
}

impl Proxable for BoxHyperplaneIndicator {
    fn value(&self, x: &DVector<f64>) -> f64 {
        if self.set.contains(x, 1e-9) { 0.0 } else { f64::INFINITY }
    }

    fn prox(&self, _gamma: f64, u: &DVector<f64>) -> Result<DVector<f64>, ProxError> {
        Ok(project_box_hyperplane(&self.set, u, self.projection_tol)?.0)
    }

    fn coderivative_selection(
        &self,
        gamma: f64,
        u: &DVector<f64>,
        tol: f64,
    ) -> Result<SelectionOperator, ProxError> {
        Ok(self.prox_with_selection(gamma, u, tol)?.1)
    }

    fn prox_with_selection(
        &self,
        _gamma: f64,
        u: &DVector<f64>,
        tol: f64,
    ) -> Result<(DVector<f64>, SelectionOperator), ProxError> {
        let (x, _) = project_box_hyperplane(&self.set, u, self.projection_tol)?;
        let p = projection_selection(&self.set, &x, tol);
        Ok((x, p))
    }

    fn value_at_prox(&self, _v: &DVector<f64>) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy)]
struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    const ALL: Interval = Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY };

    fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    /// Intersect with `{s : c s = v +- tol}`, or check `|v| <= tol` when `c = 0`.
    fn equal(self, c: f64, v: f64, tol: f64) -> Option<Self> {
        if c == 0.0 {
            return (v.abs() <= tol).then_some(self);
        }
        let (p, q) = ((v - tol) / c, (v + tol) / c);
        let out = Interval { lo: self.lo.max(p.min(q)), hi: self.hi.min(p.max(q)) };
        (!out.is_empty()).then_some(out)
    }

    /// Intersect with `{s : c s <= v + tol}`.
    fn at_most(self, c: f64, v: f64, tol: f64) -> Option<Self> {
        if c == 0.0 {
            return (v >= -tol).then_some(self);
        }
        let bound = (v + tol) / c;
        let out = if c > 0.0 {
            Interval { lo: self.lo, hi: self.hi.min(bound) }
        } else {
            Interval { lo: self.lo.max(bound), hi: self.hi }
        };
        (!out.is_empty()).then_some(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Category {
    /// In `J`.
    Equality,
    /// In `K \ J`.
    Cone,
    /// Active but outside `K`.
    Out,
}

struct MembershipData<'a> {
    set: &'a BoxHyperplane,
    active: Vec<(usize, f64)>,
    z: DVector<f64>,
    w: &'a DVector<f64>,
    y: DVector<f64>,
    tol: f64,
}

impl MembershipData<'_> {
    /// Interval updates for one active coordinate under `cat`.
    fn step(&self, j: usize, s: f64, cat: Category, alpha: Interval, beta: Interval) -> Option<(Interval, Interval)> {
        let (aj, zj, wj, yj, tol) = (self.set.a[j], self.z[j], self.w[j], self.y[j], self.tol);
        match cat {
            Category::Out => Some((alpha.equal(aj, zj, tol)?, beta.equal(aj, yj, tol)?)),
            Category::Cone => {
                if s * wj > tol {
                    return None;
                }
                // s (z_j - alpha a_j) >= 0  <=>  (s a_j) alpha <= s z_j
                Some((alpha.at_most(s * aj, s * zj, tol)?, beta.equal(aj, yj, tol)?))
            }
            Category::Equality => {
                if wj.abs() > tol {
                    return None;
                }
                Some((alpha, beta.at_most(s * aj, s * yj, tol)?))
            }
        }
    }

    /// Whether some feasible point has exactly the bounds in `in_k` active.
    fn face_realizable(&self, in_k: &[bool]) -> bool {
        let set = self.set;
        let mut fixed = 0.0;
        let mut lo = 0.0;
        let mut hi = 0.0;
        let mut any_free = false;
        let mut k_iter = 0;
        let mut bound_of = vec![None; set.dim()];
        for (idx, &(j, s)) in self.active.iter().enumerate() {
            if in_k[idx] {
                bound_of[j] = Some(if s > 0.0 { set.upper[j] } else { set.lower[j] });
            }
            k_iter += 1;
        }
        debug_assert_eq!(k_iter, self.active.len());
        for (j, bound) in bound_of.iter().enumerate() {
            match *bound {
                Some(v) => fixed += set.a[j] * v,
                None => {
                    let (m, mm) = term_range(set.a[j], set.lower[j], set.upper[j]);
                    if set.a[j] != 0.0 {
                        any_free = true;
                    }
                    lo += m;
                    hi += mm;
                }
            }
        }
        let target = set.b - fixed;
        let slack = self.tol * (1.0 + set.b.abs());
        if !any_free {
            return target.abs() <= slack;
        }
        target > lo - slack && target < hi + slack
    }

    fn search(
        &self,
        idx: usize,
        alpha: Interval,
        beta: Interval,
        in_k: &mut Vec<bool>,
    ) -> bool {
        if idx == self.active.len() {
            return self.face_realizable(in_k);
        }
        let (j, s) = self.active[idx];
        for cat in [Category::Equality, Category::Cone, Category::Out] {
            if let Some((al, be)) = self.step(j, s, cat, alpha, beta) {
                in_k[idx] = cat != Category::Out;
                if self.search(idx + 1, al, be, in_k) {
                    return true;
                }
            }
        }
        false
    }
}

fn membership_setup<'a>(
    set: &'a BoxHyperplane,
    u: &DVector<f64>,
    d: &DVector<f64>,
    w: &'a DVector<f64>,
    tol: f64,
) -> Result<Option<(MembershipData<'a>, Interval, Interval)>, ProxError> {
    let n = set.dim();
    for len in [u.len(), d.len(), w.len()] {
        if len != n {
            return Err(ProxError::DimensionMismatch { expected: n, got: len });
        }
    }
    let (x, _) = project_box_hyperplane(set, u, 1e-10)?;
    let scale = 1.0 + u.norm() + d.norm() + w.norm();
    let tol = tol * scale;
    let tol_active = default_active_tol(u);
    let z = w + d;
    let y = u - &x;
    let mut active = Vec::new();
    let mut alpha = Interval::ALL;
    let mut beta = Interval::ALL;
    for j in 0..n {
        match set.active_sign(j, x[j], tol_active) {
            0 => {
                let Some(al) = alpha.equal(set.a[j], z[j], tol) else { return Ok(None) };
                let Some(be) = beta.equal(set.a[j], y[j], tol) else { return Ok(None) };
                alpha = al;
                beta = be;
            }
            s => active.push((j, s as f64)),
        }
    }
    if set.a.dot(w).abs() > tol {
        return Ok(None);
    }
    Ok(Some((MembershipData { set, active, z, w, y, tol }, alpha, beta)))
}

/// Decides `w in D*(-Proj)(u)(d)` by enumerating index sets `J, K` over the
/// active bounds of `Proj(u)`.
pub fn coderivative_membership_check(
    set: &BoxHyperplane,
    u: &DVector<f64>,
    d: &DVector<f64>,
    w: &DVector<f64>,
    tol: f64,
) -> Result<bool, ProxError> {
    let Some((data, alpha, beta)) = membership_setup(set, u, d, w, tol)? else {
        return Ok(false);
    };
    if data.active.len() > MEMBERSHIP_ENUMERATION_LIMIT {
        return Err(ProxError::ActiveSetTooLarge {
            size: data.active.len(),
            limit: MEMBERSHIP_ENUMERATION_LIMIT,
        });
    }
    let mut in_k = vec![false; data.active.len()];
    Ok(data.search(0, alpha, beta, &mut in_k))
}

/// Membership restricted to the canonical choice `J = K = I(Proj(u))`.
pub fn coderivative_membership_canonical(
    set: &BoxHyperplane,
    u: &DVector<f64>,
    d: &DVector<f64>,
    w: &DVector<f64>,
    tol: f64,
) -> Result<bool, ProxError> {
    let Some((data, mut alpha, mut beta)) = membership_setup(set, u, d, w, tol)? else {
        return Ok(false);
    };
    for &(j, s) in &data.active {
        match data.step(j, s, Category::Equality, alpha, beta) {
            Some((al, be)) => {
                alpha = al;
                beta = be;
            }
            None => return Ok(false),
        }
    }
    Ok(true)
}

/// `g(prox(gamma, x)) + ||x - prox(gamma, x)||^2 / (2 gamma)`.
pub fn moreau_envelope_value<G: Proxable + ?Sized>(
    g: &G,
    gamma: f64,
    x: &DVector<f64>,
) -> Result<f64, ProxError> {
    check_gamma(gamma)?;
    let v = g.prox(gamma, x)?;
    Ok(g.value_at_prox(&v) + (x - &v).norm_squared() / (2.0 * gamma))
}

/// Prox of `p* / sigma` at `w` via the Moreau decomposition
/// `w - prox_{sigma p}(sigma w) / sigma`.
pub fn prox_conjugate<G: Proxable + ?Sized>(
    g: &G,
    sigma: f64,
    w: &DVector<f64>,
) -> Result<DVector<f64>, ProxError> {
    check_gamma(sigma)?;
    let v = g.prox(sigma, &(w * sigma))?;
    Ok(w - v / sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn unit_box_line() -> BoxHyperplane {
        BoxHyperplane::new(v(&[1.0, 1.0]), 0.0, v(&[-1.0, -1.0]), v(&[1.0, 1.0])).unwrap()
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(&v(&[2.0, -0.5, 1.0]), 1.0), v(&[1.0, 0.0, 0.0]));
        let u = v(&[0.3, -2.0, 5.0]);
        assert_eq!(soft_threshold(&u, 0.0), u);
        assert_eq!(soft_threshold(&DVector::zeros(3), 0.7), DVector::zeros(3));
    }

    #[test]
    fn soft_threshold_selection_examples() {
        let p = soft_threshold_selection(&v(&[2.0, -0.5, 1.0]), 1.0, 0.0);
        assert_eq!(p.mask, vec![true, false, false]);
        let p = soft_threshold_selection(&v(&[0.1, -3.0]), 0.0, 0.0);
        assert_eq!(p.to_dense(), DMatrix::identity(2, 2));
    }

    #[test]
    fn soft_threshold_selection_in_coderivative() {
        let u = v(&[2.0, -0.5, 1.0, -1.0, 0.0]);
        for d in [v(&[1.0, -1.0, 2.0, -3.0, 0.5]), v(&[-1.0, 1.0, -2.0, 3.0, 0.0])] {
            let p = soft_threshold_selection(&u, 1.0, 0.0);
            assert!(soft_threshold_coderivative_contains(&u, &d, &p.apply(&d), 1.0, 1e-14));
        }
        // The kink at u = kappa with d > 0 admits only {0, d}.
        assert!(!soft_threshold_coderivative_contains(&v(&[1.0]), &v(&[2.0]), &v(&[1.0]), 1.0, 1e-14));
        assert!(soft_threshold_coderivative_contains(&v(&[1.0]), &v(&[-2.0]), &v(&[-1.0]), 1.0, 1e-14));
    }

    #[test]
    fn projection_examples() {
        let set = unit_box_line();
        let (x, t) = project_box_hyperplane(&set, &v(&[2.0, 0.0]), 1e-12).unwrap();
        assert!((x - v(&[1.0, -1.0])).amax() < 1e-14);
        assert!((t - 1.0).abs() < 1e-14);

        let (x, t) = project_box_hyperplane(&set, &v(&[0.3, -0.3]), 1e-12).unwrap();
        assert!((x - v(&[0.3, -0.3])).amax() < 1e-15);
        assert!(t.abs() < 1e-15);

        let set = BoxHyperplane::new(v(&[1.0, 1.0]), 1.0, v(&[0.0, 0.0]), v(&[1.0, 1.0])).unwrap();
        let (x, _) = project_box_hyperplane(&set, &v(&[0.0, 0.0]), 1e-12).unwrap();
        assert!((x - v(&[0.5, 0.5])).amax() < 1e-15);
    }

    #[test]
    fn projection_with_unbounded_sides() {
        let inf = f64::INFINITY;
        let set = BoxHyperplane::new(v(&[1.0, 2.0, -1.0]), 1.0, v(&[0.0, -inf, -inf]), v(&[inf, 3.0, inf])).unwrap();
        let u = v(&[-4.0, 5.0, 0.5]);
        let (x, t) = project_box_hyperplane(&set, &u, 1e-12).unwrap();
        assert!(set.contains(&x, 1e-10));
        assert!((x.clone() - (u - set.a.clone() * t).zip_zip_map(&set.lower, &set.upper, |y, l, h| y.clamp(l, h))).amax() < 1e-12);
        // All-free case: plain hyperplane projection.
        let set = BoxHyperplane::new(v(&[1.0, 1.0]), 2.0, v(&[-inf, -inf]), v(&[inf, inf])).unwrap();
        let (x, _) = project_box_hyperplane(&set, &v(&[0.0, 0.0]), 1e-12).unwrap();
        assert!((x - v(&[1.0, 1.0])).amax() < 1e-14);
    }

    #[test]
    fn infeasible_polyhedron_rejected() {
        let r = BoxHyperplane::new(v(&[1.0, 1.0]), 5.0, v(&[0.0, 0.0]), v(&[1.0, 1.0]));
        assert_eq!(r, Err(ProxError::InfeasiblePolyhedron));
        let r = BoxHyperplane::new(v(&[0.0]), 1.0, v(&[0.0]), v(&[1.0]));
        assert_eq!(r, Err(ProxError::InfeasiblePolyhedron));
        let r = BoxHyperplane::new(v(&[1.0]), 0.0, v(&[1.0]), v(&[1.0]));
        assert!(matches!(r, Err(ProxError::InvalidParams(_))));
    }

    #[test]
    fn zero_normal_degenerates_to_box_clamp() {
        let set = BoxHyperplane::new(v(&[0.0, 0.0]), 0.0, v(&[0.0, 0.0]), v(&[1.0, 1.0])).unwrap();
        let (x, _) = project_box_hyperplane(&set, &v(&[2.0, 0.5]), 1e-12).unwrap();
        assert_eq!(x, v(&[1.0, 0.5]));
    }

    #[test]
    fn selection_examples() {
        let set = unit_box_line();
        let p = projection_selection(&set, &v(&[1.0, -1.0]), 1e-12);
        assert_eq!(p.to_dense(), DMatrix::zeros(2, 2));

        let p = projection_selection(&set, &v(&[0.2, -0.2]), 1e-12).to_dense();
        let expected = DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]);
        assert!((&p - expected).amax() < 1e-15);
        assert!((&p * &p - &p).amax() < 1e-15);

        let inf = f64::INFINITY;
        let point = BoxHyperplane::new(v(&[1.0]), 0.4, v(&[-inf]), v(&[inf])).unwrap();
        let p = projection_selection(&point, &v(&[0.4]), 1e-12);
        assert!(p.to_dense().amax() < 1e-15);
    }

    #[test]
    fn membership_examples() {
        let set = unit_box_line();
        let u = v(&[0.2, -0.1]);
        let d = v(&[1.0, 0.3]);
        let (x, _) = project_box_hyperplane(&set, &u, 1e-12).unwrap();
        let p = projection_selection(&set, &x, default_active_tol(&u));
        let w = -p.apply(&d);
        assert!(coderivative_membership_check(&set, &u, &d, &w, 1e-10).unwrap());
        assert!(coderivative_membership_canonical(&set, &u, &d, &w, 1e-10).unwrap());
        let zero = DVector::zeros(2);
        assert!(coderivative_membership_check(&set, &u, &zero, &zero, 1e-10).unwrap());

        let perturbed = &w + v(&[1e-3, 0.0]);
        assert!(!coderivative_membership_check(&set, &u, &d, &perturbed, 1e-10).unwrap());
    }

    #[test]
    fn membership_admits_noncanonical_element_at_corner() {
        // x = (1, -1) has both bounds active; w = 0 is the canonical image,
        // and w = -d lies in the coderivative only through other index sets.
        let set = unit_box_line();
        let u = v(&[2.0, 0.0]);
        let d = v(&[1.0, -1.0]);
        assert!(coderivative_membership_check(&set, &u, &d, &DVector::zeros(2), 1e-10).unwrap());
        assert!(coderivative_membership_canonical(&set, &u, &d, &DVector::zeros(2), 1e-10).unwrap());
    }

    #[test]
    fn membership_enumeration_limit() {
        let n = 22;
        let set = BoxHyperplane::new(
            DVector::from_element(n, 1.0),
            0.0,
            DVector::from_element(n, -1.0),
            DVector::from_element(n, 1.0),
        )
        .unwrap();
        let u = DVector::from_fn(n, |i, _| if i % 2 == 0 { 5.0 } else { -5.0 });
        let z = DVector::zeros(n);
        assert!(matches!(
            coderivative_membership_check(&set, &u, &z, &z, 1e-10),
            Err(ProxError::ActiveSetTooLarge { size: 22, limit: 20 })
        ));
        assert!(coderivative_membership_canonical(&set, &u, &z, &z, 1e-10).unwrap());
    }

    #[test]
    fn envelope_examples() {
        let g = L1Norm { lambda: 1.0 };
        assert!((moreau_envelope_value(&g, 1.0, &v(&[2.0])).unwrap() - 1.5).abs() < 1e-15);
        assert_eq!(moreau_envelope_value(&Zero, 0.3, &v(&[4.0])).unwrap(), 0.0);

        let ball = LInfBallIndicator { radius: 1.0 };
        let x = v(&[2.5, -0.3]);
        let e = moreau_envelope_value(&ball, 0.5, &x).unwrap();
        // Grid search over the ball.
        let mut best = f64::INFINITY;
        let steps = 400;
        for i in 0..=steps {
            for j in 0..=steps {
                let y = v(&[-1.0 + 2.0 * i as f64 / steps as f64, -1.0 + 2.0 * j as f64 / steps as f64]);
                best = best.min((&y - &x).norm_squared() / (2.0 * 0.5));
            }
        }
        assert!((e - 1.5 * 1.5).abs() < 1e-14);
        assert!(best >= e - 1e-12 && best - e < 1e-4);
    }

    #[test]
    fn prox_conjugate_examples() {
        let g = L1Norm { lambda: 1.0 };
        let z = prox_conjugate(&g, 2.0, &v(&[3.0, -0.5])).unwrap();
        assert!((z - v(&[1.0, -0.5])).amax() < 1e-15);
        let inside = v(&[0.2, -0.9]);
        assert!((prox_conjugate(&g, 0.7, &inside).unwrap() - &inside).amax() < 1e-15);
        assert_eq!(prox_conjugate(&g, 3.0, &DVector::zeros(2)).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn nonpositive_gamma_rejected() {
        let g = L1Norm { lambda: 1.0 };
        assert!(g.prox(0.0, &v(&[1.0])).is_err());
        assert!(moreau_envelope_value(&g, -1.0, &v(&[1.0])).is_err());
    }
}
