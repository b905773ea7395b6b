//! Weak-Wolfe stepsize search along a descent ray.
//!
//! The search starts from the unit step, expands by a factor of two while
//! the curvature condition fails (never beyond `tau_max`), and bisects once
//! an upper bracket is known.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinesearchError {
    #[error("not a descent direction: slope {slope} >= 0")]
    NotDescentDirection { slope: f64 },
    #[error("linesearch exhausted after {evals} evaluations without sufficient decrease")]
    LinesearchExhausted { evals: usize },
    #[error("invalid Wolfe parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WolfeParams {
    /// Sufficient-decrease constant.
    pub sigma1: f64,
    /// Curvature constant.
    pub sigma2: f64,
    pub tau_max: f64,
    pub max_bracket: usize,
    pub max_zoom: usize,
    /// Relative size of function-value noise. Once `|phi(tau) - phi0|` is
    /// below `value_noise * (1 + |phi0|)`, values no longer resolve the
    /// decrease and acceptance falls back to the derivative test of
    /// [`approximate_wolfe`]. Zero disables the fallback.
    pub value_noise: f64,
}

impl Default for WolfeParams {
    fn default() -> Self {
        Self {
            sigma1: 1e-4,
            sigma2: 0.9,
            tau_max: 1e3,
            max_bracket: 20,
            max_zoom: 50,
            value_noise: 1e-13,
        }
    }
}

impl WolfeParams {
    pub fn validate(&self) -> Result<(), LinesearchError> {
        if !(0.0 < self.sigma1 && self.sigma1 < self.sigma2 && self.sigma2 < 1.0) {
            return Err(LinesearchError::InvalidParams(format!(
                "need 0 < sigma1 < sigma2 < 1, got sigma1={}, sigma2={}",
                self.sigma1, self.sigma2
            )));
        }
        if !(self.tau_max >= 1.0) {
            return Err(LinesearchError::InvalidParams(format!(
                "tau_max must be >= 1, got {}",
                self.tau_max
            )));
        }
        if self.max_bracket == 0 || self.max_zoom == 0 {
            return Err(LinesearchError::InvalidParams(
                "bracket and zoom budgets must be positive".into(),
            ));
        }
        if !(self.value_noise >= 0.0) {
            return Err(LinesearchError::InvalidParams("value_noise must be >= 0".into()));
        }
        Ok(())
    }
}

/// One-dimensional restriction `tau -> (phi(x + tau d), <grad phi(x + tau d), d>)`.
pub struct RaySlice<F> {
    pub phi0: f64,
    pub slope0: f64,
    pub eval: F,
}

impl<F: FnMut(f64) -> (f64, f64)> RaySlice<F> {
    pub fn new(phi0: f64, slope0: f64, eval: F) -> Self {
        Self { phi0, slope0, eval }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WolfeCheck {
    pub sufficient_decrease: bool,
    pub curvature: bool,
}

impl WolfeCheck {
    pub fn both(&self) -> bool {
        self.sufficient_decrease && self.curvature
    }
}

/// Evaluates the two weak Wolfe inequalities at `tau`.
pub fn check_wolfe(
    phi0: f64,
    slope0: f64,
    tau: f64,
    phi_tau: f64,
    slope_tau: f64,
    params: &WolfeParams,
) -> WolfeCheck {
    WolfeCheck {
        sufficient_decrease: phi_tau <= phi0 + params.sigma1 * tau * slope0,
        curvature: slope_tau >= params.sigma2 * slope0,
    }
}

/// Derivative-only surrogate for the Wolfe pair, used when the value
/// difference is below roundoff:
/// `sigma2 * slope0 <= slope_tau <= (2 sigma1 - 1) * slope0`.
pub fn approximate_wolfe(slope0: f64, slope_tau: f64, params: &WolfeParams) -> bool {
    params.sigma2 * slope0 <= slope_tau && slope_tau <= (2.0 * params.sigma1 - 1.0) * slope0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Acceptance {
    /// Both Wolfe inequalities hold as evaluated.
    Wolfe,
    /// Function values were within noise; [`approximate_wolfe`] held.
    ApproximateWolfe,
    /// Budgets ran out before curvature was met; sufficient decrease holds.
    SufficientDecreaseOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub tau: f64,
    pub phi_tau: f64,
    pub slope_tau: f64,
    pub n_evals: usize,
    pub acceptance: Acceptance,
}

impl StepResult {
    pub fn curvature_met(&self) -> bool {
        self.acceptance != Acceptance::SufficientDecreaseOnly
    }
}

/// Bracketing-with-bisection weak-Wolfe search; `tau = 1` is always tried
/// first and returned whenever it satisfies both conditions.
pub fn wolfe_search<F>(slice: &mut RaySlice<F>, params: &WolfeParams) -> Result<StepResult, LinesearchError>
where
    F: FnMut(f64) -> (f64, f64),
{
    params.validate()?;
    let phi0 = slice.phi0;
    let slope0 = slice.slope0;
    if !(slope0 < 0.0) {
        return Err(LinesearchError::NotDescentDirection { slope: slope0 });
    }
    let noise = params.value_noise * (1.0 + phi0.abs());

    let mut lo = 0.0f64;
    let mut hi = f64::INFINITY;
    let mut tau = 1.0f64.min(params.tau_max);
    let mut n_evals = 0usize;
    let mut expansions = 0usize;
    let mut bisections = 0usize;
    // Best point with sufficient decrease but unmet curvature.
    let mut fallback: Option<(f64, f64, f64)> = None;

    loop {
        let (phi_tau, slope_tau) = (slice.eval)(tau);
        n_evals += 1;
        let finite = phi_tau.is_finite() && slope_tau.is_finite();
        let check = check_wolfe(phi0, slope0, tau, phi_tau, slope_tau, params);

        if finite && check.both() {
            return Ok(StepResult {
                tau,
                phi_tau,
                slope_tau,
                n_evals,
                acceptance: Acceptance::Wolfe,
            });
        }
        if finite
            && noise > 0.0
            && (phi_tau - phi0).abs() <= noise
            && approximate_wolfe(slope0, slope_tau, params)
        {
            return Ok(StepResult {
                tau,
                phi_tau,
                slope_tau,
                n_evals,
                acceptance: Acceptance::ApproximateWolfe,
            });
        }

        if !finite || !check.sufficient_decrease {
            hi = tau;
        } else {
            // Sufficient decrease holds, the slope is still too negative.
            lo = tau;
            if fallback.is_none_or(|(_, best, _)| phi_tau < best) {
                fallback = Some((tau, phi_tau, slope_tau));
            }
        }

        if hi.is_finite() {
            if bisections >= params.max_zoom {
                break;
            }
            bisections += 1;
            tau = 0.5 * (lo + hi);
        } else {
            if expansions >= params.max_bracket || tau >= params.tau_max {
                break;
            }
            expansions += 1;
            tau = (2.0 * tau).min(params.tau_max);
        }
    }

    match fallback {
        Some((tau, phi_tau, slope_tau)) => Ok(StepResult {
            tau,
            phi_tau,
            slope_tau,
            n_evals,
            acceptance: Acceptance::SufficientDecreaseOnly,
        }),
        None => Err(LinesearchError::LinesearchExhausted { evals: n_evals }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> WolfeParams {
        WolfeParams::default()
    }

    #[test]
    fn check_wolfe_examples() {
        // phi(t) = 0.5 (1 - t)^2 at t = 1.
        let c = check_wolfe(0.5, -1.0, 1.0, 0.0, 0.0, &params());
        assert_eq!(c, WolfeCheck { sufficient_decrease: true, curvature: true });

        let c = check_wolfe(0.5, -1.0, 1.0, 0.5, 0.0, &params());
        assert!(!c.sufficient_decrease);

        let c = check_wolfe(0.0, -1.0, 1.0, -1.0, -0.95, &params());
        assert!(!c.curvature);
    }

    #[test]
    fn unit_step_on_quadratic() {
        let mut slice = RaySlice::new(0.5, -1.0, |t: f64| (0.5 * (1.0 - t).powi(2), t - 1.0));
        let step = wolfe_search(&mut slice, &params()).unwrap();
        assert_eq!(step.tau, 1.0);
        assert_eq!(step.n_evals, 1);
        assert_eq!(step.acceptance, Acceptance::Wolfe);
    }

    #[test]
    fn rejects_ascent() {
        let mut slice = RaySlice::new(0.0, 0.1, |t: f64| (t, 1.0));
        assert_eq!(
            wolfe_search(&mut slice, &params()),
            Err(LinesearchError::NotDescentDirection { slope: 0.1 })
        );
    }

    #[test]
    fn quartic_requires_adjustment() {
        // phi(t) = t^4 - t: unit step overshoots the sufficient-decrease bound.
        let p = params();
        let f = |t: f64| (t.powi(4) - t, 4.0 * t.powi(3) - 1.0);
        let mut slice = RaySlice::new(0.0, -1.0, f);
        let step = wolfe_search(&mut slice, &p).unwrap();
        assert!(step.n_evals > 1);
        let (v, s) = f(step.tau);
        assert!(check_wolfe(0.0, -1.0, step.tau, v, s, &p).both());
    }

    #[test]
    fn expansion_on_shallow_ray() {
        // Minimizer at t = 50: the unit step fails curvature, search expands.
        let p = params();
        let f = |t: f64| (0.5 * (t - 50.0).powi(2) / 50.0, (t - 50.0) / 50.0);
        let mut slice = RaySlice::new(f(0.0).0, -1.0, f);
        let step = wolfe_search(&mut slice, &p).unwrap();
        assert!(step.tau > 1.0 && step.tau <= p.tau_max);
        let (v, s) = f(step.tau);
        assert!(check_wolfe(f(0.0).0, -1.0, step.tau, v, s, &p).both());
    }

    #[test]
    fn cap_triggers_fallback() {
        // Linear decrease forever: curvature can never hold.
        let p = WolfeParams { tau_max: 8.0, ..params() };
        let mut slice = RaySlice::new(0.0, -1.0, |t: f64| (-t, -1.0));
        let step = wolfe_search(&mut slice, &p).unwrap();
        assert_eq!(step.tau, 8.0);
        assert_eq!(step.acceptance, Acceptance::SufficientDecreaseOnly);
    }

    #[test]
    fn exhaustion_on_inconsistent_oracle() {
        // Claims descent but value always increases.
        let mut slice = RaySlice::new(0.0, -1.0, |t: f64| (t + 1.0, -1.0));
        assert!(matches!(
            wolfe_search(&mut slice, &params()),
            Err(LinesearchError::LinesearchExhausted { .. })
        ));
    }

    #[test]
    fn invalid_params() {
        let p = WolfeParams { sigma1: 0.95, ..params() };
        let mut slice = RaySlice::new(0.0, -1.0, |t: f64| (-t, -1.0));
        assert!(matches!(wolfe_search(&mut slice, &p), Err(LinesearchError::InvalidParams(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        // Random smooth, bounded-below restrictions:
        // phi(t) = a (t - m)^2 + b (1 - cos(w t)) with a > 0.
        #[test]
        fn returned_steps_reverify(a in 0.01f64..10.0, m in 0.05f64..40.0, b in 0.0f64..2.0, w in 0.1f64..5.0) {
            let p = params();
            let f = move |t: f64| {
                (a * (t - m).powi(2) + b * (1.0 - (w * t).cos()),
                 2.0 * a * (t - m) + b * w * (w * t).sin())
            };
            let (phi0, slope0) = f(0.0);
            prop_assume!(slope0 < 0.0);
            let mut slice = RaySlice::new(phi0, slope0, f);
            let step = wolfe_search(&mut slice, &p).unwrap();
            prop_assert!(step.tau > 0.0 && step.tau <= p.tau_max);
            let (v, s) = f(step.tau);
            let c = check_wolfe(phi0, slope0, step.tau, v, s, &p);
            match step.acceptance {
                Acceptance::Wolfe => prop_assert!(c.both()),
                Acceptance::ApproximateWolfe => prop_assert!(approximate_wolfe(slope0, s, &p)),
                Acceptance::SufficientDecreaseOnly => prop_assert!(c.sufficient_decrease),
            }
            let (v1, s1) = f(1.0);
            if check_wolfe(phi0, slope0, 1.0, v1, s1, &p).both() {
                prop_assert_eq!(step.tau, 1.0);
            }
        }
    }
}
