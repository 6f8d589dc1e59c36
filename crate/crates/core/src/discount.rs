//! The discounted integral `Z(t) = ∫_(0,t] e^{-s} dY(s)` and its limit.
//!
//! Two evaluators are provided and must agree on every pure-jump path:
//!
//! - [`eval_jump_sum`] sums `e^{-τ_k} ΔY_k` over jumps, adds the drift term
//!   `drift·(1 - e^{-t})` and the exactly sampled Brownian term.
//! - [`eval_by_parts`] computes `e^{-t} Y(t) + ∫_(0,t] Y(s-) e^{-s} ds`
//!   segment by segment in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::levy::{simulate_path, JumpPath, LevyModel};
use crate::rng::RngStream;

fn default_max_stop_time() -> f64 {
    1.0e4
}

/// Where to cut the infinite-horizon integral.
///
/// The part beyond `horizon` equals `e^{-horizon}` times an independent copy
/// of the full integral, so the truncation error is a known contraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationPolicy {
    pub horizon: f64,
    pub tail_tol: f64,
    /// Largest stopping time a decomposition may wait for before giving up.
    #[serde(default = "default_max_stop_time")]
    pub max_stop_time: f64,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            horizon: 40.0,
            tail_tol: (-40.0f64).exp(),
            max_stop_time: default_max_stop_time(),
        }
    }
}

impl TruncationPolicy {
    pub fn new(horizon: f64, tail_tol: f64) -> Result<Self> {
        let p = Self {
            horizon,
            tail_tol,
            max_stop_time: default_max_stop_time(),
        };
        p.validate()?;
        Ok(p)
    }

    /// `T = ln(scale / ε)` with `scale = max(1, E|Y(1)|)` (upper bound).
    pub fn for_tolerance(model: &LevyModel, tail_tol: f64) -> Result<Self> {
        if !(tail_tol > 0.0 && tail_tol < 1.0) {
            return Err(invalid(format!("tail tolerance must lie in (0, 1), got {tail_tol}")));
        }
        let scale = model.mean_abs_bound().max(1.0);
        Self::new((scale / tail_tol).ln(), tail_tol)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid(format!("truncation horizon must be positive, got {}", self.horizon)));
        }
        if !(self.tail_tol > 0.0 && self.tail_tol < 1.0) {
            return Err(invalid(format!("tail tolerance must lie in (0, 1), got {}", self.tail_tol)));
        }
        if !(self.max_stop_time > 0.0 && self.max_stop_time.is_finite()) {
            return Err(invalid("max_stop_time must be positive"));
        }
        Ok(())
    }
}

/// `∫_0^t e^{-s} ds = 1 - e^{-t}`.
pub fn discount_mass(t: f64) -> f64 {
    -(-t).exp_m1()
}

fn check_range(path: &JumpPath, t: f64) -> Result<()> {
    if t >= 0.0 && t <= path.horizon() {
        Ok(())
    } else {
        Err(Error::TimeOutOfRange {
            t,
            horizon: path.horizon(),
        })
    }
}

/// `Σ_{τ_k ≤ t} e^{-τ_k} ΔY_k + drift·(1 - e^{-t}) + ∫_(0,t] e^{-s} σ dW(s)`.
pub fn eval_jump_sum(path: &JumpPath, t: f64) -> Result<f64> {
    check_range(path, t)?;
    let n = path.jumps_through(t);
    let mut acc = 0.0;
    for (tau, size) in path.jumps().take(n) {
        acc += (-tau).exp() * size;
    }
    let mut value = acc + path.drift() * discount_mass(t);
    if path.has_gaussian() {
        value += path.discounted_gaussian(t);
    }
    Ok(value)
}

/// `e^{-t} Y(t) + ∫_(0,t] Y(s-) e^{-s} ds` with every segment integrated exactly.
///
/// On `(a, b]` between jumps, `Y(s-) = J + drift·s`, whose integral against
/// `e^{-s}` is `J (e^{-a} - e^{-b}) + drift ((a+1) e^{-a} - (b+1) e^{-b})`.
pub fn eval_by_parts(path: &JumpPath, t: f64) -> Result<f64> {
    if path.has_gaussian() {
        return Err(Error::GaussianPart("integration by parts"));
    }
    check_range(path, t)?;
    let drift = path.drift();
    let n = path.jumps_through(t);
    let mut level = 0.0;
    let mut a = 0.0;
    let mut integral = 0.0;
    let segment = |level: f64, a: f64, b: f64| -> f64 {
        if b <= a {
            return 0.0;
        }
        let h = b - a;
        let ea = (-a).exp();
        let decay = -(-h).exp_m1();
        let jump_part = level * ea * decay;
        let drift_part = drift * ea * ((a + 1.0) * decay - h * (-h).exp());
        jump_part + drift_part
    };
    for (tau, size) in path.jumps().take(n) {
        integral += segment(level, a, tau);
        level += size;
        a = tau;
    }
    integral += segment(level, a, t);
    let y_t = level + drift * t;
    Ok((-t).exp() * y_t + integral)
}

/// One draw of `∫_(0,T] e^{-s} dY(s)` with `T = policy.horizon`.
pub fn sample_discounted_integral(
    model: &LevyModel,
    policy: &TruncationPolicy,
    stream: &mut RngStream,
) -> Result<f64> {
    policy.validate()?;
    let path = simulate_path(model, policy.horizon, stream)?;
    eval_jump_sum(&path, policy.horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::par_samples;

    #[test]
    fn empty_path_is_zero() {
        let p = JumpPath::from_jumps(3.0, &[], 0.0).unwrap();
        assert_eq!(eval_jump_sum(&p, 3.0).unwrap(), 0.0);
        assert_eq!(eval_by_parts(&p, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn single_jump_closed_form() {
        let p = JumpPath::from_jumps(2.0, &[(2f64.ln(), 2.0)], 0.0).unwrap();
        assert!((eval_jump_sum(&p, 1.0).unwrap() - 1.0).abs() < 1e-15);
        // hand integration: e^{-t} b + b (e^{-τ} - e^{-t}) = b e^{-τ}
        for t in [1.0, 1.5, 2.0] {
            assert!((eval_by_parts(&p, t).unwrap() - 1.0).abs() < 1e-15);
        }
        // before the jump nothing has accrued
        assert_eq!(eval_by_parts(&p, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn drift_only_limit() {
        let p = JumpPath::from_jumps(50.0, &[], 1.0).unwrap();
        let v = eval_jump_sum(&p, 50.0).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        let v5 = eval_jump_sum(&p, 5.0).unwrap();
        assert!((v5 - (1.0 - (-5.0f64).exp())).abs() < 1e-15);
        assert!((eval_by_parts(&p, 5.0).unwrap() - v5).abs() < 1e-14);
    }

    #[test]
    fn by_parts_rejects_gaussian() {
        let mut s = RngStream::new(1, 1);
        let p = simulate_path(&LevyModel::gaussian(1.0), 1.0, &mut s).unwrap();
        assert!(matches!(eval_by_parts(&p, 1.0), Err(Error::GaussianPart(_))));
        assert!(eval_jump_sum(&p, 2.0).is_err());
    }

    #[test]
    fn deterministic_drift_integral() {
        let mut s = RngStream::new(2, 2);
        let policy = TruncationPolicy::default();
        let v = sample_discounted_integral(&LevyModel::drift_only(1.0), &policy, &mut s).unwrap();
        assert_eq!(v, discount_mass(40.0));
    }

    #[test]
    fn policy_from_tolerance() {
        let m = LevyModel::gamma_bdlp(2.0, 1.0);
        let p = TruncationPolicy::for_tolerance(&m, 1e-12).unwrap();
        assert!((p.horizon - (2.0f64 / 1e-12).ln()).abs() < 1e-12);
        assert!(TruncationPolicy::for_tolerance(&m, 1.5).is_err());
        assert!(TruncationPolicy::new(-1.0, 0.1).is_err());
    }

    #[test]
    fn gaussian_integral_moments() {
        let policy = TruncationPolicy::default();
        let root = RngStream::family(3, "gauss-integral");
        let n = 100_000;
        let x = par_samples(&root, n, |s| {
            sample_discounted_integral(&LevyModel::gaussian(1.0), &policy, s).unwrap()
        });
        let m = x.iter().sum::<f64>() / n as f64;
        let v = x.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        // Var = 1/2, SE of the mean sqrt(0.5/n), SE of the variance sqrt(2·0.25/n)
        assert!(m.abs() < 3.0 * (0.5 / n as f64).sqrt(), "mean {m}");
        assert!((v - 0.5).abs() < 3.0 * (0.5 / n as f64).sqrt(), "var {v}");
    }
}
