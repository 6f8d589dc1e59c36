//! Stopping rules and the factorization `X = X_τ + e^{-τ} X'`.
//!
//! For a path `Y` and a stopping time `τ`,
//!
//! ```text
//! ∫_(0,∞) e^{-s} dY(s) = ∫_(0,τ] e^{-s} dY(s) + e^{-τ} ∫_(0,∞) e^{-s} dY_τ(s)
//! ```
//!
//! holds on every trajectory, where `Y_τ(t) = Y(t + τ) - Y(τ)`. [`decompose`]
//! evaluates all three integrals on one simulated trajectory so that the
//! identity can be checked path by path, while across trajectories `X'` is
//! an independent copy of `X`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::discount::{eval_jump_sum, TruncationPolicy};
use crate::error::{invalid, Error, Result};
use crate::levy::{simulate_segment, JumpPath, JumpSet, LevyModel};
use crate::rng::{sample_exponential, sample_gamma, sample_uniform, GammaParams, RngStream};

/// Law of a random time independent of the driving process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RandomTimeLaw {
    Exponential { rate: f64 },
    Gamma { shape: f64, rate: f64 },
    Uniform { low: f64, high: f64 },
}

impl RandomTimeLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RandomTimeLaw::Exponential { rate } => {
                if !(rate > 0.0 && rate.is_finite()) {
                    return Err(invalid("random time rate must be positive"));
                }
            }
            RandomTimeLaw::Gamma { shape, rate } => {
                GammaParams::new(shape, rate)?;
            }
            RandomTimeLaw::Uniform { low, high } => {
                if !(low >= 0.0 && high > low && high.is_finite()) {
                    return Err(invalid("random time law must live on [0, ∞)"));
                }
            }
        }
        Ok(())
    }

    pub fn sample(&self, stream: &mut RngStream) -> f64 {
        match *self {
            RandomTimeLaw::Exponential { rate } => sample_exponential(rate, stream),
            RandomTimeLaw::Gamma { shape, rate } => {
                sample_gamma(GammaParams::new(shape, rate).expect("validated"), stream)
            }
            RandomTimeLaw::Uniform { low, high } => low + (high - low) * sample_uniform(stream),
        }
    }
}

/// A stopping time, described declaratively and evaluated on a path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StoppingRule {
    FixedTime { t: f64 },
    /// First time the jump part leaves zero (jumps of size zero are not counted).
    FirstJump,
    /// First jump whose size lies in `set`.
    FirstJumpIn { set: JumpSet },
    /// Time of the `k`-th nonzero jump.
    KthJump { k: usize },
    /// A time drawn independently of the path.
    IndependentRandomTime { law: RandomTimeLaw },
}

impl StoppingRule {
    pub fn validate(&self) -> Result<()> {
        match self {
            StoppingRule::FixedTime { t } => {
                if !(*t >= 0.0 && t.is_finite()) {
                    return Err(invalid(format!("fixed stopping time must be ≥ 0, got {t}")));
                }
            }
            StoppingRule::FirstJump => {}
            StoppingRule::FirstJumpIn { set } => set.validate()?,
            StoppingRule::KthJump { k } => {
                if *k == 0 {
                    return Err(invalid("k-th jump rule needs k ≥ 1"));
                }
            }
            StoppingRule::IndependentRandomTime { law } => law.validate()?,
        }
        Ok(())
    }

    /// Rules whose value does not depend on the path.
    pub fn is_path_free(&self) -> bool {
        matches!(
            self,
            StoppingRule::FixedTime { .. } | StoppingRule::IndependentRandomTime { .. }
        )
    }

    /// Number of qualifying jumps the rule waits for (1 for path-free rules).
    fn jumps_needed(&self) -> usize {
        match self {
            StoppingRule::KthJump { k } => *k,
            _ => 1,
        }
    }
}

impl fmt::Display for StoppingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StoppingRule::FixedTime { t } => write!(f, "FixedTime({t})"),
            StoppingRule::FirstJump => write!(f, "FirstJump"),
            StoppingRule::FirstJumpIn { set } => write!(f, "FirstJumpIn({set})"),
            StoppingRule::KthJump { k } => write!(f, "KthJump({k})"),
            StoppingRule::IndependentRandomTime { law } => match law {
                RandomTimeLaw::Exponential { rate } => write!(f, "IndependentRandomTime(Exp({rate}))"),
                RandomTimeLaw::Gamma { shape, rate } => {
                    write!(f, "IndependentRandomTime(Gamma({shape}, {rate}))")
                }
                RandomTimeLaw::Uniform { low, high } => {
                    write!(f, "IndependentRandomTime(Uniform({low}, {high}))")
                }
            },
        }
    }
}

/// What a stopping rule needs to know about a path. Implemented by scalar
/// and vector paths.
pub trait Timeline {
    fn horizon(&self) -> f64;
    fn jump_count(&self) -> usize;
    fn jump_time(&self, i: usize) -> f64;
    fn jump_is_nonzero(&self, i: usize) -> bool;
    fn jump_in(&self, i: usize, set: &JumpSet) -> bool;
    fn has_gaussian(&self) -> bool;
}

impl Timeline for JumpPath {
    fn horizon(&self) -> f64 {
        JumpPath::horizon(self)
    }

    fn jump_count(&self) -> usize {
        JumpPath::jump_count(self)
    }

    fn jump_time(&self, i: usize) -> f64 {
        self.jump_times()[i]
    }

    fn jump_is_nonzero(&self, i: usize) -> bool {
        self.jump_sizes()[i] != 0.0
    }

    fn jump_in(&self, i: usize, set: &JumpSet) -> bool {
        set.contains(self.jump_sizes()[i])
    }

    fn has_gaussian(&self) -> bool {
        JumpPath::has_gaussian(self)
    }
}

fn insufficient(rule: &StoppingRule, horizon: f64) -> Error {
    Error::InsufficientHorizon {
        rule: rule.to_string(),
        horizon,
    }
}

/// The stopping time realized by `rule` on `path`.
///
/// `stream` is used only by [`StoppingRule::IndependentRandomTime`] and must
/// be independent of the stream that generated the path. A time beyond the
/// path's horizon is an [`Error::InsufficientHorizon`], never a silent cap.
pub fn evaluate_stopping<P: Timeline>(rule: &StoppingRule, path: &P, stream: &mut RngStream) -> Result<f64> {
    rule.validate()?;
    let horizon = path.horizon();
    let within = |t: f64| if t <= horizon { Ok(t) } else { Err(insufficient(rule, horizon)) };
    match rule {
        StoppingRule::FixedTime { t } => within(*t),
        StoppingRule::IndependentRandomTime { law } => within(law.sample(stream)),
        StoppingRule::FirstJump => (0..path.jump_count())
            .find(|&i| path.jump_is_nonzero(i))
            .map(|i| path.jump_time(i))
            .ok_or_else(|| insufficient(rule, horizon)),
        StoppingRule::KthJump { k } => (0..path.jump_count())
            .filter(|&i| path.jump_is_nonzero(i))
            .nth(k - 1)
            .map(|i| path.jump_time(i))
            .ok_or_else(|| insufficient(rule, horizon)),
        StoppingRule::FirstJumpIn { set } => {
            if path.has_gaussian() {
                return Err(Error::GaussianPart("the first-jump-in-set rule"));
            }
            (0..path.jump_count())
                .find(|&i| path.jump_in(i, set))
                .map(|i| path.jump_time(i))
                .ok_or_else(|| insufficient(rule, horizon))
        }
    }
}

/// Simulation hooks used by [`run_until_stopped`], so the scalar and the
/// operator pipelines share one stopping schedule.
pub(crate) trait Extendable: Timeline + Sized {
    type Model;
    fn simulate(model: &Self::Model, horizon: f64, stream: &mut RngStream) -> Result<Self>;
    fn extend_to(&mut self, model: &Self::Model, horizon: f64, stream: &mut RngStream) -> Result<()>;
    fn total_jump_rate(model: &Self::Model) -> f64;
}

impl Extendable for JumpPath {
    type Model = LevyModel;

    fn simulate(model: &LevyModel, horizon: f64, stream: &mut RngStream) -> Result<Self> {
        simulate_segment(model, horizon, stream)
    }

    fn extend_to(&mut self, model: &LevyModel, horizon: f64, stream: &mut RngStream) -> Result<()> {
        self.extend(model, horizon, stream)
    }

    fn total_jump_rate(model: &LevyModel) -> f64 {
        model.jump_rate
    }
}

/// Simulates a path long enough to realize `rule` plus `lookahead` time
/// units after it.
///
/// Path-free rules draw `τ` from `time_stream` first and simulate exactly
/// `τ + lookahead`. Jump rules start from a horizon of about four expected
/// waiting times (at most `policy.horizon`) and double it until the rule
/// fires; exceeding `policy.max_stop_time` is an error.
pub(crate) fn run_until_stopped<P: Extendable>(
    model: &P::Model,
    rule: &StoppingRule,
    policy: &TruncationPolicy,
    lookahead: f64,
    path_stream: &mut RngStream,
    time_stream: &mut RngStream,
) -> Result<(P, f64)> {
    rule.validate()?;
    policy.validate()?;
    if rule.is_path_free() {
        let tau = match rule {
            StoppingRule::FixedTime { t } => *t,
            StoppingRule::IndependentRandomTime { law } => law.sample(time_stream),
            _ => unreachable!(),
        };
        if tau > policy.max_stop_time {
            return Err(insufficient(rule, policy.max_stop_time));
        }
        let path = P::simulate(model, tau + lookahead, path_stream)?;
        return Ok((path, tau));
    }
    let rate = P::total_jump_rate(model);
    let mut horizon = if rate > 0.0 {
        (4.0 * rule.jumps_needed() as f64 / rate).min(policy.horizon)
    } else {
        policy.horizon
    }
    .min(policy.max_stop_time);
    let mut path = P::simulate(model, horizon, path_stream)?;
    let tau = loop {
        match evaluate_stopping(rule, &path, time_stream) {
            Ok(tau) => break tau,
            Err(Error::InsufficientHorizon { .. }) if horizon < policy.max_stop_time => {
                horizon = (2.0 * horizon).min(policy.max_stop_time);
                path.extend_to(model, horizon, path_stream)?;
            }
            Err(e) => return Err(e),
        }
    };
    if path.horizon() < tau + lookahead {
        path.extend_to(model, tau + lookahead, path_stream)?;
    }
    Ok((path, tau))
}

/// One realization of `(τ, X_τ, e^{-τ}, X', X)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRecord {
    pub tau: f64,
    pub x_tau: f64,
    pub discount: f64,
    pub x_prime: f64,
    pub x_total: f64,
}

impl DecompositionRecord {
    pub fn residual(&self) -> f64 {
        check_pathwise_identity(self)
    }

    /// `residual ≤ 1e-10·(1 + |x_total|)`.
    pub fn satisfies_identity(&self) -> bool {
        self.residual() <= PATHWISE_TOL * (1.0 + self.x_total.abs())
    }
}

/// Relative tolerance of the pathwise identities.
pub const PATHWISE_TOL: f64 = 1e-10;

/// Stopping time and stopped integral `(τ, X_τ)` without the tail.
/// Consumes `stream`, so repeated calls give independent pairs.
pub fn stopped_integral(
    model: &LevyModel,
    rule: &StoppingRule,
    policy: &TruncationPolicy,
    stream: &mut RngStream,
) -> Result<(f64, f64)> {
    let mut path_stream = stream.split();
    let mut time_stream = stream.split();
    let (path, tau) =
        run_until_stopped::<JumpPath>(model, rule, policy, 0.0, &mut path_stream, &mut time_stream)?;
    Ok((tau, eval_jump_sum(&path, tau)?))
}

/// Simulates one trajectory on `(0, τ + T]` and evaluates
/// `X = Z(τ + T)`, `X_τ = Z(τ)` and `X' = ∫_(0,T] e^{-s} dY_τ(s)` on it.
///
/// The path stream and the random-time stream are split off `stream`
/// separately, so an [`StoppingRule::IndependentRandomTime`] is independent
/// of the path.
pub fn decompose(
    model: &LevyModel,
    rule: &StoppingRule,
    policy: &TruncationPolicy,
    stream: &mut RngStream,
) -> Result<DecompositionRecord> {
    let mut path_stream = stream.split();
    let mut time_stream = stream.split();
    let (path, tau) = run_until_stopped::<JumpPath>(
        model,
        rule,
        policy,
        policy.horizon,
        &mut path_stream,
        &mut time_stream,
    )?;
    let end = path.horizon();
    let x_total = eval_jump_sum(&path, end)?;
    let x_tau = eval_jump_sum(&path, tau)?;
    let shifted = path.shift_path(tau)?;
    let x_prime = eval_jump_sum(&shifted, shifted.horizon())?;
    Ok(DecompositionRecord {
        tau,
        x_tau,
        discount: (-tau).exp(),
        x_prime,
        x_total,
    })
}

/// `|x_total - (x_tau + discount·x_prime)|`.
pub fn check_pathwise_identity(record: &DecompositionRecord) -> f64 {
    (record.x_total - (record.x_tau + record.discount * record.x_prime)).abs()
}

/// Both sides of a first-jump factorization on one trajectory:
/// `lhs = ∫ e^{-s} dY(s)` and `rhs = e^{-τ} Y(τ) + e^{-τ} ∫ e^{-s} dY(s + τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstJumpSplit {
    pub tau: f64,
    pub discount: f64,
    /// `Y(τ)`, the size of the first (qualifying) jump.
    pub jump: f64,
    /// `∫_(0,∞) e^{-s} dY(s + τ)`, truncated.
    pub tail: f64,
    pub lhs: f64,
    pub rhs: f64,
}

impl FirstJumpSplit {
    pub fn residual(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }

    pub fn satisfies_identity(&self) -> bool {
        self.residual() <= PATHWISE_TOL * (1.0 + self.lhs.abs())
    }
}

fn split_at_first_jump(path: &JumpPath, tau: f64) -> Result<FirstJumpSplit> {
    let lhs = eval_jump_sum(path, path.horizon())?;
    let jump = path.path_value(tau)?;
    let shifted = path.shift_path(tau)?;
    let tail = eval_jump_sum(&shifted, shifted.horizon())?;
    let discount = (-tau).exp();
    Ok(FirstJumpSplit {
        tau,
        discount,
        jump,
        tail,
        lhs,
        rhs: discount * jump + discount * tail,
    })
}

/// Factorization at `τ₀ = inf{t > 0 : Y(t) ≠ 0}` for a purely
/// discontinuous model (no drift, no Brownian part), so `Y(τ₀)` is exactly
/// the first jump and the result has the shape `Z = A(Z + C)`.
pub fn first_value_identity(
    model: &LevyModel,
    policy: &TruncationPolicy,
    stream: &mut RngStream,
) -> Result<FirstJumpSplit> {
    if !model.is_purely_discontinuous() {
        return Err(invalid("first-value identity needs a model without drift or Gaussian part"));
    }
    let mut path_stream = stream.split();
    let mut time_stream = stream.split();
    let (path, tau) = run_until_stopped::<JumpPath>(
        model,
        &StoppingRule::FirstJump,
        policy,
        policy.horizon,
        &mut path_stream,
        &mut time_stream,
    )?;
    split_at_first_jump(&path, tau)
}

/// Same factorization for the thinned process `Y(·; A)` that keeps only
/// jumps in `set`, stopped at its first jump `τ_A`.
///
/// Also returns the thinned path so callers can inspect the jump series.
pub fn restricted_jump_identity(
    model: &LevyModel,
    set: &JumpSet,
    policy: &TruncationPolicy,
    stream: &mut RngStream,
) -> Result<(FirstJumpSplit, JumpPath)> {
    if model.has_gaussian() {
        return Err(Error::GaussianPart("the restricted-jump identity"));
    }
    set.validate()?;
    let mut path_stream = stream.split();
    let mut time_stream = stream.split();
    let rule = StoppingRule::FirstJumpIn { set: *set };
    let (path, tau) =
        run_until_stopped::<JumpPath>(model, &rule, policy, policy.horizon, &mut path_stream, &mut time_stream)?;
    let (in_set, _) = path.thin_path(set)?;
    Ok((split_at_first_jump(&in_set, tau)?, in_set))
}
