//! Random affine recursions `Z_{n+1} = A_n Z_n + B_n` and their fixed
//! points (perpetuities), with the gamma constructions.
//!
//! Every selfdecomposable law is a perpetuity: with `(A, B) = (e^{-τ}, X_τ)`
//! from a stopping-time factorization, `X = A X' + B` with `X'` an
//! independent copy. For the gamma law, stopping at the first jump gives the
//! `Z = A (Z + C)` form with `A = e^{-τ₁}`, `τ₁ ~ Exp(α)` (so `A = U^{1/α}` in
//! law) and `C ~ Exp(λ)`:
//!
//! ```text
//! γ_{α,λ} = U^{1/α} (γ_{1,λ} + γ'_{α,λ}) = U^{1/α} γ_{α+1,λ}
//! γ_{α,λ} = Σ_{n≥1} U_1^{1/α} ⋯ U_n^{1/α} γ^{(n)}_{1,λ}
//! ```

use serde::{Deserialize, Serialize};

use crate::decomposition::{stopped_integral, StoppingRule};
use crate::discount::{sample_discounted_integral, TruncationPolicy};
use crate::decomposition::RandomTimeLaw;
use crate::error::{invalid, Error, Result};
use crate::levy::{JumpLaw, LevyModel};
use crate::rng::{par_samples, sample_exponential, sample_gamma, sample_uniform, try_par_samples, GammaParams, RngStream};
use crate::stats::{mean_check, two_sample_mean_check, Check, Significance, StatReport};

/// How the discount factor `A` of the gamma C-form is drawn.
///
/// The construction needs `A = e^{-τ₁}` with `τ₁` the first arrival of a
/// rate-`α` Poisson process, which is `Exp(α) = γ_{1,α}` and gives
/// `P(A ≤ x) = x^α`, i.e. `A = U^{1/α}` in law. `GammaShapeAlpha` draws
/// `e^{-γ_{α,1}}` instead; it agrees with the other two only at `α = 1` and
/// exists to demonstrate that difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscountFactor {
    /// `U^{1/α}`.
    #[default]
    PowerUniform,
    /// `e^{-τ₁}` with `τ₁ ~ Exp(α)`.
    FirstArrival,
    /// `e^{-γ_{α,1}}`.
    GammaShapeAlpha,
}

impl DiscountFactor {
    pub fn sample(self, alpha: f64, stream: &mut RngStream) -> f64 {
        match self {
            DiscountFactor::PowerUniform => sample_uniform(stream).powf(1.0 / alpha),
            DiscountFactor::FirstArrival => (-sample_exponential(alpha, stream)).exp(),
            DiscountFactor::GammaShapeAlpha => {
                (-sample_gamma(GammaParams::new(alpha, 1.0).expect("α > 0"), stream)).exp()
            }
        }
    }
}

/// Joint law of the pair `(A, B)`. Pairs are drawn fresh at every step,
/// independently of the running state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AffinePairLaw {
    Constant { a: f64, b: f64 },
    /// `A` per `factor`, `B = A·γ_{1,λ}`: the C-form `Z = A (Z + C)`.
    BetaGamma {
        alpha: f64,
        lambda: f64,
        #[serde(default)]
        factor: DiscountFactor,
    },
    /// `(e^{-τ}, X_τ)` from the gamma BDLP stopped at its first jump.
    GammaFirstJump { alpha: f64, lambda: f64 },
    /// `(e^{-τ}, X_τ)` from an arbitrary model and stopping rule.
    Stopped {
        model: LevyModel,
        rule: StoppingRule,
        #[serde(default)]
        policy: TruncationPolicy,
    },
    /// Independent `A` and `B` (or `C` when `c_form`, with `B = A·C`).
    CustomAffine {
        a: JumpLaw,
        b: JumpLaw,
        #[serde(default)]
        c_form: bool,
    },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

impl AffinePairLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            AffinePairLaw::Constant { a, b } => {
                if !(a.is_finite() && b.is_finite()) {
                    return Err(invalid("constant pair must be finite"));
                }
            }
            AffinePairLaw::BetaGamma { alpha, lambda, .. } | AffinePairLaw::GammaFirstJump { alpha, lambda } => {
                positive("alpha", *alpha)?;
                positive("lambda", *lambda)?;
            }
            AffinePairLaw::Stopped { model, rule, policy } => {
                model.validate()?;
                rule.validate()?;
                policy.validate()?;
            }
            AffinePairLaw::CustomAffine { a, b, .. } => {
                a.validate()?;
                b.validate()?;
            }
        }
        Ok(())
    }

    /// Draws one `(A, B)` pair.
    pub fn sample_pair(&self, stream: &mut RngStream) -> Result<(f64, f64)> {
        match self {
            AffinePairLaw::Constant { a, b } => Ok((*a, *b)),
            AffinePairLaw::BetaGamma { alpha, lambda, factor } => {
                let a = factor.sample(*alpha, stream);
                let c = sample_exponential(*lambda, stream);
                Ok((a, a * c))
            }
            AffinePairLaw::GammaFirstJump { alpha, lambda } => {
                let model = LevyModel::gamma_bdlp(*alpha, *lambda);
                let (tau, x_tau) =
                    stopped_integral(&model, &StoppingRule::FirstJump, &TruncationPolicy::default(), stream)?;
                Ok(((-tau).exp(), x_tau))
            }
            AffinePairLaw::Stopped { model, rule, policy } => {
                let (tau, x_tau) = stopped_integral(model, rule, policy, stream)?;
                Ok(((-tau).exp(), x_tau))
            }
            AffinePairLaw::CustomAffine { a, b, c_form } => {
                let a = a.sample(stream);
                let b = b.sample(stream);
                Ok(if *c_form { (a, a * b) } else { (a, b) })
            }
        }
    }
}

/// Monte Carlo estimate of `E log|A|`; negative means contractive.
pub fn estimate_log_contraction(law: &AffinePairLaw, n: usize, stream: &mut RngStream) -> Result<f64> {
    law.validate()?;
    if n == 0 {
        return Err(invalid("need at least one pair"));
    }
    let mut acc = 0.0;
    for _ in 0..n {
        let (a, _) = law.sample_pair(stream)?;
        acc += a.abs().ln();
    }
    Ok(acc / n as f64)
}

/// Runs the forward recursion `n_steps` times from `z0`.
///
/// Non-contractive laws are allowed; divergence shows up in the output.
pub fn iterate_to_stationarity(
    law: &AffinePairLaw,
    z0: f64,
    n_steps: usize,
    stream: &mut RngStream,
) -> Result<f64> {
    law.validate()?;
    if n_steps == 0 {
        return Err(invalid("n_steps must be at least 1"));
    }
    let mut z = z0;
    for _ in 0..n_steps {
        let (a, b) = law.sample_pair(stream)?;
        z = a * z + b;
    }
    Ok(z)
}

/// Step budget of [`sample_backward_series`].
pub const BACKWARD_SERIES_MAX_STEPS: usize = 100_000;

/// `Σ_{k≥1} B_k Π_{l<k} A_l`, stopped once `|Π_{l≤k} A_l| < tail_tol`.
///
/// The neglected remainder is exactly `Π_{l≤k} A_l` times an independent
/// stationary copy, so the output is stationary up to that factor.
pub fn sample_backward_series(law: &AffinePairLaw, tail_tol: f64, stream: &mut RngStream) -> Result<f64> {
    sample_backward_series_with_budget(law, tail_tol, BACKWARD_SERIES_MAX_STEPS, stream)
}

pub fn sample_backward_series_with_budget(
    law: &AffinePairLaw,
    tail_tol: f64,
    max_steps: usize,
    stream: &mut RngStream,
) -> Result<f64> {
    law.validate()?;
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return Err(invalid(format!("tail tolerance must lie in (0, 1), got {tail_tol}")));
    }
    let mut sum = 0.0;
    let mut product = 1.0;
    for _ in 0..max_steps {
        let (a, b) = law.sample_pair(stream)?;
        sum += product * b;
        product *= a;
        if product.abs() < tail_tol {
            return Ok(sum);
        }
    }
    Err(Error::NoContraction {
        tail_tol,
        steps: max_steps,
    })
}

/// The gamma series `Σ_n U_1^{1/α}⋯U_n^{1/α} γ^{(n)}_{1,λ}`.
pub fn gamma_series_law(alpha: f64, lambda: f64) -> AffinePairLaw {
    AffinePairLaw::BetaGamma {
        alpha,
        lambda,
        factor: DiscountFactor::PowerUniform,
    }
}

fn check_gamma(alpha: f64, lambda: f64) -> Result<GammaParams> {
    GammaParams::new(alpha, lambda)
}

/// `n` direct `γ_{α,λ}` draws and `n` draws of `U^{1/α} γ_{α+1,λ}`
/// (independent factors), from disjoint streams under `root`.
pub fn beta_gamma_identity_samples(
    alpha: f64,
    lambda: f64,
    n: usize,
    root: &RngStream,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let direct = check_gamma(alpha, lambda)?;
    let boosted = check_gamma(alpha + 1.0, lambda)?;
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    let lhs = par_samples(&root.derive_named("direct"), n, |s| sample_gamma(direct, s));
    let rhs = par_samples(&root.derive_named("beta-gamma"), n, |s| {
        let u = sample_uniform(s);
        u.powf(1.0 / alpha) * sample_gamma(boosted, s)
    });
    Ok((lhs, rhs))
}

/// `n` draws of `A (γ_{1,λ} + γ'_{α,λ})` with independent factors and `A`
/// drawn per `factor`.
pub fn first_jump_factor_samples(
    alpha: f64,
    lambda: f64,
    factor: DiscountFactor,
    n: usize,
    root: &RngStream,
) -> Result<Vec<f64>> {
    let g = check_gamma(alpha, lambda)?;
    Ok(par_samples(&root.derive_named("first-jump-factor"), n, |s| {
        let a = factor.sample(alpha, s);
        let c = sample_exponential(lambda, s);
        a * (c + sample_gamma(g, s))
    }))
}

/// Stopping rule used to turn `model` into an affine pair: the first jump
/// when the model jumps, otherwise an independent Exp(1) time (a first jump
/// never happens without jumps).
pub fn perpetuity_rule(model: &LevyModel) -> StoppingRule {
    if model.jump_rate > 0.0 {
        StoppingRule::FirstJump
    } else {
        StoppingRule::IndependentRandomTime {
            law: RandomTimeLaw::Exponential { rate: 1.0 },
        }
    }
}

/// Settings of [`selfdecomposable_as_perpetuity`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerpetuityCheck {
    pub n: usize,
    /// Fixed number of forward steps; `None` picks enough steps for
    /// `|Π A| < policy.tail_tol` on average, from a pilot estimate of `E log A`.
    pub n_steps: Option<usize>,
    pub significance: Significance,
}

impl PerpetuityCheck {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            n_steps: None,
            significance: Significance::Permille,
        }
    }
}

/// Forward chains with `(A, B) = (e^{-τ}, X_τ)` and the direct discounted
/// integral, compared by KS and means. The report also records the range
/// and spread of `A`.
pub struct PerpetuityOutcome {
    pub report: StatReport,
    pub stationary: Vec<f64>,
    pub direct: Vec<f64>,
    pub discounts: Vec<f64>,
    pub n_steps: usize,
}

pub fn selfdecomposable_as_perpetuity(
    model: &LevyModel,
    policy: &TruncationPolicy,
    check: PerpetuityCheck,
    root: &RngStream,
) -> Result<PerpetuityOutcome> {
    model.validate()?;
    policy.validate()?;
    let law = AffinePairLaw::Stopped {
        model: model.clone(),
        rule: perpetuity_rule(model),
        policy: *policy,
    };
    let n_steps = match check.n_steps {
        Some(k) => k.max(1),
        None => {
            let mut pilot = root.derive_named("pilot");
            let mean_log = estimate_log_contraction(&law, 2000, &mut pilot)?;
            if mean_log >= 0.0 {
                return Err(invalid(format!("pair law is not contractive: E log A ≈ {mean_log}")));
            }
            ((1.5 * policy.tail_tol.ln() / mean_log).ceil() as usize).clamp(16, 10_000)
        }
    };
    let discounts = try_par_samples(&root.derive_named("discounts"), check.n.min(10_000), |s| {
        law.sample_pair(s).map(|(a, _)| a)
    })?;
    let stationary = try_par_samples(&root.derive_named("chains"), check.n, |s| {
        iterate_to_stationarity(&law, 0.0, n_steps, s)
    })?;
    let direct = try_par_samples(&root.derive_named("direct"), check.n, |s| {
        sample_discounted_integral(model, policy, s)
    })?;

    let mut report = StatReport::new("selfdecomposable-as-perpetuity", root.seed());
    report.ks_compare(&stationary, &direct, check.significance)?;
    let gap = two_sample_mean_check("mean(chain) - mean(direct)", &stationary, &direct, 1.0);
    report.note("mean gap / SE", gap.value / gap.tolerance.unwrap_or(f64::NAN));
    let level = mean_check("mean(chain) vs E[Y(1)]", &stationary, model.mean_at_one(), 1.0);
    report.note("mean(chain) - E[Y(1)] / SE", (level.value - model.mean_at_one()) / level.tolerance.unwrap_or(f64::NAN));
    let in_unit = discounts.iter().all(|&a| (0.0..=1.0).contains(&a));
    report.push_check(Check::new("A in [0,1]", if in_unit { 1.0 } else { 0.0 }, 1.0, in_unit));
    let spread = {
        let m = discounts.iter().sum::<f64>() / discounts.len() as f64;
        discounts.iter().map(|a| (a - m).powi(2)).sum::<f64>() / discounts.len() as f64
    };
    report.push_check(Check::new("Var(A) > 0", spread, 0.0, spread > 0.0));
    report.note("n_steps", n_steps as f64);
    Ok(PerpetuityOutcome {
        report,
        stationary,
        direct,
        discounts,
        n_steps,
    })
}
