//! Experiment configuration: one JSON document per run.
//!
//! Parsing happens in two passes. The envelope (experiment name, seed,
//! sizes, truncation, output directory) is read first with unknown fields
//! rejected, then `params` is read into the parameter type of the chosen
//! experiment, again rejecting unknown fields. Every model, rule and matrix
//! is validated before any sampling starts.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use sdlevy::decomposition::{RandomTimeLaw, StoppingRule};
use sdlevy::discount::TruncationPolicy;
use sdlevy::levy::{JumpSet, LevyModel};
use sdlevy::operator::{OperatorDriver, OperatorModel};
use sdlevy::perpetuity::{AffinePairLaw, DiscountFactor};
use sdlevy::rng::{fnv1a, GammaParams};
use sdlevy::stats::{Significance, KS_MIN_SAMPLES};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    VerifyGammaBdlp,
    VerifyTheorem1,
    VerifyCorollary2Pathwise,
    VerifyCorollary3,
    VerifyProp1,
    PerpetuityIterate,
    OperatorDecompose,
    NullCalibration,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::VerifyGammaBdlp => "verify-gamma-bdlp",
            ExperimentKind::VerifyTheorem1 => "verify-theorem1",
            ExperimentKind::VerifyCorollary2Pathwise => "verify-corollary2-pathwise",
            ExperimentKind::VerifyCorollary3 => "verify-corollary3",
            ExperimentKind::VerifyProp1 => "verify-prop1",
            ExperimentKind::PerpetuityIterate => "perpetuity-iterate",
            ExperimentKind::OperatorDecompose => "operator-decompose",
            ExperimentKind::NullCalibration => "null-calibration",
        }
    }
}

fn default_n_samples() -> usize {
    100_000
}

fn default_significance() -> Significance {
    Significance::Permille
}

fn default_csv_rows() -> usize {
    10_000
}

/// The document as written by the user.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: ExperimentKind,
    seed: u64,
    #[serde(default = "default_n_samples")]
    n_samples: usize,
    #[serde(default = "default_significance")]
    significance: Significance,
    #[serde(default)]
    truncation: TruncationPolicy,
    #[serde(default)]
    out_dir: Option<PathBuf>,
    #[serde(default = "default_csv_rows")]
    csv_rows: usize,
    #[serde(default)]
    params: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaCase {
    pub alpha: f64,
    pub lambda: f64,
}

/// `{"alpha": .., "lambda": ..}` for one case or `{"cases": [..]}` for several.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GammaBdlpInput {
    alpha: Option<f64>,
    lambda: Option<f64>,
    cases: Option<Vec<GammaCase>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaBdlpParams {
    pub cases: Vec<GammaCase>,
}

fn default_model() -> LevyModel {
    LevyModel::gamma_bdlp(2.0, 1.0)
}

fn first_jump_only() -> Vec<StoppingRule> {
    vec![StoppingRule::FirstJump]
}

/// The five rule families with their default parameters.
pub fn standard_rules(fixed_time: f64) -> Vec<StoppingRule> {
    vec![
        StoppingRule::FixedTime { t: fixed_time },
        StoppingRule::FirstJump,
        StoppingRule::FirstJumpIn {
            set: JumpSet::AtLeast { a: 1.0 },
        },
        StoppingRule::KthJump { k: 3 },
        StoppingRule::IndependentRandomTime {
            law: RandomTimeLaw::Exponential { rate: 1.0 },
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem1Params {
    #[serde(default = "default_model")]
    pub model: LevyModel,
    #[serde(default = "first_jump_only")]
    pub rules: Vec<StoppingRule>,
}

fn corollary2_rules() -> Vec<StoppingRule> {
    standard_rules(0.7)
}

fn default_evaluator_paths() -> usize {
    10_000
}

fn default_evaluator_times() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corollary2Params {
    #[serde(default = "default_model")]
    pub model: LevyModel,
    #[serde(default = "corollary2_rules")]
    pub rules: Vec<StoppingRule>,
    /// Random compound-Poisson paths for the evaluator comparison (0 skips it).
    #[serde(default = "default_evaluator_paths")]
    pub evaluator_paths: usize,
    #[serde(default = "default_evaluator_times")]
    pub evaluator_times: usize,
}

fn default_set() -> JumpSet {
    JumpSet::AtLeast { a: 1.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corollary3Params {
    #[serde(default = "default_model")]
    pub model: LevyModel,
    #[serde(default = "default_set")]
    pub set: JumpSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prop1Part {
    /// `γ_{α,λ}` against `U^{1/α} γ_{α+1,λ}`.
    BetaGamma,
    /// `γ_{α,λ}` against `A (γ_{1,λ} + γ'_{α,λ})`.
    FirstJumpFactor,
    /// `γ_{α,λ}` against the backward series.
    Series,
}

fn default_alphas() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}

fn default_lambdas() -> Vec<f64> {
    vec![1.0, 3.0]
}

fn all_parts() -> Vec<Prop1Part> {
    vec![Prop1Part::BetaGamma, Prop1Part::FirstJumpFactor, Prop1Part::Series]
}

fn first_arrival() -> DiscountFactor {
    DiscountFactor::FirstArrival
}

fn default_series_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prop1Params {
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "all_parts")]
    pub parts: Vec<Prop1Part>,
    #[serde(default = "first_arrival")]
    pub factor: DiscountFactor,
    #[serde(default = "default_series_tol")]
    pub series_tail_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerpetuityReference {
    Gamma { shape: f64, rate: f64 },
    BackwardSeries { tail_tol: f64 },
}

fn default_perpetuity_models() -> Vec<LevyModel> {
    vec![LevyModel::gamma_bdlp(2.0, 1.0), LevyModel::gaussian(1.0)]
}

fn default_steps() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerpetuityParams {
    /// `(A, B) = (e^{-τ}, X_τ)` chains against the direct integral, per model.
    Selfdecomposable {
        #[serde(default = "default_perpetuity_models")]
        models: Vec<LevyModel>,
        #[serde(default)]
        n_steps: Option<usize>,
    },
    /// Forward chains of an explicit pair law against a reference sampler.
    Law {
        law: AffinePairLaw,
        #[serde(default = "default_steps")]
        n_steps: usize,
        #[serde(default)]
        z0: f64,
        reference: PerpetuityReference,
    },
}

impl Default for PerpetuityParams {
    fn default() -> Self {
        PerpetuityParams::Selfdecomposable {
            models: default_perpetuity_models(),
            n_steps: None,
        }
    }
}

fn default_q() -> Vec<Vec<f64>> {
    vec![vec![1.0, 0.0], vec![0.0, 2.0]]
}

fn default_driver() -> OperatorDriver {
    OperatorDriver::Independent {
        coordinates: vec![LevyModel::gamma_bdlp(2.0, 1.0), LevyModel::gamma_bdlp(1.0, 2.0)],
    }
}

fn operator_rules() -> Vec<StoppingRule> {
    standard_rules(0.7)
}

fn default_n_paths() -> usize {
    10_000
}

fn default_probes() -> Vec<Vec<Vec<f64>>> {
    vec![
        vec![vec![1.0, 0.0], vec![0.0, 0.0]],
        vec![vec![0.0, 1.0], vec![-1.0, 0.0]],
        vec![vec![1.0, 0.0], vec![0.0, -0.5]],
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorParams {
    /// `Q` as a list of rows.
    #[serde(default = "default_q")]
    pub q: Vec<Vec<f64>>,
    #[serde(default = "default_driver")]
    pub driver: OperatorDriver,
    #[serde(default = "operator_rules")]
    pub rules: Vec<StoppingRule>,
    /// Realizations per rule for the recombination check.
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    /// Matrices the spectral gate must refuse.
    #[serde(default = "default_probes")]
    pub gate_probes: Vec<Vec<Vec<f64>>>,
}

fn default_shape() -> f64 {
    2.0
}

fn default_rate() -> f64 {
    1.0
}

fn default_repetitions() -> usize {
    100
}

fn default_max_failures() -> usize {
    1
}

fn default_shifted_shape() -> f64 {
    2.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NullCalibrationParams {
    #[serde(default = "default_shape")]
    pub shape: f64,
    #[serde(default = "default_rate")]
    pub rate: f64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_max_failures")]
    pub max_failures: usize,
    /// Shape of the deliberately different law in the negative control.
    #[serde(default = "default_shifted_shape")]
    pub shifted_shape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Params {
    GammaBdlp(GammaBdlpParams),
    Theorem1(Theorem1Params),
    Corollary2(Corollary2Params),
    Corollary3(Corollary3Params),
    Prop1(Prop1Params),
    Perpetuity(PerpetuityParams),
    Operator(OperatorParams),
    NullCalibration(NullCalibrationParams),
}

/// A validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub n_samples: usize,
    pub significance: Significance,
    pub truncation: TruncationPolicy,
    pub csv_rows: usize,
    pub params: Params,
    /// Not part of the fingerprint: artifacts do not depend on where they go.
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}

fn schema(msg: impl std::fmt::Display) -> CliError {
    CliError::Config(msg.to_string())
}

fn params_of<T: for<'de> Deserialize<'de>>(kind: ExperimentKind, v: Value) -> Result<T, CliError> {
    let v = if v.is_null() { Value::Object(Default::default()) } else { v };
    serde_json::from_value(v).map_err(|e| schema(format!("params of {}: {e}", kind.name())))
}

fn check<T>(what: &str, r: sdlevy::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| schema(format!("{what}: {e}")))
}

fn positive(what: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(schema(format!("{what} must be positive, got {v}")))
    }
}

pub fn q_matrix(rows: &[Vec<f64>]) -> Result<(usize, Vec<f64>), CliError> {
    let d = rows.len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(schema("q must be a nonempty square list of rows"));
    }
    Ok((d, rows.concat()))
}

pub fn operator_model(p: &OperatorParams) -> Result<OperatorModel, CliError> {
    let (d, flat) = q_matrix(&p.q)?;
    check("operator model", OperatorModel::from_rows(d, &flat, p.driver.clone()))
}

fn validate_rules(rules: &[StoppingRule], model: Option<&LevyModel>) -> Result<(), CliError> {
    if rules.is_empty() {
        return Err(schema("rules must not be empty"));
    }
    for r in rules {
        check(&format!("rule {r}"), r.validate())?;
        if let (StoppingRule::FirstJumpIn { .. }, Some(m)) = (r, model) {
            if m.has_gaussian() {
                return Err(schema(format!("rule {r} needs a model without Gaussian part")));
            }
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let raw: RawConfig = serde_json::from_str(text).map_err(schema)?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawConfig) -> Result<Self, CliError> {
        let kind = raw.experiment;
        check("truncation", raw.truncation.validate())?;
        if raw.n_samples < KS_MIN_SAMPLES {
            return Err(schema(format!("n_samples must be at least {KS_MIN_SAMPLES}")));
        }
        let params = match kind {
            ExperimentKind::VerifyGammaBdlp => {
                let input: GammaBdlpInput = params_of(kind, raw.params)?;
                let cases = match (input.alpha, input.lambda, input.cases) {
                    (Some(alpha), Some(lambda), None) => vec![GammaCase { alpha, lambda }],
                    (None, None, Some(cases)) if !cases.is_empty() => cases,
                    (None, None, None) => vec![GammaCase { alpha: 2.0, lambda: 1.0 }],
                    _ => return Err(schema("give either alpha and lambda, or a nonempty cases list")),
                };
                for c in &cases {
                    check("gamma case", GammaParams::new(c.alpha, c.lambda))?;
                }
                Params::GammaBdlp(GammaBdlpParams { cases })
            }
            ExperimentKind::VerifyTheorem1 => {
                let p: Theorem1Params = params_of(kind, raw.params)?;
                check("model", p.model.validate())?;
                validate_rules(&p.rules, Some(&p.model))?;
                Params::Theorem1(p)
            }
            ExperimentKind::VerifyCorollary2Pathwise => {
                let p: Corollary2Params = params_of(kind, raw.params)?;
                check("model", p.model.validate())?;
                if !(p.rules.is_empty() && p.evaluator_paths > 0) {
                    validate_rules(&p.rules, Some(&p.model))?;
                }
                if p.evaluator_paths > 0 && p.evaluator_times == 0 {
                    return Err(schema("evaluator_times must be at least 1"));
                }
                Params::Corollary2(p)
            }
            ExperimentKind::VerifyCorollary3 => {
                let p: Corollary3Params = params_of(kind, raw.params)?;
                check("model", p.model.validate())?;
                if !p.model.is_purely_discontinuous() {
                    return Err(schema("verify-corollary3 needs a model without drift or Gaussian part"));
                }
                check("set", p.set.validate())?;
                Params::Corollary3(p)
            }
            ExperimentKind::VerifyProp1 => {
                let p: Prop1Params = params_of(kind, raw.params)?;
                if p.alphas.is_empty() || p.lambdas.is_empty() || p.parts.is_empty() {
                    return Err(schema("alphas, lambdas and parts must be nonempty"));
                }
                for &a in &p.alphas {
                    positive("alpha", a)?;
                }
                for &l in &p.lambdas {
                    positive("lambda", l)?;
                }
                if !(p.series_tail_tol > 0.0 && p.series_tail_tol < 1.0) {
                    return Err(schema("series_tail_tol must lie in (0, 1)"));
                }
                Params::Prop1(p)
            }
            ExperimentKind::PerpetuityIterate => {
                let empty = raw.params.is_null() || raw.params.as_object().is_some_and(|o| o.is_empty());
                let p: PerpetuityParams = if empty {
                    PerpetuityParams::default()
                } else {
                    params_of(kind, raw.params)?
                };
                match &p {
                    PerpetuityParams::Selfdecomposable { models, n_steps } => {
                        if models.is_empty() {
                            return Err(schema("models must not be empty"));
                        }
                        for m in models {
                            check("model", m.validate())?;
                        }
                        if *n_steps == Some(0) {
                            return Err(schema("n_steps must be at least 1"));
                        }
                    }
                    PerpetuityParams::Law {
                        law, n_steps, reference, ..
                    } => {
                        check("law", law.validate())?;
                        if *n_steps == 0 {
                            return Err(schema("n_steps must be at least 1"));
                        }
                        match reference {
                            PerpetuityReference::Gamma { shape, rate } => {
                                check("reference", GammaParams::new(*shape, *rate))?;
                            }
                            PerpetuityReference::BackwardSeries { tail_tol } => {
                                if !(*tail_tol > 0.0 && *tail_tol < 1.0) {
                                    return Err(schema("tail_tol must lie in (0, 1)"));
                                }
                            }
                        }
                    }
                }
                Params::Perpetuity(p)
            }
            ExperimentKind::OperatorDecompose => {
                let p: OperatorParams = params_of(kind, raw.params)?;
                operator_model(&p)?;
                validate_rules(&p.rules, None)?;
                for probe in &p.gate_probes {
                    q_matrix(probe)?;
                }
                Params::Operator(p)
            }
            ExperimentKind::NullCalibration => {
                let p: NullCalibrationParams = params_of(kind, raw.params)?;
                check("law", GammaParams::new(p.shape, p.rate))?;
                check("shifted law", GammaParams::new(p.shifted_shape, p.rate))?;
                if p.repetitions == 0 {
                    return Err(schema("repetitions must be at least 1"));
                }
                Params::NullCalibration(p)
            }
        };
        Ok(Self {
            experiment: kind,
            seed: raw.seed,
            n_samples: raw.n_samples,
            significance: raw.significance,
            truncation: raw.truncation,
            csv_rows: raw.csv_rows,
            params,
            out_dir: raw.out_dir,
        })
    }

    /// Hex FNV-1a digest of the normalized configuration (output directory excluded).
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a(canonical.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_json(r#"{"experiment":"verify-gamma-bdlp","seed":7}"#).unwrap();
        assert_eq!(c.n_samples, 100_000);
        assert_eq!(c.significance, Significance::Permille);
        assert_eq!(
            c.params,
            Params::GammaBdlp(GammaBdlpParams {
                cases: vec![GammaCase { alpha: 2.0, lambda: 1.0 }]
            })
        );
    }

    #[test]
    fn unknown_fields_rejected() {
        let top = ExperimentConfig::from_json(r#"{"experiment":"verify-prop1","seed":1,"bogus":1}"#);
        assert!(matches!(top, Err(CliError::Config(_))));
        let inner = ExperimentConfig::from_json(r#"{"experiment":"verify-prop1","seed":1,"params":{"alpha":1}}"#);
        assert!(matches!(inner, Err(CliError::Config(_))));
        let name = ExperimentConfig::from_json(r#"{"experiment":"verify-everything","seed":1}"#);
        assert!(matches!(name, Err(CliError::Config(_))));
    }

    #[test]
    fn semantic_validation() {
        for bad in [
            r#"{"experiment":"verify-gamma-bdlp","seed":1,"params":{"alpha":-1,"lambda":1}}"#,
            r#"{"experiment":"verify-gamma-bdlp","seed":1,"params":{"alpha":1}}"#,
            r#"{"experiment":"verify-gamma-bdlp","seed":1,"significance":0.05}"#,
            r#"{"experiment":"verify-gamma-bdlp","seed":1,"n_samples":10}"#,
            r#"{"experiment":"operator-decompose","seed":1,"params":{"q":[[1,0],[0,0]]}}"#,
            r#"{"experiment":"verify-theorem1","seed":1,"params":{"rules":[{"kind":"kth_jump","k":0}]}}"#,
            r#"{"experiment":"verify-corollary3","seed":1,"params":{"set":{"kind":"at_least","a":0}}}"#,
            r#"{"experiment":"verify-theorem1","seed":1,"params":{"model":{"gauss_var":1},"rules":[{"kind":"first_jump_in","set":{"kind":"at_least","a":1}}]}}"#,
        ] {
            assert!(matches!(ExperimentConfig::from_json(bad), Err(CliError::Config(_))), "{bad}");
        }
    }

    #[test]
    fn fingerprint_ignores_out_dir_but_not_seed() {
        let a = ExperimentConfig::from_json(r#"{"experiment":"null-calibration","seed":3,"out_dir":"x"}"#).unwrap();
        let b = ExperimentConfig::from_json(r#"{"experiment":"null-calibration","seed":3,"out_dir":"y"}"#).unwrap();
        let c = ExperimentConfig::from_json(r#"{"experiment":"null-calibration","seed":4}"#).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn perpetuity_modes() {
        let d = ExperimentConfig::from_json(r#"{"experiment":"perpetuity-iterate","seed":1}"#).unwrap();
        assert_eq!(d.params, Params::Perpetuity(PerpetuityParams::default()));
        let law = r#"{"experiment":"perpetuity-iterate","seed":1,"params":{"mode":"law",
            "law":{"kind":"beta_gamma","alpha":2,"lambda":1},"reference":{"kind":"gamma","shape":2,"rate":1}}}"#;
        let c = ExperimentConfig::from_json(law).unwrap();
        assert!(matches!(c.params, Params::Perpetuity(PerpetuityParams::Law { n_steps: 200, .. })));
    }
}
